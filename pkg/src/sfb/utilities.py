"""General-utility objectives over marginal occupancies.

Objectives are scored in their natural units by :func:`exact_eval` and
:func:`sample_eval` (so ``kl_to_expert`` returns a divergence, to be
minimized). :meth:`UtilityObjective.utility` turns a raw value into a
"higher is better" utility, which is what search and normalization use.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation
from .knn import knn_entropy, knn_kl
from .mdp import StochasticPolicy, TabularMdp, hard_value_iteration, row_entropy, successor_measure

KINDS = ("linear", "goal", "kl_to_expert", "entropy", "robust_min", "constrained")
SUPPORTS = ("state", "state_action")
INFINITE_DIVERGENCE = math.inf
EXPERT_SMOOTHING = 1e-9
KNN_K = 3
MAX_BRUTE_FORCE = 10**7


@dataclass(frozen=True, eq=False)
class UtilityObjective:
    """A scalar function of the marginal occupancy.

    ``reward`` serves ``linear``, ``goal`` and ``constrained``; ``rewards`` the
    terms of ``robust_min``; ``expert`` (and optionally ``expert_samples`` for
    the KNN estimator) ``kl_to_expert``. ``log_volume`` converts discrete
    state entropies into differential entropies of the cell-uniform lift.
    """

    kind: str
    support: str = "state"
    reward: np.ndarray | None = None
    rewards: tuple = ()
    expert: np.ndarray | None = None
    expert_samples: np.ndarray | None = None
    expert_empirical: bool = False
    threshold: float | None = None
    penalty: float = 10.0
    strict: bool = False
    floor: float = 0.0
    log_volume: float = 0.0
    name: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractViolation(f"unknown objective kind {self.kind!r}")
        if self.support not in SUPPORTS:
            raise ContractViolation(f"support must be one of {SUPPORTS}")
        if self.kind in ("linear", "goal", "constrained") and self.reward is None:
            raise ContractViolation(f"{self.kind} objective needs a reward")
        if self.kind == "constrained" and self.threshold is None:
            raise ContractViolation("constrained objective needs a threshold")
        if self.kind == "robust_min" and len(self.rewards) < 1:
            raise ContractViolation("robust_min objective needs at least one reward")
        if self.kind == "kl_to_expert":
            if self.expert is None:
                raise ContractViolation("kl_to_expert objective needs an expert measure")
            q = np.asarray(self.expert, dtype=float)
            if np.any(q < 0) or abs(q.sum() - 1.0) > 1e-9:
                raise ContractViolation("expert measure must be a probability vector")
            if self.expert_empirical:
                q = (q + EXPERT_SMOOTHING / q.size) / (1.0 + EXPERT_SMOOTHING)
            object.__setattr__(self, "expert", q)
        if self.reward is not None:
            object.__setattr__(self, "reward", np.asarray(self.reward, dtype=float))
        object.__setattr__(self, "rewards", tuple(np.asarray(r, dtype=float) for r in self.rewards))

    @property
    def maximize(self) -> bool:
        return self.kind != "kl_to_expert"

    def utility(self, raw: float) -> float:
        return raw if self.maximize else -raw

    def vector(self, measure) -> np.ndarray:
        """The occupancy this objective reads: state or state-action marginal."""
        return np.asarray(measure.state_marginal if self.support == "state" else measure.marginal)

    def evaluate_batch(self, vecs: np.ndarray) -> np.ndarray:
        """Raw values for a stack ``(N, n)`` of occupancy vectors."""
        vecs = np.atleast_2d(np.asarray(vecs, dtype=float))
        kind = self.kind
        if kind in ("linear", "goal"):
            return vecs @ self.reward
        if kind == "entropy":
            return row_entropy(vecs) + self.log_volume
        if kind == "robust_min":
            return np.min(np.stack([vecs @ r for r in self.rewards]), axis=0)
        if kind == "constrained":
            v = vecs @ self.reward
            violation = np.maximum(v - self.threshold, 0.0)
            if self.strict:
                return np.where(violation > 0, self.floor, v)
            return v - self.penalty * violation
        q = self.expert
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(vecs > 0, vecs * np.log(vecs / q), 0.0)
        kl = terms.sum(axis=1)
        impossible = np.any((vecs > 0) & (q == 0), axis=1)
        return np.where(impossible, INFINITE_DIVERGENCE, np.maximum(kl, 0.0))


def exact_eval(obj: UtilityObjective, measure) -> float:
    """Raw objective value on a (true or estimated) marginal occupancy."""
    return float(obj.evaluate_batch(obj.vector(measure))[0])


def _sample_index(obj: UtilityObjective, samples, n_actions: int | None) -> np.ndarray:
    if obj.support == "state":
        return samples.states
    if n_actions is None:
        raise ContractViolation("state-action objectives need n_actions to index samples")
    return samples.states * n_actions + samples.actions


def _plugin(obj, idx, size):
    freq = np.bincount(idx, minlength=size) / idx.size
    return float(obj.evaluate_batch(freq)[0])


def sample_eval(obj: UtilityObjective, samples, n_actions: int | None = None, k: int = KNN_K) -> float:
    """Sample-based estimate of the raw objective value.

    Reward-type kinds use Monte-Carlo means. Entropy and KL use KNN estimators
    on the 2-D lifted coordinates when present; without coordinates (purely
    discrete supports) the plug-in estimate on empirical frequencies is used.
    """
    if len(samples) < 1:
        raise ContractViolation("no samples")
    idx = _sample_index(obj, samples, n_actions)
    kind = obj.kind
    if kind in ("linear", "goal", "constrained"):
        v = float(np.mean(obj.reward[idx]))
        if kind != "constrained":
            return v
        violation = max(v - obj.threshold, 0.0)
        if obj.strict:
            return obj.floor if violation > 0 else v
        return v - obj.penalty * violation
    if kind == "robust_min":
        return float(min(np.mean(r[idx]) for r in obj.rewards))
    coords = getattr(samples, "coords", None)
    if kind == "entropy":
        if coords is not None and obj.support == "state":
            return knn_entropy(coords, k)
        if len(samples) < k + 1:
            raise ContractViolation(f"need at least {k + 1} samples")
        freq = np.bincount(idx) / idx.size
        return float(row_entropy(freq)) + obj.log_volume
    if coords is not None and obj.expert_samples is not None and obj.support == "state":
        return knn_kl(coords, obj.expert_samples, k)
    if len(samples) < k + 1:
        raise ContractViolation(f"need at least {k + 1} samples")
    return _plugin(obj, idx, obj.expert.size)


@dataclass(frozen=True)
class ScoreNormalizer:
    """Affine map of utilities onto ``[0, 1]`` (clipped)."""

    min_score: float
    max_score: float

    def __post_init__(self):
        if not (np.isfinite(self.min_score) and np.isfinite(self.max_score)):
            raise ContractViolation("normalizer bounds must be finite")
        if not self.max_score > self.min_score:
            raise ContractViolation(f"max_score {self.max_score} must exceed min_score {self.min_score}")


def normalize(norm: ScoreNormalizer, raw: float) -> float:
    """``(raw - min) / (max - min)`` clipped to ``[0, 1]``; ``raw`` is a utility."""
    if math.isnan(raw):
        raise ContractViolation("cannot normalize NaN")
    return float(np.clip((raw - norm.min_score) / (norm.max_score - norm.min_score), 0.0, 1.0))


def _occupancies(mdp: TabularMdp, probs: np.ndarray):
    """Batched marginals for policies ``(N, S, A)``: returns (state (N, S), pair (N, S*A))."""
    gamma = mdp.discount
    P_pi = np.einsum("nsa,sat->nst", probs, mdp.transition)
    eye = np.eye(mdp.n_states)
    lhs = np.swapaxes(eye - gamma * P_pi, 1, 2)
    rhs = np.broadcast_to((1.0 - gamma) * mdp.initial_dist, (probs.shape[0], mdp.n_states))
    d = np.linalg.solve(lhs, rhs[..., None])[..., 0]
    return d, (d[:, :, None] * probs).reshape(probs.shape[0], -1)


def policy_utilities(obj: UtilityObjective, mdp: TabularMdp, probs: np.ndarray) -> np.ndarray:
    """Utilities of a stack of policies ``(N, S, A)`` under their exact occupancies."""
    d, pairs = _occupancies(mdp, np.asarray(probs, dtype=float))
    raw = obj.evaluate_batch(d if obj.support == "state" else pairs)
    return raw if obj.maximize else -raw


def simplex_grid(n_actions: int, resolution: int) -> np.ndarray:
    """All distributions over ``n_actions`` with entries in multiples of ``1/(resolution-1)``."""
    if resolution < 2:
        raise ContractViolation("grid_resolution must be at least 2")
    m = resolution - 1
    pts = [c for c in itertools.product(range(m + 1), repeat=n_actions - 1) if sum(c) <= m]
    arr = np.array([list(c) + [m - sum(c)] for c in pts], dtype=float) / m
    return arr


def brute_force_size(n_states: int, n_actions: int, resolution: int) -> int:
    return math.comb(resolution - 1 + n_actions - 1, n_actions - 1) ** n_states


def brute_force_optimum(obj: UtilityObjective, mdp: TabularMdp, grid_resolution: int,
                        chunk: int = 20_000):
    """Exhaustive search over the product of per-state simplex grids.

    Returns ``(raw value, policy)`` of the best grid policy (first one on
    ties). Grids with resolutions ``r`` and ``r'`` are nested when
    ``(r - 1)`` divides ``(r' - 1)``, which is when the optimum is monotone.
    """
    size = brute_force_size(mdp.n_states, mdp.n_actions, grid_resolution)
    if size > MAX_BRUTE_FORCE:
        raise ContractViolation(f"policy grid has {size} points (limit {MAX_BRUTE_FORCE})")
    rows = simplex_grid(mdp.n_actions, grid_resolution)
    n_rows, S = rows.shape[0], mdp.n_states
    best_u, best_idx = -math.inf, 0
    for start in range(0, size, chunk):
        flat = np.arange(start, min(start + chunk, size))
        digits = np.stack(np.unravel_index(flat, (n_rows,) * S), axis=1)
        probs = rows[digits]
        u = policy_utilities(obj, mdp, probs)
        i = int(np.argmax(u))
        if u[i] > best_u:
            best_u, best_idx = float(u[i]), int(flat[i])
    digits = np.unravel_index(best_idx, (n_rows,) * S)
    policy = StochasticPolicy(rows[list(digits)])
    return exact_eval(obj, successor_measure(mdp, policy, with_matrix=False)), policy


def vertex_policies(obj: UtilityObjective, mdp: TabularMdp) -> np.ndarray:
    """A set of deterministic policies used to bracket the minimum utility.

    Constant-action policies, greedy policies for reaching each single state,
    and greedy policies for the objective's rewards and their negations.
    """
    S, A = mdp.n_states, mdp.n_actions
    out = [np.eye(A)[np.full(S, a)] for a in range(A)]
    rewards = [np.eye(S)[g] for g in range(S)]
    base = [obj.reward] if obj.reward is not None else []
    for r in base + list(obj.rewards):
        rewards.extend([r, -r])
    for r in rewards:
        if r.size == S:
            r = np.repeat(r[:, None], A, axis=1)
        _, pol = hard_value_iteration(mdp, r.reshape(S, A))
        out.append(pol.probs)
    return np.unique(np.stack(out), axis=0)


def _maximize_convex(obj: UtilityObjective, mdp: TabularMdp):
    """Maximize the (concave) utility over the occupancy polytope; returns the pair occupancy."""
    import cvxpy as cp

    S, A, gamma = mdp.n_states, mdp.n_actions, mdp.discount
    x = cp.Variable(S * A, nonneg=True)
    flow_in = mdp.transition.reshape(S * A, S).T
    collapse = np.kron(np.eye(S), np.ones((1, A)))
    constraints = [collapse @ x == (1.0 - gamma) * mdp.initial_dist + gamma * flow_in @ x]
    vec = collapse @ x if obj.support == "state" else x
    kind = obj.kind
    if kind in ("linear", "goal"):
        expr = obj.reward @ vec
    elif kind == "entropy":
        expr = cp.sum(cp.entr(vec))
    elif kind == "robust_min":
        expr = cp.min(cp.hstack([r @ vec for r in obj.rewards]))
    elif kind == "constrained":
        v = obj.reward @ vec
        if obj.strict:
            expr = v
            constraints.append(v <= obj.threshold)
        else:
            expr = v - obj.penalty * cp.pos(v - obj.threshold)
    else:
        q = obj.expert
        pos = q > 0
        expr = cp.sum(cp.entr(vec[np.flatnonzero(pos)])) + np.log(q[pos]) @ vec[np.flatnonzero(pos)]
        if not pos.all():
            constraints.append(vec[np.flatnonzero(~pos)] == 0)
    cp.Problem(cp.Maximize(expr), constraints).solve()
    if x.value is None:
        raise ContractViolation(f"could not maximize {obj.name or obj.kind} over occupancies")
    return np.maximum(np.asarray(x.value), 0.0)


def compute_normalizer(obj: UtilityObjective, mdp: TabularMdp) -> ScoreNormalizer:
    """Utility bounds for ``obj`` on ``mdp``.

    The maximum is found by convex optimization over occupancies and then
    re-evaluated exactly for the policy it induces (so the bound is attained).
    The minimum is taken over :func:`vertex_policies` with finite utility.
    """
    S, A = mdp.n_states, mdp.n_actions
    x = _maximize_convex(obj, mdp).reshape(S, A)
    mass = x.sum(axis=1, keepdims=True)
    probs = np.where(mass > 1e-12, x / np.where(mass > 0, mass, 1.0), 1.0 / A)
    probs /= probs.sum(axis=1, keepdims=True)
    vertices = vertex_policies(obj, mdp)
    candidates = np.concatenate([probs[None], vertices])
    u = policy_utilities(obj, mdp, candidates)
    finite = u[np.isfinite(u)]
    return ScoreNormalizer(float(finite.min()), float(finite.max()))
