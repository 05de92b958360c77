"""Inference-time successor-measure estimates.

Three kinds are produced, all as :class:`MeasureEstimate`:

* ``exact``: the true successor measure of ``pi_z`` (needs the MDP).
* ``implicit``: importance weights ``F^T B`` from the FB model itself.
* ``explicit``: a separately fitted tabular model of the discounted
  next-state distribution, learned by TD regression on the dataset.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .dataset import (  # noqa: F401  (re-exported)
    TransitionBatch,
    TransitionDataset,
    collect_dataset,
    load_dataset,
    save_dataset,
)
from .errors import ContractViolation, DegenerateMeasureError, TrainingDiverged
from .fb.exact import ExactFB
from .fb.model import FbModel
from .fb.policy import SoftPolicyFamily
from .mdp import StochasticPolicy, TabularMdp, successor_measure


@dataclass(frozen=True, eq=False)
class MeasureEstimate:
    """Estimated marginal occupancy of ``pi_z``.

    ``marginal`` is flat over ``(s, a)`` pairs (index ``s * A + a``), matching
    :class:`~sfb.mdp.SuccessorMeasure`, so objectives evaluate either.
    """

    kind: str
    state_marginal: np.ndarray
    marginal: np.ndarray
    n_actions: int
    coords: np.ndarray | None = None
    cell_width: float | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("state_marginal", "marginal"):
            arr = np.array(getattr(self, name), dtype=float)
            if np.any(arr < 0) or abs(arr.sum() - 1.0) > 1e-9:
                raise ContractViolation(f"{name} must be a probability vector")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def sa_marginal(self) -> np.ndarray:
        return self.marginal

    def marginal_sa(self, n_actions: int | None = None) -> np.ndarray:
        return self.marginal.reshape(-1, self.n_actions if n_actions is None else n_actions)


@dataclass(frozen=True, eq=False)
class MeasureSamples:
    """Draws from a measure estimate; ``coords`` holds the 2-D lift when available."""

    states: np.ndarray
    actions: np.ndarray
    coords: np.ndarray | None = None

    def __len__(self) -> int:
        return self.states.size


def _from_state_marginal(kind, state_marginal, policy: StochasticPolicy, env=None, **meta):
    sm = np.asarray(state_marginal, dtype=float)
    return MeasureEstimate(kind, sm, (sm[:, None] * policy.probs).ravel(), policy.n_actions,
                           coords=getattr(env, "coords", None),
                           cell_width=getattr(env, "cell_width", None), metadata=meta)


def exact_measure(family: SoftPolicyFamily, z, mdp: TabularMdp, env=None) -> MeasureEstimate:
    policy = family.policy(z)
    occ = successor_measure(mdp, policy, with_matrix=False)
    return _from_state_marginal("exact", occ.state_marginal, policy, env, clamped=policy.clamped)


def _clamp_normalize(weights: np.ndarray) -> tuple[np.ndarray, int]:
    n_negative = int(np.sum(weights < 0))
    w = np.maximum(weights, 0.0)
    total = w.sum()
    if not total > 0:
        raise DegenerateMeasureError("degenerate implicit measure: every weight clamped to zero")
    return w / total, n_negative


def implicit_measure(model, z, mdp: TabularMdp, mode: str = "soft", env=None) -> MeasureEstimate:
    """Importance-weight measure estimate from ``F^T B``.

    Weights ``E_{s0 ~ mu0, a0 ~ pi_z}[F(s0, a0, z)^T B(.)]`` (times ``rho``
    for learned models) are clamped at zero and renormalized. Exact models
    carry state-action columns and give the marginal directly. Learned models
    estimate the discounted next-state distribution, so the start term is
    added back: ``(1 - gamma) mu0 + gamma * w``.
    """
    z = np.asarray(z, dtype=float)
    policy = model.policy(z, mode=mode)
    mu0 = mdp.initial_dist
    start = np.flatnonzero(mu0)
    if isinstance(model, ExactFB):
        F = model.forward(z, mode)[start]
        f0 = np.einsum("s,sa,sad->d", mu0[start], policy.probs[start], F)
        w, n_neg = _clamp_normalize(f0 @ model.B)
        marginal = w
        state_marginal = w.reshape(mdp.n_states, mdp.n_actions).sum(axis=1)
        return MeasureEstimate("implicit", state_marginal, marginal, mdp.n_actions,
                               coords=getattr(env, "coords", None),
                               cell_width=getattr(env, "cell_width", None),
                               metadata={"clamped_weights": n_neg, "clamped": policy.clamped})
    if not isinstance(model, FbModel):
        raise ContractViolation(f"unsupported model type {type(model).__name__}")
    F = model.forward(z, states=start)
    f0 = np.einsum("s,sa,sad->d", mu0[start], policy.probs[start], F)
    w, n_neg = _clamp_normalize((f0 @ model.backward) * model.rho)
    gamma = mdp.discount
    state_marginal = (1.0 - gamma) * mu0 + gamma * w
    return _from_state_marginal("implicit", state_marginal, policy, env,
                                clamped_weights=n_neg, clamped=policy.clamped)


@dataclass(frozen=True)
class ExplicitConfig:
    """Full-batch TD regression settings for the explicit measure model.

    Each iteration moves every row ``lr`` of the way to its TD target and then
    Polyak-updates the target table with ``polyak``.
    """

    lr: float = 1.0
    polyak: float = 1.0
    max_iter: int = 2000
    tol: float = 1e-10

    def __post_init__(self):
        if not 0.0 < self.lr <= 1.0 or not 0.0 < self.polyak <= 1.0:
            raise ContractViolation("lr and polyak must lie in (0, 1]")
        if self.max_iter < 1 or self.tol <= 0:
            raise ContractViolation("max_iter must be >= 1 and tol > 0")


class ExplicitMeasureModel:
    """Tabular measure ``m(s' | s, a, z)`` of discounted next states.

    Dynamics come from dataset counts; pairs never observed in the data back
    off to the pooled next-state distribution of their state, and unseen
    states to a self-loop. For each queried ``z`` the table is fitted by the
    TD recursion ``m <- (1 - gamma) delta_{s'} + gamma m_bar(. | s', a' ~ pi_z)``
    and memoized (least recently used tables are evicted past ``cache_size``).
    """

    def __init__(self, n_states: int, n_actions: int, initial_dist, discount: float,
                 dataset: TransitionDataset, family: SoftPolicyFamily, config: ExplicitConfig,
                 cache_size: int = 32):
        if len(dataset) == 0:
            raise ContractViolation("dataset is empty")
        self.n_states, self.n_actions = n_states, n_actions
        self.initial_dist = np.asarray(initial_dist, dtype=float)
        self.discount = float(discount)
        self.family = family
        self.config = config
        counts = dataset.pair_counts()
        pair_total = counts.sum(axis=2, keepdims=True)
        state_counts = counts.sum(axis=1)
        state_total = state_counts.sum(axis=1, keepdims=True)
        pooled = np.where(state_total > 0, state_counts / np.maximum(state_total, 1), np.eye(n_states))
        P_hat = np.where(pair_total > 0, counts / np.maximum(pair_total, 1), pooled[:, None, :])
        self.n_backoff_pairs = int(np.sum(pair_total == 0))
        self.P_hat = sp.csr_matrix(P_hat.reshape(n_states * n_actions, n_states))
        self._base = (1.0 - self.discount) * P_hat.reshape(n_states * n_actions, n_states)
        self._cache: OrderedDict[bytes, np.ndarray] = OrderedDict()
        self.cache_size = cache_size

    def fit(self, z) -> np.ndarray:
        """Fitted table ``m`` of shape ``(S * A, S)``; rows are distributions."""
        z = np.ascontiguousarray(z, dtype=float)
        key = z.tobytes()
        if key in self._cache:
            self._cache.move_to_end(key)
            return self._cache[key]
        S, A, gamma = self.n_states, self.n_actions, self.discount
        cfg = self.config
        pi = self.family.policy(z).probs
        base = self._base
        m = np.zeros((S * A, S))
        m_bar = m.copy()
        for _ in range(cfg.max_iter):
            v = np.einsum("sa,sak->sk", pi, m_bar.reshape(S, A, S))
            target = base + gamma * (self.P_hat @ v)
            step = target - m
            m += cfg.lr * step
            m_bar += cfg.polyak * (m - m_bar)
            if not np.all(np.isfinite(m)):
                raise TrainingDiverged(-1, {"explicit_td": float(np.abs(step).max())})
            if np.abs(step).max() <= cfg.tol:
                break
        m = np.maximum(m, 0.0)
        m /= m.sum(axis=1, keepdims=True)
        m.setflags(write=False)
        self._cache[key] = m
        if len(self._cache) > self.cache_size:
            self._cache.popitem(last=False)
        return m

    def sa_measure_from(self, s: int, a: int, z) -> np.ndarray:
        """Normalized successor measure over ``(s', a')`` pairs starting from ``(s, a)``."""
        S, A, gamma = self.n_states, self.n_actions, self.discount
        pi = self.family.policy(z).probs
        nxt = self.fit(z)[s * A + a]
        out = gamma * (nxt[:, None] * pi)
        out[s, a] += 1.0 - gamma
        return out.ravel()

    def estimate(self, z, env=None) -> MeasureEstimate:
        S, A, gamma = self.n_states, self.n_actions, self.discount
        policy = self.family.policy(z)
        m = self.fit(z).reshape(S, A, S)
        mu0 = self.initial_dist
        nxt = np.einsum("s,sa,sak->k", mu0, policy.probs, m)
        state_marginal = (1.0 - gamma) * mu0 + gamma * nxt
        return _from_state_marginal("explicit", state_marginal, policy, env,
                                    backoff_pairs=self.n_backoff_pairs, clamped=policy.clamped)


def explicit_measure_train(mdp: TabularMdp, dataset: TransitionDataset, policy_family: SoftPolicyFamily,
                           config: ExplicitConfig | None = None) -> ExplicitMeasureModel:
    """Build the explicit measure model.

    Only the dimensions, ``mu0`` and ``gamma`` of ``mdp`` are used; the
    dynamics are those observed in ``dataset``.
    """
    return ExplicitMeasureModel(mdp.n_states, mdp.n_actions, mdp.initial_dist, mdp.discount,
                                dataset, policy_family, config or ExplicitConfig())


def sample_measure(est: MeasureEstimate, n: int, seed) -> MeasureSamples:
    """I.i.d. ``(s, a)`` draws; states with cell geometry get a uniform point in their cell."""
    if n < 1:
        raise ContractViolation("n must be at least 1")
    rng = np.random.default_rng(seed)
    flat = rng.choice(est.marginal.size, size=n, p=est.marginal)
    states, actions = np.divmod(flat, est.n_actions)
    coords = None
    if est.coords is not None:
        half = 0.5 * est.cell_width
        coords = est.coords[states] + rng.uniform(-half, half, size=(n, est.coords.shape[1]))
    return MeasureSamples(states, actions, coords)
