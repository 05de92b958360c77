"""Tabular MDPs, successor measures and exact optimal-control oracles.

Everything in here is exact (dense linear algebra or value iteration run to a
sup-norm residual of ``tol``) and is used as ground truth by the rest of the
package. Successor measures use the ``(1 - gamma)`` normalization, so every
row of a successor matrix is a probability distribution.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import ContractViolation, ConvergenceError

MAX_SA_PAIRS = 4096
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000


def _frozen(x, dtype=float):
    arr = np.array(x, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """Reward-free MDP ``(S, A, P, mu0, gamma)`` with ``P[s, a, s']``."""

    transition: np.ndarray
    initial_dist: np.ndarray
    discount: float

    def __post_init__(self):
        P = _frozen(self.transition)
        mu0 = _frozen(self.initial_dist)
        if P.ndim != 3 or P.shape[0] != P.shape[2] or min(P.shape) < 1:
            raise ContractViolation(f"transition must have shape (S, A, S), got {P.shape}")
        if not np.all(np.isfinite(P)) or np.any(P < 0):
            raise ContractViolation("transition probabilities must be finite and non-negative")
        row_err = np.abs(P.sum(axis=2) - 1.0).max()
        if row_err > 1e-12:
            raise ContractViolation(f"transition rows must sum to 1 (max error {row_err:.2e})")
        if mu0.shape != (P.shape[0],):
            raise ContractViolation(f"initial_dist must have shape ({P.shape[0]},)")
        if np.any(mu0 < 0) or abs(mu0.sum() - 1.0) > 1e-12:
            raise ContractViolation("initial_dist must be a probability vector")
        gamma = float(self.discount)
        if not 0.0 < gamma < 1.0:
            raise ContractViolation(f"discount must lie in (0, 1), got {gamma}")
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "initial_dist", mu0)
        object.__setattr__(self, "discount", gamma)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def n_pairs(self) -> int:
        return self.n_states * self.n_actions

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "transition": self.transition.tolist(),
            "initial_dist": self.initial_dist.tolist(),
            "discount": self.discount,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TabularMdp":
        mdp = cls(np.asarray(doc["transition"], dtype=float),
                  np.asarray(doc["initial_dist"], dtype=float),
                  float(doc["discount"]))
        if (mdp.n_states, mdp.n_actions) != (doc["n_states"], doc["n_actions"]):
            raise ContractViolation("declared n_states/n_actions disagree with transition shape")
        return mdp


def save_mdp(mdp: TabularMdp, path) -> None:
    # json emits repr() floats, which round-trip exactly
    Path(path).write_text(json.dumps(mdp.to_dict()))


def load_mdp(path) -> TabularMdp:
    return TabularMdp.from_dict(json.loads(Path(path).read_text()))


def row_entropy(probs: np.ndarray) -> np.ndarray:
    """Shannon entropy (nats) of each row, with 0 log 0 = 0."""
    p = np.asarray(probs, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log(p), 0.0)
    return terms.sum(axis=-1)


@dataclass(frozen=True, eq=False)
class StochasticPolicy:
    """Per-state action distribution ``probs[s, a]``.

    ``clamped`` marks policies produced at the temperature clamp of a soft
    policy (they are then greedy).
    """

    probs: np.ndarray
    clamped: bool = False

    def __post_init__(self):
        p = _frozen(self.probs)
        if p.ndim != 2:
            raise ContractViolation(f"policy must be a (S, A) matrix, got shape {p.shape}")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ContractViolation("policy probabilities must be finite and non-negative")
        err = np.abs(p.sum(axis=1) - 1.0).max()
        if err > 1e-12:
            raise ContractViolation(f"policy rows must sum to 1 (max error {err:.2e})")
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_unnormalized(cls, weights, clamped=False) -> "StochasticPolicy":
        w = np.asarray(weights, dtype=float)
        return cls(w / w.sum(axis=1, keepdims=True), clamped=clamped)

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "StochasticPolicy":
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @classmethod
    def deterministic(cls, actions, n_actions: int) -> "StochasticPolicy":
        actions = np.asarray(actions, dtype=int)
        probs = np.zeros((actions.size, n_actions))
        probs[np.arange(actions.size), actions] = 1.0
        return cls(probs)

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]

    def entropy(self) -> np.ndarray:
        return row_entropy(self.probs)


def as_probs(policy) -> np.ndarray:
    if isinstance(policy, StochasticPolicy):
        return policy.probs
    return np.asarray(policy, dtype=float)


@dataclass(frozen=True, eq=False)
class RewardVector:
    """Reward over (s, a) pairs, or over states when ``per_state`` is set."""

    values: np.ndarray
    per_state: bool = False

    def __post_init__(self):
        v = _frozen(self.values)
        if not np.all(np.isfinite(v)):
            raise ContractViolation("reward entries must be finite")
        object.__setattr__(self, "values", v)

    def sa(self, n_states: int, n_actions: int) -> np.ndarray:
        """The reward as an ``(S, A)`` array."""
        v = self.values
        if self.per_state:
            if v.size != n_states:
                raise ContractViolation(f"state reward needs {n_states} entries, got {v.size}")
            return np.repeat(v.reshape(n_states, 1), n_actions, axis=1)
        if v.size != n_states * n_actions:
            raise ContractViolation(f"state-action reward needs {n_states * n_actions} entries, got {v.size}")
        return v.reshape(n_states, n_actions)


def as_reward(reward, mdp: TabularMdp) -> np.ndarray:
    if isinstance(reward, RewardVector):
        return reward.sa(mdp.n_states, mdp.n_actions)
    r = np.asarray(reward, dtype=float)
    if r.shape == (mdp.n_states,) and mdp.n_states != mdp.n_pairs:
        return np.repeat(r[:, None], mdp.n_actions, axis=1)
    return RewardVector(r).sa(mdp.n_states, mdp.n_actions)


@dataclass(frozen=True, eq=False)
class SuccessorMeasure:
    """Discounted occupancy of a policy.

    ``sa_matrix`` is ``M[(s,a), (s',a')]`` with flat index ``s * A + a``; it
    is only materialized for MDPs with at most ``MAX_SA_PAIRS`` pairs.
    ``marginal`` is flat over pairs, ``state_marginal`` over states.
    """

    marginal: np.ndarray
    state_marginal: np.ndarray
    sa_matrix: np.ndarray | None = None

    def __post_init__(self):
        for name in ("marginal", "state_marginal", "sa_matrix"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, _frozen(val))

    def marginal_sa(self, n_actions: int) -> np.ndarray:
        return self.marginal.reshape(-1, n_actions)


def _check_dims(mdp: TabularMdp, probs: np.ndarray):
    if probs.shape != (mdp.n_states, mdp.n_actions):
        raise ContractViolation(
            f"policy shape {probs.shape} does not match MDP ({mdp.n_states}, {mdp.n_actions})")


def state_transition(mdp: TabularMdp, policy) -> np.ndarray:
    """State-to-state kernel ``P_pi[s, s']`` under the policy."""
    probs = as_probs(policy)
    _check_dims(mdp, probs)
    return np.einsum("sa,sat->st", probs, mdp.transition)


def pair_transition(mdp: TabularMdp, policy) -> np.ndarray:
    """State-action chain ``P[(s,a), (s',a')] = P(s'|s,a) pi(a'|s')``."""
    probs = as_probs(policy)
    _check_dims(mdp, probs)
    n = mdp.n_pairs
    return (mdp.transition[:, :, :, None] * probs[None, None, :, :]).reshape(n, n)


def state_occupancy(mdp: TabularMdp, policy, start: np.ndarray | None = None) -> np.ndarray:
    """Normalized discounted state visitation from ``start`` (default mu0)."""
    P_pi = state_transition(mdp, policy)
    mu = mdp.initial_dist if start is None else np.asarray(start, dtype=float)
    lhs = np.eye(mdp.n_states) - mdp.discount * P_pi.T
    return np.linalg.solve(lhs, (1.0 - mdp.discount) * mu)


def successor_measure(mdp: TabularMdp, policy, with_matrix: bool | None = None) -> SuccessorMeasure:
    """Exact successor measure ``(1 - gamma) (I - gamma P^pi)^{-1}``.

    ``with_matrix=None`` materializes the state-action matrix whenever the MDP
    has at most ``MAX_SA_PAIRS`` pairs; marginals are always computed through
    the (much smaller) state chain.
    """
    probs = as_probs(policy)
    _check_dims(mdp, probs)
    if with_matrix is None:
        with_matrix = mdp.n_pairs <= MAX_SA_PAIRS
    elif with_matrix and mdp.n_pairs > MAX_SA_PAIRS:
        raise ContractViolation(
            f"state-action matrix of {mdp.n_pairs} pairs exceeds the cap of {MAX_SA_PAIRS}")
    d_s = state_occupancy(mdp, probs)
    marginal = (d_s[:, None] * probs).ravel()
    matrix = None
    if with_matrix:
        n = mdp.n_pairs
        lhs = np.eye(n) - mdp.discount * pair_transition(mdp, probs)
        matrix = np.linalg.solve(lhs, (1.0 - mdp.discount) * np.eye(n))
    return SuccessorMeasure(marginal=marginal, state_marginal=d_s, sa_matrix=matrix)


def greedy(q: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    """Row-wise argmax with lowest-index tie-break.

    Values within ``rtol * (1 + |max|)`` of the row maximum count as ties so
    that rounding noise from iterative solvers cannot flip the choice.
    """
    q = np.asarray(q, dtype=float)
    top = q.max(axis=-1, keepdims=True)
    ties = q >= top - rtol * (1.0 + np.abs(top))
    return np.argmax(ties, axis=-1)


def soft_value_iteration(mdp: TabularMdp, reward, tol: float = DEFAULT_TOL,
                         max_iter: int = DEFAULT_MAX_ITER):
    """Iterate the soft Bellman optimality operator to a fixed point.

    Returns the soft Q-function ``(S, A)`` and the maximum-entropy optimal
    policy ``softmax(Q)``.
    """
    if tol <= 0:
        raise ContractViolation("tol must be positive")
    r = as_reward(reward, mdp)
    P, gamma = mdp.transition, mdp.discount
    q = r.copy()
    for it in range(1, max_iter + 1):
        v = logsumexp(q, axis=1)
        q_new = r + gamma * (P @ v)
        residual = np.abs(q_new - q).max()
        q = q_new
        if residual <= tol:
            return q, StochasticPolicy(softmax(q, axis=1))
    raise ConvergenceError("soft value iteration did not converge", residual, max_iter)


def hard_value_iteration(mdp: TabularMdp, reward, tol: float = DEFAULT_TOL,
                         max_iter: int = DEFAULT_MAX_ITER):
    """Standard Bellman optimality iteration with a greedy deterministic policy."""
    if tol <= 0:
        raise ContractViolation("tol must be positive")
    r = as_reward(reward, mdp)
    P, gamma = mdp.transition, mdp.discount
    q = r.copy()
    for it in range(1, max_iter + 1):
        q_new = r + gamma * (P @ q.max(axis=1))
        residual = np.abs(q_new - q).max()
        q = q_new
        if residual <= tol:
            return q, StochasticPolicy.deterministic(greedy(q), mdp.n_actions)
    raise ConvergenceError("value iteration did not converge", residual, max_iter)


def maxent_return(mdp: TabularMdp, policy, reward) -> float:
    """``<M^pi, R + H^pi>`` with the normalized marginal occupancy."""
    probs = as_probs(policy)
    occ = successor_measure(mdp, probs, with_matrix=False).marginal_sa(mdp.n_actions)
    r = as_reward(reward, mdp)
    h = row_entropy(probs)[:, None]
    return float(np.sum(occ * (r + h)))


def linear_return(mdp: TabularMdp, policy, reward) -> float:
    occ = successor_measure(mdp, policy, with_matrix=False).marginal_sa(mdp.n_actions)
    return float(np.sum(occ * as_reward(reward, mdp)))


def interpolate_policy(optimal, alpha: float) -> StochasticPolicy:
    """Mix a policy with the uniform one: ``(1 - alpha) pi + alpha U(A)``."""
    if not 0.0 <= alpha <= 1.0:
        raise ContractViolation(f"alpha must lie in [0, 1], got {alpha}")
    probs = as_probs(optimal)
    return StochasticPolicy((1.0 - alpha) * probs + alpha / probs.shape[1])
