"""Exact forward-backward fixed points on small tabular MDPs.

Columns of ``B`` index state-action pairs and the measure is the counting
measure, so ``F_z^T B`` reproduces the normalized successor matrix exactly
when ``d = |S||A|``. Because that matrix is ``(1 - gamma)``-normalized,
``F_z^T z`` is a normalized value; the soft policy therefore uses the
temperature ``(1 - ||z||)(1 - gamma)``, which puts returns back in
undiscounted-sum units and makes the fixed point the maximum-entropy optimum
for the reward ``B^+ z / (1 - ||z||)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import softmax

from ..errors import ContractViolation, ConvergenceError
from ..mdp import (
    MAX_SA_PAIRS,
    StochasticPolicy,
    SuccessorMeasure,
    TabularMdp,
    greedy,
    row_entropy,
    successor_measure,
)

TEMPERATURE_FLOOR = 1e-6
PINV_CUTOFF = 1e-10
RANK_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class FixedPoint:
    """One slice ``z`` of an exact FB model."""

    z: np.ndarray
    forward: np.ndarray  # F_z as (S, A, d)
    policy: StochasticPolicy
    measure: SuccessorMeasure
    iterations: int
    residual: float
    approximate: bool

    @property
    def clamped(self) -> bool:
        return self.policy.clamped


def _pinv(B: np.ndarray) -> np.ndarray:
    u, s, vt = np.linalg.svd(B, full_matrices=False)
    keep = s > PINV_CUTOFF * s.max()
    return (vt[keep].T / s[keep]) @ u[:, keep].T


def _check_backward(mdp: TabularMdp, B: np.ndarray) -> np.ndarray:
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[1] != mdp.n_pairs:
        raise ContractViolation(f"B must have shape (d, {mdp.n_pairs}), got {B.shape}")
    if B.shape[0] > mdp.n_pairs:
        raise ContractViolation("B cannot have more rows than state-action pairs")
    if mdp.n_pairs > MAX_SA_PAIRS:
        raise ContractViolation(f"exact regime limited to {MAX_SA_PAIRS} state-action pairs")
    sv = np.linalg.svd(B, compute_uv=False)
    if sv.min() <= RANK_TOL:
        raise ContractViolation(f"B is rank deficient (smallest singular value {sv.min():.2e})")
    return B


def exact_fixed_point(mdp: TabularMdp, B, z, tol: float = 1e-12, mode: str = "soft",
                      max_iter: int = 1000, B_pinv: np.ndarray | None = None) -> FixedPoint:
    """Jointly solve ``M^z = F_z^T B`` and the (soft) policy improvement step.

    Iterates policy evaluation (exact successor matrix), ``F_z^T = M B^+`` and
    policy improvement until the policy moves by at most ``tol`` in sup norm.
    In hard mode the improvement step is the greedy policy of ``F_z^T z`` and
    ``z`` is used as given; in soft mode ``||z|| < 1`` is expected and the
    temperature is clamped at ``TEMPERATURE_FLOOR`` (greedy beyond it).
    """
    B = _check_backward(mdp, B)
    if mode not in ("soft", "hard"):
        raise ContractViolation(f"mode must be 'soft' or 'hard', got {mode!r}")
    z = np.asarray(z, dtype=float)
    if z.shape != (B.shape[0],):
        raise ContractViolation(f"z must have shape ({B.shape[0]},), got {z.shape}")
    pinv = _pinv(B) if B_pinv is None else B_pinv
    S, A, gamma = mdp.n_states, mdp.n_actions, mdp.discount

    temp = 1.0 - np.linalg.norm(z)
    greedy_mode = mode == "hard" or temp < TEMPERATURE_FLOOR
    probs = np.full((S, A), 1.0 / A)
    residual = np.inf
    for it in range(1, max_iter + 1):
        M = successor_measure(mdp, probs, with_matrix=True).sa_matrix
        Ft = M @ pinv
        q_reward = (Ft @ z).reshape(S, A)
        if greedy_mode:
            new = np.zeros((S, A))
            new[np.arange(S), greedy(q_reward)] = 1.0
        else:
            h = np.repeat(row_entropy(probs), A)
            q = q_reward + temp * (M @ h).reshape(S, A)
            new = softmax(q / (temp * (1.0 - gamma)), axis=1)
        residual = float(np.abs(new - probs).max())
        probs = new
        if residual <= tol:
            break
    else:
        raise ConvergenceError("exact FB fixed point did not converge", residual, max_iter)

    policy = StochasticPolicy(probs, clamped=greedy_mode and mode == "soft")
    measure = successor_measure(mdp, policy, with_matrix=True)
    forward = (measure.sa_matrix @ pinv).reshape(S, A, -1)
    return FixedPoint(z=z, forward=forward, policy=policy, measure=measure, iterations=it,
                      residual=residual, approximate=B.shape[0] < mdp.n_pairs)


class ExactFB:
    """Exact FB model: a backward matrix over state-action pairs plus on-demand fixed points.

    Slices are cached per embedding. Instances are safe for concurrent
    read-only use (the cache only memoizes pure results).
    """

    def __init__(self, mdp: TabularMdp, B=None, tol: float = 1e-12, cache_size: int = 4096):
        self.mdp = mdp
        B = np.eye(mdp.n_pairs) if B is None else np.asarray(B, dtype=float)
        self.B = _check_backward(mdp, B)
        self.B.setflags(write=False)
        self.B_pinv = _pinv(self.B)
        self.tol = tol
        self._solve = lru_cache(maxsize=cache_size)(self._solve_uncached)

    @property
    def dim(self) -> int:
        return self.B.shape[0]

    @property
    def n_states(self) -> int:
        return self.mdp.n_states

    @property
    def n_actions(self) -> int:
        return self.mdp.n_actions

    @property
    def approximate(self) -> bool:
        return self.dim < self.mdp.n_pairs

    def _solve_uncached(self, key: bytes, mode: str) -> FixedPoint:
        z = np.frombuffer(key, dtype=float).copy()
        return exact_fixed_point(self.mdp, self.B, z, tol=self.tol, mode=mode, B_pinv=self.B_pinv)

    def solve(self, z, mode: str = "soft") -> FixedPoint:
        z = np.ascontiguousarray(z, dtype=float)
        return self._solve(z.tobytes(), mode)

    def policy(self, z, mode: str = "soft") -> StochasticPolicy:
        return self.solve(z, mode).policy

    def forward(self, z, mode: str = "soft") -> np.ndarray:
        return self.solve(z, mode).forward

    def embed(self, reward_sa: np.ndarray) -> np.ndarray:
        """``B R`` for a reward over state-action pairs."""
        return self.B @ np.asarray(reward_sa, dtype=float).ravel()
