"""Stochastic training of the learned FB model from an offline dataset."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dataset import TransitionDataset
from ..embedding import sample_ball, sample_sphere
from ..errors import ContractViolation, TrainingDiverged
from ..mdp import greedy
from .losses import POLICY_FLOOR, critic_terms, fb_terms, ortho_terms
from .model import TEMPERATURE_FLOOR, FbModel
from .optim import DenseMomentum, LazyMomentumTable

LOSS_NAMES = ("fb", "ortho", "critic")


@dataclass(frozen=True)
class TrainConfig:
    """SGD settings. Forward and critic rates apply per table row, whose
    features have unit scale, so they are much larger than the dense rate
    used for ``B``."""

    n_steps: int = 50_000
    batch_size: int = 32
    lr_forward: float = 1.0
    lr_backward: float = 0.01
    lr_critic: float = 0.1
    momentum: float = 0.9
    polyak: float = 0.01
    ortho_coef: float = 1.0
    mode: str = "soft"
    seed: int = 0
    table_dtype: str = "float32"

    def __post_init__(self):
        if self.n_steps < 0 or self.batch_size < 1:
            raise ContractViolation("n_steps must be >= 0 and batch_size >= 1")
        if min(self.lr_forward, self.lr_backward, self.lr_critic) <= 0:
            raise ContractViolation("learning rates must be positive")
        if not 0.0 <= self.momentum < 1.0 or not 0.0 < self.polyak <= 1.0:
            raise ContractViolation("momentum must lie in [0, 1) and polyak in (0, 1]")
        if self.mode not in ("soft", "hard"):
            raise ContractViolation(f"mode must be 'soft' or 'hard', got {self.mode!r}")
        if self.table_dtype not in ("float32", "float64"):
            raise ContractViolation("table_dtype must be 'float32' or 'float64'")


@dataclass
class TrainLog:
    """Per-step loss values, one row per step in ``LOSS_NAMES`` order."""

    losses: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def means(self, last: int | None = None) -> dict:
        rows = self.losses if last is None else self.losses[-last:]
        return {name: float(rows[:, i].mean()) for i, name in enumerate(LOSS_NAMES)}


def _next_policy(live_next, z, mode):
    """Policies at the next states from live contractions ``(b, A, d + 1)``."""
    d = z.shape[1]
    q_r = np.einsum("bad,bd->ba", live_next[:, :, :d], z)
    temp = 1.0 - np.linalg.norm(z, axis=1)
    probs = np.empty_like(q_r)
    hard = (temp < TEMPERATURE_FLOOR) if mode == "soft" else np.ones(len(z), dtype=bool)
    if hard.any():
        onehot = np.zeros_like(q_r[hard])
        onehot[np.arange(onehot.shape[0]), greedy(q_r[hard])] = 1.0
        probs[hard] = onehot
    soft = ~hard
    if soft.any():
        logits = q_r[soft] / temp[soft, None] + live_next[soft, :, d]
        logits -= logits.max(axis=1, keepdims=True)
        w = np.exp(logits)
        probs[soft] = w / w.sum(axis=1, keepdims=True)
    return probs


def train(model: FbModel, dataset: TransitionDataset, config: TrainConfig,
          log: TrainLog | None = None) -> FbModel:
    """Minimize the FB, orthonormality and entropy-critic losses by momentum SGD.

    Each step draws ``batch_size`` transitions and one embedding per
    transition (uniform in the unit ball in soft mode, on the sphere in hard
    mode). Targets are Polyak averages of the live parameters; the next-state
    policy comes from the live parameters. Raises ``TrainingDiverged`` on the
    first non-finite loss. Deterministic given ``config.seed``.
    """
    S, A, d = model.n_states, model.n_actions, model.dim
    if (dataset.n_states, dataset.n_actions) != (S, A):
        raise ContractViolation("dataset does not match the model dimensions")
    if config.n_steps == 0:
        return model
    rho = np.array(dataset.rho)
    gamma = model.discount
    K = model.features.size

    theta = np.concatenate([model.forward_weights, model.critic_weights[:, :, None, :]], axis=2)
    lr_slot = np.array([config.lr_forward] * d + [config.lr_critic])
    table = LazyMomentumTable(theta.reshape(S * A, d + 1, K), lr_slot, config.momentum,
                              config.polyak, dtype=np.dtype(config.table_dtype))
    back = DenseMomentum(model.backward, config.lr_backward, config.momentum, config.polyak)

    rng = np.random.default_rng(config.seed)
    sampler = sample_ball if config.mode == "soft" else sample_sphere
    b = config.batch_size
    items_next = np.repeat(np.arange(b), A)
    items_cur = np.arange(b)
    all_actions = np.arange(A)
    history = np.zeros((config.n_steps, 3))

    # overflow surfaces as a non-finite loss, reported below
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(config.n_steps):
            idx = rng.integers(0, len(dataset), size=b)
            s, a, s_next = dataset.states[idx], dataset.actions[idx], dataset.next_states[idx]
            z = sampler(rng, b, d)
            psi = model.features(z)

            rows_cur = s * A + a
            rows_next = (s_next[:, None] * A + all_actions).ravel()
            live_cur, _ = table.gather(rows_cur, items_cur, psi)
            live_next, targ_next = table.gather(rows_next, items_next, psi)
            live_next = live_next.reshape(b, A, d + 1)
            targ_next = targ_next.reshape(b, A, d + 1)

            pi = _next_policy(live_next, z, config.mode)
            f_next = np.einsum("ba,bad->bd", pi, targ_next[:, :, :d])
            l_fb, gF, gB = fb_terms(live_cur[:, :d], back.param, rho, s_next, f_next, back.targ, gamma)
            l_ortho, gB_ortho = ortho_terms(back.param, rho)
            l_critic, gh = critic_terms(live_cur[:, d], pi, targ_next[:, :, d], gamma, POLICY_FLOOR)
            history[step] = (l_fb, l_ortho, l_critic)
            if not np.all(np.isfinite(history[step])):
                raise TrainingDiverged(step, dict(zip(LOSS_NAMES, history[step].tolist())))

            g_rows = np.concatenate([gF, gh[:, None]], axis=1)[:, :, None] * psi[:, None, :]
            uniq, inverse = np.unique(rows_cur, return_inverse=True)
            grads = np.zeros((uniq.size, d + 1, K))
            np.add.at(grads, inverse.ravel(), g_rows)
            table.apply(uniq, grads)
            back.apply(gB + config.ortho_coef * gB_ortho)

    theta, _ = table.materialize()
    theta = theta.reshape(S, A, d + 1, K).astype(float)
    if log is not None:
        log.losses = np.concatenate([log.losses, history])
    return model.with_params(forward_weights=theta[:, :, :d].copy(),
                             critic_weights=theta[:, :, d].copy(),
                             backward=back.param.copy(), rho=rho)
