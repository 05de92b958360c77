"""Learned forward-backward model over a tabular MDP.

``F(s, a, z) = W[s, a] psi(z)`` and ``Q_H(s, a, z) = w_H[s, a] . psi(z)`` with
``psi`` a fixed set of random Fourier features; ``B`` has one column per
state and is paired with the data distribution ``rho``. The implied measure
``F^T B(s') rho(s')`` estimates the discounted (unnormalized) distribution of
next states ``s_{t+1}``, the convention the Bellman loss trains towards.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..errors import ContractViolation
from ..mdp import StochasticPolicy, greedy
from .features import RandomFourierFeatures

CHECKPOINT_FORMAT = "sfb-fb-checkpoint"
CHECKPOINT_VERSION = 1
TEMPERATURE_FLOOR = 1e-6


@dataclass(frozen=True, eq=False)
class FbModel:
    forward_weights: np.ndarray  # (S, A, d, K)
    critic_weights: np.ndarray   # (S, A, K)
    backward: np.ndarray         # (d, S)
    rho: np.ndarray              # (S,)
    discount: float
    features: RandomFourierFeatures

    def __post_init__(self):
        W = np.array(self.forward_weights, dtype=float)
        H = np.array(self.critic_weights, dtype=float)
        B = np.array(self.backward, dtype=float)
        rho = np.array(self.rho, dtype=float)
        S, A, d, K = W.shape
        if H.shape != (S, A, K) or B.shape != (d, S) or rho.shape != (S,):
            raise ContractViolation("inconsistent FB parameter shapes")
        if K != self.features.size or d != self.features.dim:
            raise ContractViolation("forward weights do not match the feature map")
        if np.any(rho < 0) or abs(rho.sum() - 1.0) > 1e-12:
            raise ContractViolation("rho must be a probability vector")
        for name, arr in (("forward_weights", W), ("critic_weights", H), ("backward", B), ("rho", rho)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def initialize(cls, n_states: int, n_actions: int, dim: int, discount: float, rho,
                   seed: int = 0, n_features: int = 64, feature_scale: float = 1.0,
                   forward_std: float = 0.01) -> "FbModel":
        """Random initialization: ``B`` columns standard normal (so ``E_rho[B B^T] ~ I``),
        small Gaussian forward weights and a zero critic."""
        rng = np.random.default_rng(seed)
        feats = RandomFourierFeatures(dim, n_features, seed=seed, scale=feature_scale)
        W = forward_std * rng.standard_normal((n_states, n_actions, dim, feats.size))
        B = rng.standard_normal((dim, n_states))
        H = np.zeros((n_states, n_actions, feats.size))
        return cls(W, H, B, rho, discount, feats)

    @property
    def n_states(self) -> int:
        return self.forward_weights.shape[0]

    @property
    def n_actions(self) -> int:
        return self.forward_weights.shape[1]

    @property
    def dim(self) -> int:
        return self.forward_weights.shape[2]

    def with_params(self, **changes) -> "FbModel":
        return replace(self, **changes)

    def _check_z(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.dim,):
            raise ContractViolation(f"z must have shape ({self.dim},), got {z.shape}")
        if not np.all(np.isfinite(z)):
            raise ContractViolation("z must be finite")
        return z

    def forward(self, z, states=None) -> np.ndarray:
        """``F(s, a, z)`` as ``(S, A, d)`` (or only for ``states``)."""
        z = self._check_z(z)
        W = self.forward_weights if states is None else self.forward_weights[states]
        return W @ self.features(z)

    def critic(self, z, states=None) -> np.ndarray:
        z = self._check_z(z)
        H = self.critic_weights if states is None else self.critic_weights[states]
        return H @ self.features(z)

    def reward_values(self, z, states=None) -> np.ndarray:
        """``F(s, a, z)^T z`` without materializing ``F``."""
        z = self._check_z(z)
        W = self.forward_weights if states is None else self.forward_weights[states]
        lead = W.shape[:-2]
        flat = W.reshape(-1, self.dim * self.features.size)
        return (flat @ np.outer(z, self.features(z)).ravel()).reshape(lead)

    def policy(self, z, mode: str = "soft", states=None) -> StochasticPolicy:
        """Closed-form policy for ``z``.

        Soft: ``softmax(Q^z / (1 - ||z||))`` with ``Q^z = F^T z + (1 - ||z||) Q_H``.
        Hard, or soft at the temperature clamp: greedy in ``F^T z``.
        """
        if mode not in ("soft", "hard"):
            raise ContractViolation(f"mode must be 'soft' or 'hard', got {mode!r}")
        z = self._check_z(z)
        q_r = self.reward_values(z, states)
        temp = 1.0 - np.linalg.norm(z)
        if mode == "hard" or temp < TEMPERATURE_FLOOR:
            probs = np.zeros_like(q_r)
            probs[np.arange(q_r.shape[0]), greedy(q_r)] = 1.0
            return StochasticPolicy(probs, clamped=mode == "soft")
        logits = q_r / temp + self.critic(z, states)
        logits -= logits.max(axis=1, keepdims=True)
        w = np.exp(logits)
        return StochasticPolicy(w / w.sum(axis=1, keepdims=True))

    def embed(self, reward_state: np.ndarray) -> np.ndarray:
        """``B diag(rho) R`` for a reward over states."""
        r = np.asarray(reward_state, dtype=float)
        if r.shape != (self.n_states,):
            raise ContractViolation(f"learned models take state rewards of shape ({self.n_states},)")
        return self.backward @ (self.rho * r)


def save_checkpoint(model: FbModel, path) -> None:
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "dim": model.dim,
        "n_states": model.n_states,
        "n_actions": model.n_actions,
        "discount": model.discount,
        "feature_seed": model.features.seed,
        "n_features": model.features.n_features,
        "feature_scale": model.features.scale,
    }
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header)), forward_weights=model.forward_weights,
                 critic_weights=model.critic_weights, backward=model.backward, rho=model.rho)


def load_checkpoint(path) -> FbModel:
    with np.load(Path(path), allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ContractViolation(f"{path} is not an FB checkpoint")
        if header.get("version") != CHECKPOINT_VERSION:
            raise ContractViolation(f"unsupported checkpoint version {header.get('version')}")
        feats = RandomFourierFeatures(header["dim"], header["n_features"],
                                      seed=header["feature_seed"], scale=header["feature_scale"])
        return FbModel(data["forward_weights"], data["critic_weights"], data["backward"],
                       data["rho"], header["discount"], feats)
