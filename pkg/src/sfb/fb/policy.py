from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractViolation
from ..mdp import StochasticPolicy


def soft_policy(model, z, mode: str = "soft") -> StochasticPolicy:
    """Policy ``pi_z`` of an exact or learned FB model.

    At the temperature clamp (``1 - ||z|| < 1e-6``) the soft policy falls back
    to the greedy one and the result carries ``clamped=True``.
    """
    return model.policy(np.asarray(z, dtype=float), mode=mode)


@dataclass(frozen=True, eq=False)
class SoftPolicyFamily:
    """The family ``{pi_z}`` of an FB model in hard or soft mode."""

    model: object
    mode: str = "soft"

    def __post_init__(self):
        if self.mode not in ("soft", "hard"):
            raise ContractViolation(f"mode must be 'soft' or 'hard', got {self.mode!r}")

    @property
    def dim(self) -> int:
        return self.model.dim

    def policy(self, z) -> StochasticPolicy:
        return soft_policy(self.model, z, self.mode)
