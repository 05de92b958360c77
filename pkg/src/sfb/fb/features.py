from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class RandomFourierFeatures:
    """Fixed random Fourier features of ``z`` followed by a constant bias feature.

    ``psi(z) = [sqrt(2 / n) cos(Omega z + b), 1]`` with ``Omega ~ N(0, scale^2)``
    and ``b ~ U[0, 2 pi)``, drawn from ``seed``.
    """

    dim: int
    n_features: int = 64
    seed: int = 0
    scale: float = 1.0

    def __post_init__(self):
        rng = np.random.default_rng(self.seed)
        omega = rng.normal(0.0, self.scale, size=(self.n_features, self.dim))
        phase = rng.uniform(0.0, 2.0 * np.pi, size=self.n_features)
        omega.setflags(write=False)
        phase.setflags(write=False)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "phase", phase)

    @property
    def size(self) -> int:
        return self.n_features + 1

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        proj = z @ self.omega.T + self.phase
        feats = np.sqrt(2.0 / self.n_features) * np.cos(proj)
        bias = np.ones(feats.shape[:-1] + (1,))
        return np.concatenate([feats, bias], axis=-1)
