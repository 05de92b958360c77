"""Task embeddings: hypersphere reparameterization and uniform samplers."""

from __future__ import annotations

import numpy as np


def reparameterize(z_raw) -> np.ndarray:
    """Map ``z`` to ``z / (||z|| + 1)``, which lies strictly inside the unit ball."""
    z = np.asarray(z_raw, dtype=float)
    return z / (np.linalg.norm(z, axis=-1, keepdims=True) + 1.0)


def unreparameterize(z) -> np.ndarray:
    """Inverse of :func:`reparameterize`: ``z' / (1 - ||z'||)`` for ``||z'|| < 1``."""
    z = np.asarray(z, dtype=float)
    return z / (1.0 - np.linalg.norm(z, axis=-1, keepdims=True))


def sample_sphere(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    g = rng.standard_normal((n, dim))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    # a zero Gaussian draw has probability zero, but guard anyway
    norms[norms == 0.0] = 1.0
    return g / norms


def sample_ball(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    """Uniform draws from the unit ball: uniform direction times ``u ** (1 / dim)``."""
    directions = sample_sphere(rng, n, dim)
    radii = rng.random(n) ** (1.0 / dim)
    return directions * radii[:, None]
