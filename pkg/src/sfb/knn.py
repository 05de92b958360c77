"""k-nearest-neighbour entropy and KL divergence estimators."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma, gammaln

from .errors import ContractViolation


def _as_points(x, k: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < k + 1:
        raise ContractViolation(f"need at least {k + 1} samples, got {x.shape[0]}")
    return x


def log_unit_ball_volume(dim: int) -> float:
    return 0.5 * dim * np.log(np.pi) - gammaln(0.5 * dim + 1.0)


def knn_entropy(x, k: int = 3) -> float:
    """Kozachenko-Leonenko differential entropy estimate (nats)."""
    x = _as_points(x, k)
    n, d = x.shape
    dist, _ = cKDTree(x).query(x, k + 1)
    eps = dist[:, k]
    if np.any(eps == 0.0):
        raise ContractViolation("duplicate sample points: k-th neighbour at distance 0")
    return float(digamma(n) - digamma(k) + log_unit_ball_volume(d) + d * np.mean(np.log(eps)))


def knn_kl(x, y, k: int = 3) -> float:
    """Wang-Kulkarni-Verdu estimate of ``KL(p || q)`` from ``x ~ p`` and ``y ~ q``."""
    x = _as_points(x, k)
    y = _as_points(y, k - 1)
    if x.shape[1] != y.shape[1]:
        raise ContractViolation("sample sets have different dimensions")
    n, d = x.shape
    m = y.shape[0]
    rho = cKDTree(x).query(x, k + 1)[0][:, k]
    nu = cKDTree(y).query(x, k)[0]
    nu = nu[:, k - 1] if nu.ndim == 2 else nu
    if np.any(rho == 0.0) or np.any(nu == 0.0):
        raise ContractViolation("duplicate sample points: neighbour at distance 0")
    return float(d * np.mean(np.log(nu / rho)) + np.log(m / (n - 1.0)))
