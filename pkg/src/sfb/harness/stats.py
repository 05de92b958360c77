"""Rank correlation and seed aggregation."""

from __future__ import annotations

import math
import warnings
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from ..errors import ContractViolation

Z_95 = 1.96


class ConstantInputWarning(UserWarning):
    """A rank correlation was requested for a constant vector; 0 was returned."""


def spearman(xs, ys) -> float:
    """Spearman rank correlation with average ranks for ties.

    A constant input has undefined correlation; 0.0 is returned and a
    :class:`ConstantInputWarning` is emitted.
    """
    x = np.asarray(xs, dtype=float).ravel()
    y = np.asarray(ys, dtype=float).ravel()
    if x.size != y.size or x.size < 2:
        raise ContractViolation("spearman needs two vectors of equal length >= 2")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ContractViolation("spearman inputs must be finite")
    rx, ry = rankdata(x) - (x.size + 1) / 2.0, rankdata(y) - (y.size + 1) / 2.0
    denom = math.sqrt(float(rx @ rx) * float(ry @ ry))
    if denom == 0.0:
        warnings.warn("constant input to spearman; correlation set to 0", ConstantInputWarning,
                      stacklevel=2)
        return 0.0
    return float(np.clip(rx @ ry / denom, -1.0, 1.0))


@dataclass(frozen=True)
class SummaryRow:
    env: str
    algorithm: str
    objective: str
    n: int
    mean: float
    ci_half_width: float | None
    bold: bool


def aggregate(rows) -> list[SummaryRow]:
    """Mean normalized score and normal 95% CI per (env, algorithm, objective).

    ``bold`` marks entries whose CI overlaps the CI of the best mean among
    entries sharing the same env and objective; a missing CI (one seed)
    counts as a point.
    """
    groups = defaultdict(list)
    for r in rows:
        if getattr(r, "error", ""):
            continue
        groups[(r.env, r.algorithm, r.objective)].append(float(r.normalized_score))
    stats = {}
    for key, scores in groups.items():
        s = np.asarray(scores)
        hw = None if s.size < 2 else Z_95 * float(s.std(ddof=1)) / math.sqrt(s.size)
        stats[key] = (s.size, float(s.mean()), hw)
    best = {}
    for (env, alg, obj), (_, mean, hw) in stats.items():
        if (env, obj) not in best or mean > best[(env, obj)][0]:
            best[(env, obj)] = (mean, hw or 0.0)
    out = []
    for (env, alg, obj), (n, mean, hw) in sorted(stats.items()):
        b_mean, b_hw = best[(env, obj)]
        bold = b_mean - mean <= b_hw + (hw or 0.0)
        out.append(SummaryRow(env, alg, obj, n, mean, hw, bool(bold)))
    return out
