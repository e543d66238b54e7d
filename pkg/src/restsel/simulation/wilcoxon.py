"""Paired two-sided Wilcoxon signed-rank test, normal approximation."""

from __future__ import annotations

import math

import numpy as np
from scipy.stats import norm, rankdata

from ..errors import DimensionError

__all__ = ["wilcoxon_signed_rank", "MIN_NONZERO"]

MIN_NONZERO = 10


def wilcoxon_signed_rank(a, b) -> float:
    """Two-sided p-value for the paired differences ``a - b``.

    Zero differences are dropped. The statistic is the positive-rank sum;
    its null variance is reduced by ``sum(t^3 - t) / 48`` over tie groups
    and the continuity correction moves ``|W - mean|`` by 0.5. All-zero
    differences give ``p = 1``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError("paired samples must be 1-D and of equal length")
    d = a - b
    d = d[d != 0]
    nz = d.shape[0]
    if nz == 0:
        return 1.0
    if nz < MIN_NONZERO:
        raise DimensionError(f"need at least {MIN_NONZERO} nonzero differences, got {nz}")
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    mean = nz * (nz + 1) / 4.0
    _, counts = np.unique(np.abs(d), return_counts=True)
    var = nz * (nz + 1) * (2 * nz + 1) / 24.0 - float(np.sum(counts**3 - counts)) / 48.0
    if var <= 0:
        return 1.0
    dev = max(abs(w_plus - mean) - 0.5, 0.0)
    z = dev / math.sqrt(var)
    return float(min(1.0, 2.0 * norm.sf(z)))
