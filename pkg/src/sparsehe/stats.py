"""Paired two-sided t-test over per-seed results."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from .errors import ConfigurationError


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    dof: int
    p_value: float
    mean_difference: float
    n_pairs: int

    def to_dict(self) -> dict:
        return asdict(self)


def paired_ttest(a, b) -> TTestResult:
    """Two-sided paired t-test of ``a - b``.

    All-zero differences give ``t = 0, p = 1``; constant non-zero differences
    give ``t = +/-inf, p = 0``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ConfigurationError("paired samples must be 1-D and of equal length")
    if a.size < 2:
        raise ConfigurationError("need at least two pairs")
    diff = a - b
    n = diff.size
    mean = float(diff.mean())
    sd = float(diff.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(0.0, n - 1, 1.0, 0.0, n)
        return TTestResult(math.copysign(math.inf, mean), n - 1, 0.0, mean, n)
    t = mean / (sd / math.sqrt(n))
    p = 2.0 * float(stats.t.sf(abs(t), n - 1))
    return TTestResult(t, n - 1, min(1.0, p), mean, n)
