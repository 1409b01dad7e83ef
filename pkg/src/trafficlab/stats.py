"""Small statistical helpers shared by estimators and tests."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as _st

__all__ = [
    "Estimate",
    "mean_se",
    "batch_means",
    "jackknife_covariance",
    "ks_test",
    "tv_distance",
]


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    n: int = 0

    def within(self, target: float, n_se: float = 3.0) -> bool:
        return abs(self.value - target) <= n_se * self.stderr

    def __float__(self):
        return float(self.value)


def mean_se(x) -> Estimate:
    x = np.asarray(x, dtype=float)
    n = x.size
    if n == 0:
        return Estimate(math.nan, math.nan, 0)
    se = x.std(ddof=1) / math.sqrt(n) if n > 1 else math.nan
    return Estimate(float(x.mean()), float(se), n)


def batch_means(increments, n_batches: int = 20) -> Estimate:
    """Mean of a stationary sequence with batch-means standard error."""
    x = np.asarray(increments, dtype=float)
    usable = (x.size // n_batches) * n_batches
    if usable == 0:
        return mean_se(x)
    b = x[:usable].reshape(n_batches, -1).mean(axis=1)
    return Estimate(float(x.mean()), float(b.std(ddof=1) / math.sqrt(n_batches)), x.size)


def jackknife_covariance(x, y) -> Estimate:
    """Sample covariance of paired draws with a leave-one-out standard error."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if n < 2 or y.size != n:
        raise ValueError("need at least two paired replicas")
    cov = float(np.cov(x, y, ddof=1)[0, 1])
    if n < 3:
        return Estimate(cov, math.nan, n)
    sx, sy, sxy = x.sum(), y.sum(), (x * y).sum()
    m = n - 1
    mx = (sx - x) / m
    my = (sy - y) / m
    loo = ((sxy - x * y) - m * mx * my) / (m - 1)
    se = math.sqrt((n - 1) / n * float(np.sum((loo - loo.mean()) ** 2)))
    return Estimate(cov, se, n)


def ks_test(sample, cdf) -> tuple[float, float]:
    """One-sample KS statistic and p-value against a continuous cdf."""
    res = _st.kstest(np.asarray(sample, dtype=float), cdf)
    return float(res.statistic), float(res.pvalue)


def tv_distance(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    n = max(p.size, q.size)
    p = np.pad(p, (0, n - p.size))
    q = np.pad(q, (0, n - q.size))
    return 0.5 * float(np.abs(p - q).sum())
