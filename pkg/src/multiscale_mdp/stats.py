"""Small statistical helpers: Student and Wilson intervals, batch means."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as _st


def mean_ci(samples, level: float = 0.95):
    """Sample mean and Student-t half-width along axis 0."""
    x = np.asarray(samples, float)
    n = x.shape[0]
    m = x.mean(axis=0)
    if n < 2:
        return m, np.full_like(np.asarray(m, float), np.inf)
    q = _st.t.ppf(0.5 + level / 2, n - 1)
    return m, q * x.std(axis=0, ddof=1) / math.sqrt(n)


def wilson(successes: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        return 0.0, 1.0
    z = _st.norm.ppf(0.5 + level / 2)
    p = successes / n
    den = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass
class BatchMeans:
    means: np.ndarray
    se: np.ndarray
    halfwidth: np.ndarray


def batch_means(series, batches: int = 20, level: float = 0.95) -> BatchMeans:
    """Non-overlapping batch means of a (possibly multivariate) time series.

    Trailing samples that do not fill a whole batch are dropped.
    """
    x = np.asarray(series, float)
    if x.ndim == 1:
        x = x[:, None]
    size = x.shape[0] // batches
    if size < 1:
        raise ValueError("series shorter than the number of batches")
    bm = x[: size * batches].reshape(batches, size, -1).mean(axis=1)
    se = bm.std(axis=0, ddof=1) / math.sqrt(batches)
    q = _st.t.ppf(0.5 + level / 2, batches - 1)
    return BatchMeans(means=bm, se=se, halfwidth=q * se)
