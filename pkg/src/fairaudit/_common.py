"""Small shared numeric helpers."""

from __future__ import annotations

import numpy as np


def weighted_mean(x: np.ndarray, w: np.ndarray) -> float:
    return float(np.sum(w * x) / np.sum(w))


def ks_distance(a, b, wa=None, wb=None) -> float:
    """Two-sample Kolmogorov-Smirnov distance, optionally weighted.

    Sup over the merged support of the absolute difference between the two
    (weighted) empirical CDFs.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("need non-empty samples")
    wa = np.ones(len(a)) if wa is None else np.asarray(wa, dtype=float)
    wb = np.ones(len(b)) if wb is None else np.asarray(wb, dtype=float)

    grid = np.union1d(a, b)
    ia = np.argsort(a, kind="stable")
    ib = np.argsort(b, kind="stable")
    ca = np.cumsum(wa[ia]) / np.sum(wa)
    cb = np.cumsum(wb[ib]) / np.sum(wb)
    # CDF value at grid point = cumulative weight of samples <= point
    fa = np.concatenate(([0.0], ca))[np.searchsorted(a[ia], grid, side="right")]
    fb = np.concatenate(([0.0], cb))[np.searchsorted(b[ib], grid, side="right")]
    return float(np.max(np.abs(fa - fb)))


def ks_two_sample_critical(n1: int, n2: int, level: float = 0.01) -> float:
    """Asymptotic two-sample KS critical value at the given significance level."""
    coeff = {0.10: 1.224, 0.05: 1.358, 0.01: 1.628}
    if level not in coeff:
        raise ValueError(f"unsupported level {level}; use one of {sorted(coeff)}")
    return coeff[level] * np.sqrt((n1 + n2) / (n1 * n2))
