"""Empirical distribution functions and Kolmogorov-Smirnov distances."""
from __future__ import annotations

import numpy as np


class EmpiricalCDF:
    """Right-continuous step function F_n(t) = #{i : T_i <= t} / n."""

    def __init__(self, times):
        times = np.asarray(times, dtype=float)
        if times.size and np.any(np.diff(times) < 0):
            raise ValueError("empirical_cdf expects sorted input")
        self.times = times

    def __call__(self, t):
        if self.times.size == 0:
            return np.zeros_like(np.asarray(t, dtype=float)) + 0.0
        out = np.searchsorted(self.times, t, side="right") / self.times.size
        return out if np.ndim(out) else float(out)


def empirical_cdf(times) -> EmpiricalCDF:
    return EmpiricalCDF(times)


def ks_statistic(sample, cdf) -> float:
    """sup_x |F_n(x) - F(x)| for a vectorised (possibly atomic) reference CDF."""
    x = np.sort(np.asarray(sample, dtype=float))
    n = x.size
    f = np.asarray(cdf(x), dtype=float)
    # left limits of the reference at the sample points catch atoms of F
    f_left = np.asarray(cdf(np.nextafter(x, -np.inf)), dtype=float)
    upper = np.arange(1, n + 1) / n - f
    lower = f_left - np.arange(0, n) / n
    return float(max(upper.max(), lower.max()))


def ks_two_sample(a, b) -> float:
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    pts = np.concatenate((a, b))
    fa = np.searchsorted(a, pts, side="right") / a.size
    fb = np.searchsorted(b, pts, side="right") / b.size
    return float(np.abs(fa - fb).max())


def tabulated_cdf(levels, values):
    """Vectorised CDF from values on an increasing level grid (linear interpolation)."""
    levels = np.asarray(levels, dtype=float)
    values = np.asarray(values, dtype=float)

    def cdf(x):
        return np.interp(x, levels, values, left=0.0, right=values[-1])

    return cdf
