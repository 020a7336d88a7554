"""Normal-approximation intervals, p-values, and coverage."""

from __future__ import annotations

import numpy as np
from scipy.stats import norm

from .errors import DataError


def _check_var(var) -> np.ndarray:
    var = np.asarray(var, dtype=float)
    if np.any(var < 0):
        raise DataError("negative variance")
    return var


def confidence_interval(estimate, var, level: float = 0.95):
    """Return ``(lower, upper)`` of ``estimate -/+ z * sqrt(var)``; works elementwise."""
    if not 0 < level < 1:
        raise DataError(f"level must lie in (0, 1), got {level}")
    z = norm.ppf(0.5 + level / 2)
    half = z * np.sqrt(_check_var(var))
    est = np.asarray(estimate, dtype=float)
    lo, hi = est - half, est + half
    if lo.ndim == 0:
        return float(lo), float(hi)
    return lo, hi


def p_value(estimate, var):
    """Two-sided p-value of ``estimate / sqrt(var)`` against the standard normal."""
    sd = np.sqrt(_check_var(var))
    est = np.asarray(estimate, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = 2.0 * norm.sf(np.abs(est) / sd)
    p = np.where((sd == 0) & (est == 0), 1.0, p)
    return float(p) if p.ndim == 0 else p


def coverage_probability(intervals, truth: float) -> float:
    """Fraction of ``(lower, upper)`` pairs containing ``truth`` (endpoints inclusive)."""
    arr = np.asarray(intervals, dtype=float).reshape(-1, 2)
    if arr.shape[0] == 0:
        return float("nan")
    return float(np.mean((arr[:, 0] <= truth) & (truth <= arr[:, 1])))
