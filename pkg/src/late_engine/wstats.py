"""Weighted moment helpers shared by the oracle, estimators, and diagnostics.

All expectations in this package are finite weighted sums.  Conditional
moments on zero-mass events raise :class:`ConditioningError` instead of
returning 0/0.
"""

from __future__ import annotations

import numpy as np

from .errors import ConditioningError

MASS_EPS = 0.0  # conditioning mass must be strictly positive


def wmean(values: np.ndarray, weights: np.ndarray, what: str = "mean") -> float:
    """Weighted mean; errors when total weight is not positive."""
    total = float(np.sum(weights))
    if total <= MASS_EPS:
        raise ConditioningError(f"zero mass when computing {what}")
    return float(np.dot(values, weights) / total)


def wmean_where(
    values: np.ndarray, weights: np.ndarray, mask: np.ndarray, what: str = "conditional mean"
) -> float:
    return wmean(values[mask], weights[mask], what)


def wvar(values: np.ndarray, weights: np.ndarray, what: str = "variance") -> float:
    m = wmean(values, weights, what)
    return wmean((values - m) ** 2, weights, what)


def wcov(a: np.ndarray, b: np.ndarray, weights: np.ndarray, what: str = "covariance") -> float:
    ma = wmean(a, weights, what)
    mb = wmean(b, weights, what)
    return wmean((a - ma) * (b - mb), weights, what)
