"""Step-function CDFs with the left-continuous inverse used for quantiles.

The quantile convention matters for discrete outcomes: everywhere in this
package the inverse is ``inf{y : F(y) >= tau}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IdentificationError


@dataclass(frozen=True)
class StepCDF:
    """Right-continuous step CDF: ``values[i] = F(points[i])``."""

    points: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.points) != len(self.values) or not self.points:
            raise ValueError("points and values must be nonempty and of equal length")
        if any(b < a for a, b in zip(self.points, self.points[1:])):
            raise ValueError("points must be ascending")

    def at(self, y: float) -> float:
        """F(y) = mass at or below y."""
        idx = np.searchsorted(self.points, y, side="right") - 1
        return 0.0 if idx < 0 else self.values[idx]

    def quantile(self, tau: float) -> float:
        """Left-continuous inverse: the smallest point where F reaches tau.

        Values within 1e-9 of tau count as reaching it, so inversion is
        stable when tau lands exactly on a step computed in floating point.
        """
        if not 0.0 < tau < 1.0:
            raise ValueError("tau must be in (0, 1)")
        vals = np.asarray(self.values)
        idx = int(np.searchsorted(vals, tau - 1e-9, side="left"))
        if idx >= len(self.points):
            raise IdentificationError(f"CDF never reaches level {tau}")
        return float(self.points[idx])

    def as_dict(self) -> dict:
        return {"y": list(self.points), "F": list(self.values)}


def cdf_from_weighted_values(values, weights) -> StepCDF:
    """Exact step CDF of a weighted finite sample (weights normalized)."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    total = float(weights.sum())
    if total <= 0:
        raise IdentificationError("cannot build a CDF from zero total mass")
    order = np.argsort(values, kind="stable")
    v = values[order]
    w = weights[order] / total
    pts: list[float] = []
    cum: list[float] = []
    acc = 0.0
    for val, mass in zip(v, w):
        acc += mass
        if pts and val == pts[-1]:
            cum[-1] = acc
        else:
            pts.append(float(val))
            cum.append(acc)
    cum[-1] = 1.0  # guard against rounding drift in the top step
    return StepCDF(tuple(pts), tuple(cum))
