"""Everything learnable about the complier subpopulation from observed data.

Compliers cannot be pointed at individually, but their share, covariate
profile, outcome distributions, and any mean of an observable function are
identified with a binary instrument and binary treatment.  The workhorses
are kappa weighting (whose weighted expectations isolate complier means)
and arm-difference ratios on indicator outcomes (which trace out the two
complier potential-outcome CDFs).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curves import StepCDF
from .errors import (
    ConditioningError,
    ConfigError,
    IdentificationError,
    OverlapError,
    UnsupportedError,
)
from .estimators import first_stage_difference
from .population import ObservedSample
from .wstats import wmean

MIN_SHARE = 1e-12
MONOTONE_EPS = 1e-12

FLAG_PZ_ESTIMATED = "assignment_probabilities_estimated"
FLAG_CDF_CLIPPED = "cdf_clipped"
FLAG_CDF_REARRANGED = "cdf_rearranged"


def _binary_codes(sample: ObservedSample) -> tuple[np.ndarray, np.ndarray]:
    """0/1 codes for instrument and treatment (binary both)."""
    z_lo, z_hi = sample.binary_z_pair()
    if isinstance(sample.d_support, tuple) and len(sample.d_support) == 2:
        d_vals = np.asarray(sample.d_support, dtype=float)
    else:
        d_vals = sample.d_values()
    if d_vals.size != 2:
        raise UnsupportedError("complier analysis requires a binary treatment")
    zi = (sample.z == z_hi).astype(float)
    di = (sample.d == d_vals[1]).astype(float)
    return zi, di


def _row_cells(sample: ObservedSample) -> tuple[tuple, np.ndarray]:
    return sample.x_cells()


@dataclass(frozen=True)
class KappaWeights:
    values: np.ndarray
    pz_by_cell: dict
    flags: tuple[str, ...]

    def negative_fraction(self, weights: np.ndarray) -> float:
        return wmean((self.values < 0).astype(float), weights, "negative kappa fraction")


def _resolve_pz(sample: ObservedSample, pz_of_x) -> tuple[dict, bool]:
    combos, cells = _row_cells(sample)
    zi, _ = _binary_codes(sample)
    estimated = pz_of_x is None
    table: dict = {}
    for c, combo in enumerate(combos):
        key = combo[0] if len(combo) == 1 else combo
        if estimated:
            m = cells == c
            pz = wmean(zi[m], sample.weight[m], "cell assignment frequency")
        elif isinstance(pz_of_x, (int, float)):
            pz = float(pz_of_x)
        else:
            if key not in pz_of_x and combo not in pz_of_x:
                raise ConfigError(f"pz_of_x missing covariate cell {key!r}")
            pz = float(pz_of_x.get(key, pz_of_x.get(combo)))
        if not 0.0 < pz < 1.0:
            raise OverlapError(
                f"assignment probability {pz!r} outside (0, 1) in covariate cell {key!r}"
            )
        table[combo] = pz
    return table, estimated


def kappa(sample: ObservedSample, pz_of_x=None) -> KappaWeights:
    """Per-row weights 1 - D(1-Z)/P(Z=0|X) - (1-D)Z/P(Z=1|X).

    Negative values on noncomplier-consistent rows are by construction;
    their expectation cancels noncompliers out of weighted means.
    """
    zi, di = _binary_codes(sample)
    table, estimated = _resolve_pz(sample, pz_of_x)
    combos, cells = _row_cells(sample)
    pz = np.array([table[combos[c]] for c in cells])
    values = 1.0 - di * (1.0 - zi) / (1.0 - pz) - (1.0 - di) * zi / pz
    flags = (FLAG_PZ_ESTIMATED,) if estimated else ()
    return KappaWeights(values=values, pz_by_cell=dict(table), flags=flags)


def complier_mean(
    sample: ObservedSample, g, pz_of_x=None, min_share: float = MIN_SHARE
) -> float:
    """E[g(Y, D, X) | complier] as the kappa-weighted mean of g over the
    estimated complier share (the first-stage difference)."""
    share = first_stage_difference(sample)
    if share <= min_share:
        raise IdentificationError(f"complier share {share!r} too small to condition on")
    k = kappa(sample, pz_of_x)
    names = tuple(sorted(sample.x))
    gv = np.array(
        [
            float(g(y, d, {n: sample.x[n][i] for n in names}))
            for i, (y, d) in enumerate(zip(sample.y, sample.d))
        ]
    )
    return wmean(k.values * gv, sample.weight, "kappa-weighted mean") / share


def bayes_ratio(sample: ObservedSample, x_value, name: str | None = None) -> float:
    """How over- or under-represented a covariate value is among compliers:
    within-cell first stage over the overall first stage."""
    if name is None:
        if len(sample.x) != 1:
            raise ConfigError("name is required when the sample has several covariates")
        name = next(iter(sample.x))
    if name not in sample.x:
        raise ConfigError(f"unknown covariate {name!r}")
    overall = first_stage_difference(sample)
    if overall <= MIN_SHARE:
        raise IdentificationError("overall complier share is zero")
    m = sample.x[name] == str(x_value)
    if not np.any(m):
        raise ConditioningError(f"no rows with {name} = {x_value!r}")
    sub = ObservedSample(
        y=sample.y[m],
        d=sample.d[m],
        z=sample.z[m],
        weight=sample.weight[m],
    )
    return first_stage_difference(sub) / overall


@dataclass(frozen=True)
class EstimatedCdf:
    curve: StepCDF
    raw: tuple[float, ...]
    flags: tuple[str, ...]


def complier_outcome_cdf(
    sample: ObservedSample, arm: int, y_grid=None, min_share: float = MIN_SHARE
) -> EstimatedCdf:
    """Complier potential-outcome CDF for one treatment arm via arm-difference
    ratios on indicator outcomes; the raw curve is clipped to [0, 1] and
    rearranged to be monotone, with flags when the repair did anything."""
    if arm not in (0, 1):
        raise ConfigError("arm must be 0 or 1")
    zi, di = _binary_codes(sample)
    share = first_stage_difference(sample)
    if share <= min_share:
        raise IdentificationError(f"complier share {share!r} too small to condition on")
    grid = np.unique(sample.y) if y_grid is None else np.asarray(sorted(y_grid), dtype=float)
    w = sample.weight
    m1 = zi == 1.0
    m0 = zi == 0.0
    raw = np.empty(grid.size)
    for i, yv in enumerate(grid):
        ind = (sample.y <= yv).astype(float)
        if arm == 1:
            raw[i] = (
                wmean(ind[m1] * di[m1], w[m1], "arm mean") - wmean(ind[m0] * di[m0], w[m0], "arm mean")
            ) / share
        else:
            raw[i] = (
                wmean(ind[m0] * (1.0 - di[m0]), w[m0], "arm mean")
                - wmean(ind[m1] * (1.0 - di[m1]), w[m1], "arm mean")
            ) / share
    flags: list[str] = []
    if np.any(raw < -MONOTONE_EPS) or np.any(raw > 1.0 + MONOTONE_EPS):
        flags.append(FLAG_CDF_CLIPPED)
    clipped = np.clip(raw, 0.0, 1.0)
    if np.any(np.diff(clipped) < -MONOTONE_EPS):
        flags.append(FLAG_CDF_REARRANGED)
    mono = np.maximum.accumulate(clipped)
    if mono[-1] >= 1.0 - 1e-9:
        mono[-1] = 1.0
    curve = StepCDF(tuple(float(v) for v in grid), tuple(float(v) for v in mono))
    return EstimatedCdf(curve=curve, raw=tuple(float(v) for v in raw), flags=tuple(flags))


def qte(sample: ObservedSample, tau: float, min_share: float = MIN_SHARE) -> float:
    """Quantile treatment effect on compliers: difference of the two
    estimated complier CDFs inverted at tau (left-continuous inverse)."""
    if not 0.0 < tau < 1.0:
        raise ConfigError("tau must be in (0, 1)")
    f1 = complier_outcome_cdf(sample, 1, min_share=min_share)
    f0 = complier_outcome_cdf(sample, 0, min_share=min_share)
    return f1.curve.quantile(tau) - f0.curve.quantile(tau)


@dataclass(frozen=True)
class ComplierProfile:
    share: float
    share_of_treated: float
    covariate_ratios: dict
    outcome_cdf_0: StepCDF
    outcome_cdf_1: StepCDF
    kappa_mean: float
    kappa_negative_fraction: float
    flags: tuple[str, ...]

    def as_dict(self) -> dict:
        return {
            "share": self.share,
            "share_of_treated": self.share_of_treated,
            "covariate_ratios": {
                name: dict(ratios) for name, ratios in self.covariate_ratios.items()
            },
            "outcome_cdf_0": self.outcome_cdf_0.as_dict(),
            "outcome_cdf_1": self.outcome_cdf_1.as_dict(),
            "kappa": {
                "mean": self.kappa_mean,
                "negative_fraction": self.kappa_negative_fraction,
            },
            "flags": list(self.flags),
        }


def complier_profile(sample: ObservedSample, pz_of_x=None) -> ComplierProfile:
    """Full complier profile: share, share of the treated, covariate tilts,
    both outcome CDFs, and kappa diagnostics."""
    zi, di = _binary_codes(sample)
    share = first_stage_difference(sample)
    if share <= MIN_SHARE:
        raise IdentificationError("complier share is zero")
    p_assigned = wmean(zi, sample.weight, "assignment share")
    p_treated = wmean(di, sample.weight, "treated share")
    if p_treated <= 0:
        raise ConditioningError("no treated rows")
    ratios: dict = {}
    for name in sorted(sample.x):
        ratios[name] = {
            label: bayes_ratio(sample, label, name) for label in np.unique(sample.x[name])
        }
    k = kappa(sample, pz_of_x)
    f0 = complier_outcome_cdf(sample, 0)
    f1 = complier_outcome_cdf(sample, 1)
    flags = tuple(dict.fromkeys(k.flags + f0.flags + f1.flags))
    return ComplierProfile(
        share=share,
        share_of_treated=share * p_assigned / p_treated,
        covariate_ratios=ratios,
        outcome_cdf_0=f0.curve,
        outcome_cdf_1=f1.curve,
        kappa_mean=float(wmean(k.values, sample.weight, "mean kappa")),
        kappa_negative_fraction=k.negative_fraction(sample.weight),
        flags=flags,
    )
