"""Estimators over observed samples only, with bootstrap inference.

Every estimator consumes an :class:`ObservedSample` (optionally row-weighted,
so enumerated populations flow through the same code) and returns an
:class:`EstimateReport`.  Ratio estimands report their first stage and raise
a hard error when it is numerically zero; below the practical threshold
(default 0.01) they only flag.

Covariates are handled exclusively through full (Z, X)-cell saturation;
parametric covariate adjustment is refused rather than silently fitted.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    ConditioningError,
    ConfigError,
    EstimationError,
    InferenceError,
    LateEngineError,
    UnsupportedError,
    WeakInstrumentError,
)
from .population import ObservedSample
from .wstats import wcov, wmean, wvar

HARD_FIRST_STAGE_EPS = 1e-12
DEFAULT_WEAK_THRESHOLD = 0.01

FLAG_WEAK = "weak_first_stage"
FLAG_G_RANKING = "g_ranking_violation"
FLAG_WEIGHT_CROSSING = "weight_crossing"
FLAG_NO_CELL_VARIATION = "cells_without_instrument_variation"


@dataclass(frozen=True)
class EstimateReport:
    """Point estimate plus the diagnostics needed to read it honestly."""

    kind: str
    point: float
    n: int
    first_stage: float | None = None
    weights_hat: tuple[float, ...] | None = None
    se: float | None = None
    ci: tuple[float, float] | None = None
    flags: tuple[str, ...] = ()
    dropped_cells: tuple = ()

    def __post_init__(self):
        if not np.isfinite(self.point):
            raise EstimationError(f"{self.kind}: non-finite point estimate")

    def with_inference(self, boot: "BootstrapResult") -> "EstimateReport":
        flags = self.flags
        if boot.n_failed:
            flags = flags + (f"bootstrap_failed_replicates:{boot.n_failed}",)
        return replace(self, se=boot.se, ci=boot.ci, flags=flags)

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "point": self.point,
            "first_stage": self.first_stage,
            "weights_hat": list(self.weights_hat) if self.weights_hat is not None else None,
            "se": self.se,
            "ci": list(self.ci) if self.ci is not None else None,
            "n": self.n,
            "flags": list(self.flags),
            "dropped_cells": [list(c) if isinstance(c, tuple) else c for c in self.dropped_cells],
        }


# ---------------------------------------------------------------------------
# Arm helpers
# ---------------------------------------------------------------------------


def _arm_masks(sample: ObservedSample) -> tuple[np.ndarray, np.ndarray]:
    z_lo, z_hi = sample.binary_z_pair()
    m0 = sample.z == z_lo
    m1 = sample.z == z_hi
    if sample.weight[m0].sum() <= 0 or sample.weight[m1].sum() <= 0:
        raise ConditioningError("an instrument arm carries no mass")
    return m0, m1


def _arm_diff(values: np.ndarray, sample: ObservedSample, what: str) -> float:
    m0, m1 = _arm_masks(sample)
    w = sample.weight
    return wmean(values[m1], w[m1], what) - wmean(values[m0], w[m0], what)


def first_stage_difference(sample: ObservedSample) -> float:
    return _arm_diff(sample.d, sample, "first stage")


def _check_first_stage(fs: float, weak_threshold: float, flags: list[str]) -> None:
    if abs(fs) <= HARD_FIRST_STAGE_EPS:
        raise WeakInstrumentError("zero first stage: ratio estimand undefined")
    if abs(fs) < weak_threshold:
        flags.append(FLAG_WEAK)


# ---------------------------------------------------------------------------
# Core estimators
# ---------------------------------------------------------------------------


def wald(sample: ObservedSample, weak_threshold: float = DEFAULT_WEAK_THRESHOLD) -> EstimateReport:
    """Ratio of instrument-arm outcome difference to treatment difference."""
    flags: list[str] = []
    fs = first_stage_difference(sample)
    _check_first_stage(fs, weak_threshold, flags)
    num = _arm_diff(sample.y, sample, "outcome arm means")
    return EstimateReport(
        kind="wald", point=num / fs, n=sample.n, first_stage=fs, flags=tuple(flags)
    )


def itt_hat(sample: ObservedSample) -> EstimateReport:
    """Outcome arm-mean difference; needs independence only, no first stage."""
    point = _arm_diff(sample.y, sample, "outcome arm means")
    return EstimateReport(kind="itt", point=point, n=sample.n)


def ols_slope(sample: ObservedSample) -> EstimateReport:
    """Slope of the weighted regression of Y on D and a constant."""
    var = wvar(sample.d, sample.weight, "V(D)")
    if var <= HARD_FIRST_STAGE_EPS:
        raise WeakInstrumentError("treatment does not vary; OLS slope undefined")
    point = wcov(sample.y, sample.d, sample.weight) / var
    return EstimateReport(kind="ols", point=point, n=sample.n, first_stage=var)


def iv_g(
    sample: ObservedSample, g, weak_threshold: float = DEFAULT_WEAK_THRESHOLD
) -> EstimateReport:
    """Covariance-ratio estimator instrumenting with a scalar function of Z.

    Flags when the empirical ranking of g disagrees with the ranking of the
    estimated treatment propensity across instrument values.
    """
    flags: list[str] = []
    gz = np.array([float(g(v)) for v in sample.z])
    den = wcov(sample.d, gz, sample.weight)
    if abs(den) <= HARD_FIRST_STAGE_EPS:
        raise WeakInstrumentError("g(Z) has zero sample covariance with treatment")
    # practical warning is scale-free: covariances shrink quadratically, so
    # compare the instrument-treatment correlation against the threshold
    scale = wvar(sample.d, sample.weight) * wvar(gz, sample.weight)
    if scale > 0 and abs(den) / np.sqrt(scale) < weak_threshold:
        flags.append(FLAG_WEAK)
    # empirical ranking check: sort cells by estimated E[D | Z = z]
    cells = []
    for z in np.unique(sample.z):
        m = sample.z == z
        cells.append((wmean(sample.d[m], sample.weight[m], "cell mean"), float(g(z))))
    cells.sort()
    g_along = [gv for _, gv in cells]
    if any(b < a - 1e-12 for a, b in zip(g_along, g_along[1:])):
        flags.append(FLAG_G_RANKING)
    num = wcov(sample.y, gz, sample.weight)
    return EstimateReport(
        kind="iv_g", point=num / den, n=sample.n, first_stage=den, flags=tuple(flags)
    )


def _wls_slope(columns: list[np.ndarray], y: np.ndarray, w: np.ndarray, cells_for_error) -> float:
    """Weighted least squares; the slope is the first column's coefficient."""
    design = np.column_stack(columns)
    sw = np.sqrt(w)
    beta, _, rank, _ = np.linalg.lstsq(design * sw[:, None], y * sw, rcond=None)
    if rank < design.shape[1]:
        raise EstimationError(
            "second-stage design is rank deficient (no instrument variation "
            f"within cells {cells_for_error})",
            cells=list(cells_for_error),
        )
    return float(beta[0])


def tsls_saturated(
    sample: ObservedSample, weak_threshold: float = DEFAULT_WEAK_THRESHOLD
) -> EstimateReport:
    """Two stages with a saturated first stage: fitted treatment is the
    per-Z-cell mean; second stage regresses Y on it and a constant."""
    flags: list[str] = []
    w = sample.weight
    dhat = np.empty(sample.n)
    observed_z = np.unique(sample.z)
    for z in observed_z:
        m = sample.z == z
        dhat[m] = wmean(sample.d[m], w[m], "first-stage cell mean")
    var = wvar(dhat, w)
    if var <= HARD_FIRST_STAGE_EPS:
        raise WeakInstrumentError("saturated first stage is constant across instrument cells")
    var_d = wvar(sample.d, w)
    if var_d > 0 and np.sqrt(var / var_d) < weak_threshold:
        flags.append(FLAG_WEAK)  # fitted treatment explains almost nothing
    point = _wls_slope([dhat, np.ones(sample.n)], sample.y, w, [])
    dropped: tuple = ()
    if sample.z_support is not None:
        dropped = tuple(
            float(z) for z in sample.z_support if float(z) not in set(observed_z)
        )
    return EstimateReport(
        kind="tsls_sat",
        point=point,
        n=sample.n,
        first_stage=var,
        flags=tuple(flags),
        dropped_cells=dropped,
    )


def tsls_saturated_x(
    sample: ObservedSample,
    covariate_mode: str = "saturated",
    weak_threshold: float = DEFAULT_WEAK_THRESHOLD,
) -> EstimateReport:
    """Saturated-in-(Z, X) first stage with covariate-cell indicators in the
    second stage.  Any other covariate handling is refused: without
    saturation the estimand stops being a convex combination of group
    effects, so a non-saturated request is an error, not a fallback.
    """
    if covariate_mode != "saturated":
        raise UnsupportedError(
            f"covariate mode {covariate_mode!r} refused: only the fully saturated "
            "(Z, X)-cell specification identifies a convex combination of "
            "switcher effects (flag: non_saturated_covariates)"
        )
    flags: list[str] = []
    w = sample.weight
    combos, cells = sample.x_cells()
    z_values = np.unique(sample.z)
    dhat = np.empty(sample.n)
    no_variation = []
    for c in range(len(combos)):
        cm = cells == c
        for z in z_values:
            m = cm & (sample.z == z)
            if np.any(m):
                dhat[m] = wmean(sample.d[m], w[m], "first-stage cell mean")
        if wvar(dhat[cm], w[cm]) <= HARD_FIRST_STAGE_EPS:
            no_variation.append(combos[c])
    if len(no_variation) == len(combos):
        raise EstimationError(
            "no covariate cell has instrument variation in treatment",
            cells=no_variation,
        )
    if no_variation:
        flags.append(FLAG_NO_CELL_VARIATION)
    dummies = [(cells == c).astype(float) for c in range(len(combos))]
    point = _wls_slope([dhat, *dummies], sample.y, w, no_variation)
    dropped = _empty_declared_cells(sample)
    return EstimateReport(
        kind="tsls_sat_x",
        point=point,
        n=sample.n,
        first_stage=float(wvar(dhat, w)),
        flags=tuple(flags),
        dropped_cells=tuple(dropped),
    )


def _empty_declared_cells(sample: ObservedSample) -> list:
    """Declared (z, x) cells with no rows; estimation proceeds without them
    but they are surfaced so tests can forbid silent drops."""
    if sample.z_support is None or not sample.covariate_schema:
        return []
    names = tuple(sorted(sample.covariate_schema))
    combos_declared = [()]
    for name in names:
        combos_declared = [
            c + (str(lbl),) for c in combos_declared for lbl in sample.covariate_schema[name]
        ]
    observed = set()
    cols = [sample.x[name] for name in names]
    for i in range(sample.n):
        observed.add((float(sample.z[i]),) + tuple(col[i] for col in cols))
    out = []
    for z in sample.z_support:
        for combo in combos_declared:
            if (float(z),) + combo not in observed:
                out.append((float(z),) + combo)
    return out


@dataclass(frozen=True)
class AcrWeightsHat:
    """Estimated per-level switching weights from the two conditional ECDFs."""

    levels: tuple[float, ...]
    raw: tuple[float, ...]
    normalized: tuple[float, ...] | None
    flags: tuple[str, ...] = ()


def acr_weights_hat(sample: ObservedSample) -> AcrWeightsHat:
    """Differences of the D-given-Z survival functions across arms; these are
    the estimated weights of the per-level effects.  A negative raw
    difference is evidence against monotonicity and disables normalization.
    """
    m0, m1 = _arm_masks(sample)
    w = sample.weight
    if sample.d_support is not None and not isinstance(sample.d_support, tuple):
        raise UnsupportedError("weight estimation requires a discrete treatment")
    levels = (
        np.asarray(sample.d_support, dtype=float)
        if sample.d_support is not None
        else np.unique(sample.d)
    )
    raw = []
    for j in levels[1:]:
        p1 = wmean((sample.d[m1] >= j).astype(float), w[m1], "survival at level")
        p0 = wmean((sample.d[m0] >= j).astype(float), w[m0], "survival at level")
        raw.append(p1 - p0)
    raw_arr = np.array(raw)
    flags: tuple[str, ...] = ()
    normalized = None
    if np.any(raw_arr < 0):
        flags = (FLAG_WEIGHT_CROSSING,)
    elif raw_arr.sum() > 0:
        normalized = tuple(float(v) for v in raw_arr / raw_arr.sum())
    return AcrWeightsHat(
        levels=tuple(float(v) for v in levels[1:]),
        raw=tuple(float(v) for v in raw_arr),
        normalized=normalized,
        flags=flags,
    )


# ---------------------------------------------------------------------------
# Bootstrap
# ---------------------------------------------------------------------------

ESTIMATORS = {
    "wald": wald,
    "itt": itt_hat,
    "ols": ols_slope,
    "tsls_sat": tsls_saturated,
    "tsls_sat_x": tsls_saturated_x,
}


@dataclass(frozen=True)
class BootstrapResult:
    se: float
    ci: tuple[float, float]
    b: int
    n_failed: int
    points: tuple[float, ...] = field(repr=False, default=())


def engine_threads() -> int:
    """Thread cap from LATE_ENGINE_THREADS (0 or unset = single-threaded auto)."""
    raw = os.environ.get("LATE_ENGINE_THREADS", "0")
    try:
        val = int(raw)
    except ValueError:
        raise ConfigError(f"LATE_ENGINE_THREADS must be an integer, got {raw!r}") from None
    return max(0, val)


def resolve_estimator(estimator, g=None):
    if callable(estimator):
        return estimator
    key = str(estimator).lower()
    if key == "iv_g":
        if g is None:
            raise ConfigError("iv_g requires an instrument function g")
        return lambda s: iv_g(s, g)
    if key not in ESTIMATORS:
        raise ConfigError(f"unknown estimator {estimator!r}")
    return ESTIMATORS[key]


def _resample(sample: ObservedSample, rng: np.random.Generator) -> ObservedSample:
    n = sample.n
    p = sample.weight / sample.weight.sum()
    uniform = np.allclose(p, 1.0 / n)
    idx = rng.choice(n, size=n, p=None if uniform else p)
    return ObservedSample(
        y=sample.y[idx],
        d=sample.d[idx],
        z=sample.z[idx],
        x={name: col[idx] for name, col in sample.x.items()},
        z_support=sample.z_support,
        d_support=sample.d_support,
        covariate_schema=sample.covariate_schema,
    )


def bootstrap(
    sample: ObservedSample,
    estimator,
    b: int = 500,
    seed: int = 0,
    g=None,
    max_failure_rate: float = 0.2,
    threads: int | None = None,
) -> BootstrapResult:
    """Nonparametric row-resampling standard error and percentile interval.

    Per-replicate generators are seeded from (seed, replicate index) up
    front, so results do not depend on scheduling; replicates that fail an
    estimator precondition (an empty arm after resampling, say) are
    excluded and counted.
    """
    if b < 100:
        raise ConfigError("bootstrap needs at least 100 replicates")
    fn = resolve_estimator(estimator, g=g)
    if threads is None:
        threads = engine_threads()

    def one(i: int) -> float | None:
        rng = np.random.default_rng((seed, i))
        try:
            return fn(_resample(sample, rng)).point
        except LateEngineError:
            return None

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(b)))
    else:
        results = [one(i) for i in range(b)]
    points = np.array([r for r in results if r is not None], dtype=float)
    n_failed = b - points.size
    if n_failed > max_failure_rate * b:
        raise InferenceError(
            f"{n_failed}/{b} bootstrap replicates failed preconditions; "
            "the sample is too fragile for resampling inference"
        )
    se = float(points.std(ddof=1)) if points.size > 1 else 0.0
    lo, hi = np.percentile(points, [2.5, 97.5])
    return BootstrapResult(
        se=se, ci=(float(lo), float(hi)), b=b, n_failed=n_failed, points=tuple(points)
    )
