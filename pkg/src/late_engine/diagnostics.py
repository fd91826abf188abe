"""Assumption checks on observed data and sensitivity analyses on populations.

The sample-level checks (monotonicity implication, relevance, saturation)
see only what an analyst sees.  The sensitivity operations take populations
with counterfactual access on purpose: they quantify exactly the bias an
analyst cannot see, and verify the closed-form bias decompositions against
direct enumeration every time they run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    IdentificationError,
    LateEngineError,
    UnsupportedError,
    WeakInstrumentError,
)
from .estimators import DEFAULT_WEAK_THRESHOLD, HARD_FIRST_STAGE_EPS, first_stage_difference
from .oracle import population_estimand, true_acr, true_basic, true_late
from .population import ComplianceType, ObservedSample, Population, enumerate_cells
from .wstats import wmean, wvar

IDENTITY_TOL = 1e-10
ENUMERATED_EPS = 1e-12


# ---------------------------------------------------------------------------
# Sample-level checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MonotonicityCheck:
    levels: tuple[float, ...]
    differences: tuple[float, ...]
    crossing_levels: tuple[float, ...]
    verdict: str  # "consistent" | "crossing"
    eps: tuple[float, ...]

    def as_dict(self) -> dict:
        return {
            "levels": list(self.levels),
            "differences": list(self.differences),
            "crossing_levels": list(self.crossing_levels),
            "verdict": self.verdict,
            "eps": list(self.eps),
        }


def _survival_differences(sample: ObservedSample, levels: np.ndarray) -> np.ndarray:
    z_lo, z_hi = sample.binary_z_pair()
    m0, m1 = sample.z == z_lo, sample.z == z_hi
    w = sample.weight
    out = np.empty(levels.size)
    for i, j in enumerate(levels):
        p1 = wmean((sample.d[m1] >= j).astype(float), w[m1], "survival at level")
        p0 = wmean((sample.d[m0] >= j).astype(float), w[m0], "survival at level")
        out[i] = p1 - p0
    return out


def monotonicity_check(
    sample: ObservedSample,
    eps: float | None = None,
    bootstrap_b: int = 500,
    seed: int = 0,
) -> MonotonicityCheck:
    """Testable implication of monotonicity: the treatment distribution given
    the high instrument arm first-order dominates the low arm, so no survival
    difference may be negative.

    This is one-sided evidence only: populations mixing compliers and
    defiers can still pass whenever compliers outnumber defiers level by
    level.  On enumerated (weighted) samples the tolerance is zero; on
    sampled rows a one-sided bootstrap band (level 0.95) absorbs noise.
    """
    if isinstance(sample.d_support, tuple):
        levels = np.asarray(sample.d_support, dtype=float)[1:]
    else:
        levels = np.unique(sample.d)[1:]
    if levels.size == 0:
        raise UnsupportedError("treatment takes a single value; nothing to check")
    diffs = _survival_differences(sample, levels)
    if eps is not None:
        eps_vec = np.full(levels.size, float(eps))
    elif sample.weighted:
        # enumerated cells are noise-free: zero tolerance
        eps_vec = np.full(levels.size, ENUMERATED_EPS)
    else:
        rows = []
        for b in range(bootstrap_b):
            rng = np.random.default_rng((seed, b))
            idx = rng.choice(sample.n, size=sample.n)
            rep = ObservedSample(
                y=sample.y[idx], d=sample.d[idx], z=sample.z[idx], weight=None
            )
            try:
                rows.append(_survival_differences(rep, levels))
            except LateEngineError:
                continue  # replicate lost an arm; skip it
        if not rows:
            raise IdentificationError("every bootstrap replicate lost an instrument arm")
        # one-sided band at level 0.95: flag a level only when even the 95th
        # percentile of its resampled difference stays below zero
        q95 = np.percentile(np.array(rows), 95, axis=0)
        eps_vec = np.maximum(q95 - diffs, ENUMERATED_EPS)
    crossing = [float(j) for j, d, e in zip(levels, diffs, eps_vec) if d < -e]
    return MonotonicityCheck(
        levels=tuple(float(v) for v in levels),
        differences=tuple(float(v) for v in diffs),
        crossing_levels=tuple(crossing),
        verdict="crossing" if crossing else "consistent",
        eps=tuple(float(v) for v in eps_vec),
    )


@dataclass(frozen=True)
class RelevanceCheck:
    first_stage: float
    weak: bool
    threshold: float

    def as_dict(self) -> dict:
        return {
            "first_stage": self.first_stage,
            "weak": self.weak,
            "threshold": self.threshold,
        }


def relevance_check(
    sample: ObservedSample, weak_threshold: float = DEFAULT_WEAK_THRESHOLD
) -> RelevanceCheck:
    """First-stage magnitude: hard error at numerical zero, warning flag
    below the practical threshold."""
    fs = first_stage_difference(sample)
    if abs(fs) <= HARD_FIRST_STAGE_EPS:
        raise WeakInstrumentError("instrument does not move treatment at all")
    return RelevanceCheck(
        first_stage=fs, weak=abs(fs) < weak_threshold, threshold=weak_threshold
    )


@dataclass(frozen=True)
class SaturationVerdict:
    passed: bool
    reason: str

    def as_dict(self) -> dict:
        return {"passed": self.passed, "reason": self.reason}


def saturation_check(sample: ObservedSample, specification: str) -> SaturationVerdict:
    """Pass only the full (Z, X)-cell specification.

    Anything short of saturation mixes noncomplier effects with negative
    weights into the estimand, so parametric covariate requests are refused
    outright rather than approximated.
    """
    spec = specification.strip().lower()
    combos, _ = sample.x_cells()
    if len(combos) <= 1:
        return SaturationVerdict(True, "trivially saturated: covariates are constant")
    if spec in ("saturated", "cells", "full_cells"):
        return SaturationVerdict(True, "full (Z, X)-cell saturation")
    return SaturationVerdict(
        False,
        f"specification {specification!r} is not saturated; only full cell "
        "dummies keep the estimand a convex combination of switcher effects",
    )


# ---------------------------------------------------------------------------
# Sensitivity analyses (counterfactual access)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SensitivityReport:
    scenario: str
    true_late: float
    biased_estimand: float
    bias: float
    drivers: dict
    sign_reversed: bool

    def as_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "true_late": self.true_late,
            "biased_estimand": self.biased_estimand,
            "bias": self.bias,
            "drivers": dict(self.drivers),
            "sign_reversed": self.sign_reversed,
        }


def _require_binary(pop: Population, what: str) -> None:
    if pop.is_continuous or len(pop.d_support) != 2 or len(pop.z_support) != 2:
        raise UnsupportedError(f"{what} requires binary instrument and treatment")


def exclusion_sensitivity(pop: Population) -> SensitivityReport:
    """Bias of the observable ratio estimand when noncompliers have a direct
    instrument effect on their outcome while compliers do not.

    The report's product decomposition — mean direct effect among
    noncompliers times the odds of noncompliance — is verified against the
    enumerated bias on every call.
    """
    _require_binary(pop, "exclusion sensitivity")
    z_lo, z_hi = pop.z_support
    labels = pop.classify_units(z_lo, z_hi)
    if any(lab is ComplianceType.DEFIER for lab in labels):
        raise UnsupportedError("exclusion sensitivity assumes monotonicity (no defiers)")
    shares = pop.unit_shares()
    h_total = 0.0
    nc_mass = 0.0
    c_mass = 0.0
    for u, s, lab in zip(pop.units, shares, labels):
        if lab is ComplianceType.COMPLIER:
            if not u.is_z_invariant():
                raise UnsupportedError(
                    f"unit {u.id}: compliers must satisfy the exclusion restriction here"
                )
            c_mass += s
        else:
            d = u.d_at(z_hi)  # noncomplier: same treatment in both arms
            h_total += s * (
                u.y_at(z_hi, d, pop.d_support) - u.y_at(z_lo, d, pop.d_support)
            )
            nc_mass += s
    if c_mass <= 0:
        raise IdentificationError("no compliers: the target parameter is undefined")
    mean_h = h_total / nc_mass if nc_mass > 0 else 0.0
    odds = nc_mass / c_mass
    late = true_late(pop, z=z_hi, w=z_lo)
    biased = population_estimand(pop, "wald")
    bias = biased - late
    if abs(bias - mean_h * odds) > IDENTITY_TOL:
        raise LateEngineError(
            "internal check failed: enumerated bias does not match the "
            f"direct-effect product ({bias!r} vs {mean_h * odds!r})"
        )
    return SensitivityReport(
        scenario="exclusion",
        true_late=late,
        biased_estimand=biased,
        bias=bias,
        drivers={
            "mean_direct_effect_noncompliers": mean_h,
            "odds_noncompliance": odds,
        },
        sign_reversed=biased * late < 0,
    )


def defier_sensitivity(pop: Population) -> SensitivityReport:
    """Bias of the observable ratio estimand when defiers exist: the estimand
    is a non-convex combination loading positively on complier effects and
    negatively on defier effects; verified against enumeration on every call."""
    _require_binary(pop, "defier sensitivity")
    z_lo, z_hi = pop.z_support
    masses = pop.type_masses(z_lo, z_hi)
    p_c = masses[ComplianceType.COMPLIER]
    p_d = masses[ComplianceType.DEFIER]
    if abs(p_c - p_d) <= HARD_FIRST_STAGE_EPS:
        raise WeakInstrumentError(
            "complier and defier masses cancel: first stage is degenerate"
        )
    lam = p_d / (p_c - p_d)
    shares = pop.unit_shares()
    labels = pop.classify_units(z_lo, z_hi)

    def group_effect(target: ComplianceType) -> float:
        sel = [
            (u, s) for u, s, lab in zip(pop.units, shares, labels) if lab is target
        ]
        if not sel:
            return 0.0
        total = sum(s for _, s in sel)
        acc = 0.0
        for u, s in sel:
            y = u.y_vector(z_hi)
            if not u.is_z_invariant():
                raise UnsupportedError(
                    f"unit {u.id}: outcomes depend on the instrument; "
                    "defier sensitivity assumes exclusion"
                )
            acc += s * (y[1] - y[0])
        return acc / total

    delta_c = group_effect(ComplianceType.COMPLIER)
    delta_d = group_effect(ComplianceType.DEFIER)
    combo = (1.0 + lam) * delta_c - lam * delta_d
    biased = population_estimand(pop, "wald")
    if abs(biased - combo) > IDENTITY_TOL:
        raise LateEngineError(
            "internal check failed: enumerated estimand does not match the "
            f"defier combination ({biased!r} vs {combo!r})"
        )
    sign_reversed = (
        delta_c * delta_d > 0 and biased != 0.0 and np.sign(biased) != np.sign(delta_c)
    )
    return SensitivityReport(
        scenario="defiers",
        true_late=delta_c,
        biased_estimand=biased,
        bias=biased - delta_c,
        drivers={
            "lambda": lam,
            "delta_compliers": delta_c,
            "delta_defiers": delta_d,
            "defier_share": p_d,
        },
        sign_reversed=bool(sign_reversed),
    )


# ---------------------------------------------------------------------------
# Regression decompositions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OlsDecomposition:
    slope: float
    att: float
    selection_bias: float

    def as_dict(self) -> dict:
        return {
            "slope": self.slope,
            "att": self.att,
            "selection_bias": self.selection_bias,
        }


def ols_decomposition(pop: Population) -> OlsDecomposition:
    """Split the naive regression slope into the effect on the treated plus
    the selection bias E[Y(0) | D=1] - E[Y(0) | D=0]; the identity is
    verified by enumeration on every call."""
    if pop.is_continuous or len(pop.d_support) != 2:
        raise UnsupportedError("the slope decomposition requires a binary treatment")
    slope = population_estimand(pop, "ols")
    att = true_basic(pop, "att")
    hi = float(pop.d_support[1])
    shares = pop.unit_shares()
    rows_y0, rows_d, rows_w = [], [], []
    for u, s in zip(pop.units, shares):
        if not u.is_z_invariant():
            raise UnsupportedError(
                f"unit {u.id}: outcomes depend on the instrument; Y(0) is ambiguous"
            )
        y0 = float(u.y_vector(pop.z_support[0])[0])
        for z in pop.z_support:
            pz = pop.z_dist[z]
            if pz <= 0:
                continue
            rows_y0.append(y0)
            rows_d.append(float(u.d_at(z)))
            rows_w.append(s * pz)
    y0 = np.array(rows_y0)
    d = np.array(rows_d)
    w = np.array(rows_w)
    treated = d == hi
    bias = wmean(y0[treated], w[treated], "E[Y(0) | treated]") - wmean(
        y0[~treated], w[~treated], "E[Y(0) | untreated]"
    )
    if abs(slope - (att + bias)) > IDENTITY_TOL:
        raise LateEngineError(
            "internal check failed: slope does not decompose into ATT plus "
            f"selection bias ({slope!r} vs {att + bias!r})"
        )
    return OlsDecomposition(slope=slope, att=att, selection_bias=bias)


@dataclass(frozen=True)
class WeightedEffectReport:
    slope: float
    weighted_effect: float
    weight_mean: float
    weight_max: float

    def as_dict(self) -> dict:
        return {
            "slope": self.slope,
            "weighted_effect": self.weighted_effect,
            "weight_mean": self.weight_mean,
            "weight_max": self.weight_max,
        }


def ols_weighted_effect(pop: Population) -> WeightedEffectReport:
    """On populations built with linear effects and no selection on potential
    outcomes, the regression slope equals the mean of unit effects weighted
    by the squared centered treatment; both sides are enumerated."""
    from .scenarios import TAG_LINEAR_EFFECTS, TAG_NO_SELECTION

    required = {TAG_LINEAR_EFFECTS, TAG_NO_SELECTION}
    if not required.issubset(set(pop.tags)):
        raise UnsupportedError(
            "population is not certified linear-effects/no-selection; "
            "the weighted-effect identity only holds by construction"
        )
    levels = np.asarray(pop.d_support, dtype=float)
    slope = population_estimand(pop, "ols")
    shares = pop.unit_shares()
    rows_d, rows_w, rows_delta = [], [], []
    for u, s in zip(pop.units, shares):
        y = u.y_vector(pop.z_support[0])
        delta = (y[1] - y[0]) / (levels[1] - levels[0])
        fitted = y[0] + delta * (levels - levels[0])
        if np.max(np.abs(fitted - y)) > 1e-9:
            raise UnsupportedError(f"unit {u.id}: outcome is not linear in treatment")
        for z in pop.z_support:
            pz = pop.z_dist[z]
            if pz <= 0:
                continue
            rows_d.append(float(u.d_at(z)))
            rows_w.append(s * pz)
            rows_delta.append(float(delta))
    d = np.array(rows_d)
    w = np.array(rows_w)
    delta_rows = np.array(rows_delta)
    mean_d = wmean(d, w, "E[D]")
    var_d = wvar(d, w, "V(D)")
    if var_d <= HARD_FIRST_STAGE_EPS:
        raise WeakInstrumentError("treatment does not vary")
    weights = (d - mean_d) ** 2 / var_d
    weighted_effect = wmean(weights * delta_rows, w, "weighted effect")
    w_mean = wmean(weights, w, "E[W]")
    if abs(w_mean - 1.0) > 1e-12:
        raise LateEngineError(f"internal check failed: E[W] = {w_mean!r}, expected 1")
    if abs(slope - weighted_effect) > IDENTITY_TOL:
        raise LateEngineError(
            "internal check failed: slope does not match the weighted effect "
            f"({slope!r} vs {weighted_effect!r})"
        )
    return WeightedEffectReport(
        slope=slope,
        weighted_effect=weighted_effect,
        weight_mean=w_mean,
        weight_max=float(weights.max()),
    )


@dataclass(frozen=True)
class MisparameterizationResult:
    threshold: float
    recoded_wald: float
    acr: float
    ratio: float
    sign_agrees: bool

    def as_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "recoded_wald": self.recoded_wald,
            "acr": self.acr,
            "ratio": self.ratio,
            "sign_agrees": self.sign_agrees,
        }


def misparameterization_experiment(pop: Population, j_star: float) -> MisparameterizationResult:
    """Recode an ordered treatment as the indicator of reaching a threshold
    and compare the resulting ratio estimand to the true per-level response
    combination: the recoded value keeps the sign but inflates magnitude."""
    if pop.is_continuous or len(pop.d_support) < 3:
        raise UnsupportedError("the experiment needs an ordered multi-valued treatment")
    if pop.has_defiers():
        raise UnsupportedError("the experiment assumes monotonicity")
    levels = [float(v) for v in pop.d_support]
    if float(j_star) not in levels or float(j_star) == levels[0]:
        raise ConfigError(f"threshold must be one of the nonzero treatment levels {levels[1:]}")
    sample = enumerate_cells(pop)
    z_lo, z_hi = pop.binary_z_pair()
    w = sample.weight
    m0, m1 = sample.z == float(z_lo), sample.z == float(z_hi)
    itt = wmean(sample.y[m1], w[m1], "outcome arm mean") - wmean(
        sample.y[m0], w[m0], "outcome arm mean"
    )
    recoded = (sample.d >= float(j_star)).astype(float)
    fs = wmean(recoded[m1], w[m1], "recoded first stage") - wmean(
        recoded[m0], w[m0], "recoded first stage"
    )
    if abs(fs) <= HARD_FIRST_STAGE_EPS:
        raise WeakInstrumentError("recoded treatment has zero first stage")
    recoded_wald = itt / fs
    acr = true_acr(pop, z=z_hi, w=z_lo).value
    ratio = recoded_wald / acr if acr != 0 else float("inf")
    sign_agrees = (recoded_wald == 0 and acr == 0) or recoded_wald * acr > 0
    return MisparameterizationResult(
        threshold=float(j_star),
        recoded_wald=recoded_wald,
        acr=acr,
        ratio=ratio,
        sign_agrees=bool(sign_agrees),
    )
