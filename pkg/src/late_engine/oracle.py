"""True causal parameters and theorem right-hand sides from counterfactuals.

Everything here has full access to the potential tables and computes by
direct enumeration (or grid integration for continuous treatment).  The
companion :func:`population_estimand` computes the *observable* left-hand
sides (Wald, IV, saturated TSLS, OLS) from the joint law of (Y, D, Z, X)
only, via :func:`enumerate_cells` moments, so each identification equality
is checked across two independent code paths.

Convention: for binary-instrument parameters the pair is the declared
support order (second value is the "assigned" arm).  Multi-instrument
combinations rank values by ascending mean potential treatment and error
when some unit moves against that ranking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curves import StepCDF, cdf_from_weighted_values
from .errors import (
    ConditioningError,
    ConfigError,
    IdentificationError,
    MonotonicityViolationError,
    UnsupportedError,
    WeakInstrumentError,
)
from .population import Population, enumerate_cells
from .wstats import wcov, wmean, wvar

FIRST_STAGE_EPS = 1e-12


# ---------------------------------------------------------------------------
# Per-unit helpers
# ---------------------------------------------------------------------------


def _invariant_y(unit, what: str) -> np.ndarray:
    if not unit.is_z_invariant():
        raise UnsupportedError(
            f"unit {unit.id}: outcomes depend on the instrument; {what} is not defined"
        )
    return unit.y_vector(next(iter(unit.y_of_zd)))


def _binary_effects(pop: Population, units, what: str) -> np.ndarray:
    if pop.is_continuous or len(pop.d_support) != 2:
        raise UnsupportedError(f"{what} requires a binary treatment")
    return np.array([_invariant_y(u, what)[1] - _invariant_y(u, what)[0] for u in units])


def _require_unit_spacing(pop: Population, what: str) -> np.ndarray:
    levels = np.asarray(pop.d_support, dtype=float)
    if levels.size < 2 or not np.allclose(np.diff(levels), 1.0, rtol=0, atol=1e-12):
        raise UnsupportedError(f"{what} requires consecutive unit-spaced treatment levels")
    return levels


def _mean_potential_treatment(pop: Population, z) -> float:
    return float(np.dot(pop.unit_shares(), [u.d_at(z) for u in pop.units]))


# ---------------------------------------------------------------------------
# Scalar parameters
# ---------------------------------------------------------------------------


def true_late(pop: Population, z=None, w=None) -> float:
    """Average effect among units whose treatment differs between the two
    instrument values (the switchers)."""
    if z is None or w is None:
        w, z = pop.binary_z_pair()
    if z == w:
        raise ConfigError("instrument pair must be two distinct values")
    shares = pop.unit_shares()
    switch = np.array([u.d_at(z) != u.d_at(w) for u in pop.units])
    mass = float(shares[switch].sum())
    if mass <= 0:
        raise IdentificationError("no units induced to switch between these instrument values")
    switch_units = [u for u, s in zip(pop.units, switch) if s]
    effects = _binary_effects(pop, switch_units, "local average treatment effect")
    return float(np.dot(effects, shares[switch]) / mass)


BASIC_KINDS = ("ate", "att", "itt", "complier_share", "complier_share_of_treated")


def true_basic(pop: Population, kind: str) -> float:
    """ATE / ATT / ITT / complier share / complier share among the treated,
    all by exact weighted enumeration."""
    kind = kind.lower()
    if kind not in BASIC_KINDS:
        raise ConfigError(f"unknown parameter kind {kind!r}")
    shares = pop.unit_shares()
    if kind == "ate":
        effects = _binary_effects(pop, pop.units, "average treatment effect")
        return float(np.dot(effects, shares))
    if kind == "itt":
        w, z = pop.binary_z_pair()
        per_unit = np.array(
            [
                u.y_at(z, u.d_at(z), pop.d_support) - u.y_at(w, u.d_at(w), pop.d_support)
                for u in pop.units
            ]
        )
        return float(np.dot(per_unit, shares))
    if kind == "att":
        effects = _binary_effects(pop, pop.units, "treatment effect on the treated")
        zp = pop.z_probs()
        hi = pop.d_support[1]
        treated_mass = np.array(
            [sum(p for p, z in zip(zp, pop.z_support) if u.d_at(z) == hi) for u in pop.units]
        )
        total = float(np.dot(treated_mass, shares))
        if total <= 0:
            raise ConditioningError("no treated mass in this population")
        return float(np.dot(effects * treated_mass, shares) / total)
    # complier shares: binary Z and D, declared support order
    w, z = pop.binary_z_pair()
    if pop.is_continuous or len(pop.d_support) != 2:
        raise UnsupportedError("complier shares require a binary treatment")
    lo, hi = pop.d_support
    comp = np.array([u.d_at(w) == lo and u.d_at(z) == hi for u in pop.units])
    share = float(shares[comp].sum())
    if kind == "complier_share":
        return share
    pz1 = pop.z_dist[z]
    zp = pop.z_probs()
    treated_mass = np.array(
        [sum(p for p, zz in zip(zp, pop.z_support) if u.d_at(zz) == hi) for u in pop.units]
    )
    p_treated = float(np.dot(treated_mass, shares))
    if p_treated <= 0:
        raise ConditioningError("no treated mass in this population")
    return share * pz1 / p_treated


def true_complier_mean(pop: Population, g) -> float:
    """E[g(Y, D, X) | complier], averaging the observable triple over the
    instrument assignment within the complier subpopulation."""
    w, z = pop.binary_z_pair()
    if pop.is_continuous or len(pop.d_support) != 2:
        raise UnsupportedError("complier means require a binary treatment")
    lo, hi = pop.d_support
    shares = pop.unit_shares()
    zp = pop.z_probs()
    num = 0.0
    mass = 0.0
    for u, s in zip(pop.units, shares):
        if not (u.d_at(w) == lo and u.d_at(z) == hi):
            continue
        mass += s
        for pz, zz in zip(zp, pop.z_support):
            d = u.d_at(zz)
            y = u.y_at(zz, d, pop.d_support)
            num += s * pz * float(g(y, d, dict(u.x)))
    if mass <= 0:
        raise IdentificationError("no compliers in this population")
    return num / mass


def true_complier_outcome(pop: Population, arm: int) -> StepCDF:
    """Exact step CDF of the potential outcome Y(arm) among compliers."""
    if arm not in (0, 1):
        raise ConfigError("arm must be 0 or 1")
    w, z = pop.binary_z_pair()
    if pop.is_continuous or len(pop.d_support) != 2:
        raise UnsupportedError("complier outcome distributions require a binary treatment")
    lo, hi = pop.d_support
    shares = pop.unit_shares()
    vals, wts = [], []
    for u, s in zip(pop.units, shares):
        if u.d_at(w) == lo and u.d_at(z) == hi:
            vals.append(_invariant_y(u, "complier outcome distribution")[arm])
            wts.append(s)
    if not vals:
        raise IdentificationError("no compliers in this population")
    return cdf_from_weighted_values(vals, wts)


def true_qte(pop: Population, tau: float) -> float:
    """Difference of the complier potential-outcome quantiles at level tau."""
    if not 0.0 < tau < 1.0:
        raise ConfigError("tau must be in (0, 1)")
    cdf1 = true_complier_outcome(pop, 1)
    cdf0 = true_complier_outcome(pop, 0)
    return cdf1.quantile(tau) - cdf0.quantile(tau)


# ---------------------------------------------------------------------------
# Multi-valued treatment: average causal response
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AcrResult:
    """Per-level decomposition of the average causal response."""

    value: float
    weights: np.ndarray
    levels: tuple[float, ...]
    pair_effects: np.ndarray
    overlap_units: int  # units crossing more than one level (overlap diagnostic)


def true_acr(pop: Population, z=None, w=None) -> AcrResult:
    """Convex combination, over one-level steps, of average per-step effects
    among units whose treatment crosses the step when the instrument moves
    from ``w`` to ``z``."""
    if z is None or w is None:
        w, z = pop.binary_z_pair()
    if pop.is_continuous:
        raise UnsupportedError("use the marginal-response operation for continuous treatment")
    levels = _require_unit_spacing(pop, "average causal response")
    if _mean_potential_treatment(pop, z) < _mean_potential_treatment(pop, w):
        raise ConfigError(
            "instrument pair must be ordered by ascending mean treatment (swap the pair)"
        )
    shares = pop.unit_shares()
    d_z = np.array([u.d_at(z) for u in pop.units], dtype=float)
    d_w = np.array([u.d_at(w) for u in pop.units], dtype=float)
    y_mat = np.array(
        [_invariant_y(u, "average causal response") for u in pop.units], dtype=float
    )
    raw = np.zeros(levels.size - 1)
    effects = np.zeros(levels.size - 1)
    crossings = np.zeros(len(pop.units), dtype=int)
    for j in range(1, levels.size):
        crossed = (d_z >= levels[j]) & (d_w < levels[j])
        crossings += crossed
        mass = float(shares[crossed].sum())
        raw[j - 1] = mass
        if mass > 0:
            step = y_mat[crossed, j] - y_mat[crossed, j - 1]
            effects[j - 1] = float(np.dot(step, shares[crossed]) / mass)
    total = raw.sum()
    if total <= 0:
        raise IdentificationError("no units cross any treatment level for this pair")
    weights = raw / total
    value = float(np.dot(weights, effects))
    return AcrResult(
        value=value,
        weights=weights,
        levels=tuple(float(v) for v in levels[1:]),
        pair_effects=effects,
        overlap_units=int(np.sum(crossings > 1)),
    )


# ---------------------------------------------------------------------------
# Continuous treatment: average marginal causal response
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AmcrResult:
    value: float
    grid: np.ndarray
    weight_density: np.ndarray  # integrates to 1 over the grid


def _grid_derivatives(pop: Population) -> np.ndarray:
    grid = np.asarray(pop.d_support.grid)
    y_mat = np.array(
        [_invariant_y(u, "marginal causal response") for u in pop.units], dtype=float
    )
    return np.gradient(y_mat, grid, axis=1, edge_order=2)


def _masked_trapezoid(values: np.ndarray, mask: np.ndarray, grid: np.ndarray) -> float:
    """Trapezoid rule over each maximal run of grid points with positive mass;
    avoids smearing the integrand into cells where the switching set is empty."""
    total = 0.0
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return 0.0
    breaks = np.flatnonzero(np.diff(idx) > 1)
    start = 0
    for b in list(breaks) + [idx.size - 1]:
        run = idx[start : b + 1]
        if run.size >= 2:
            total += float(np.trapezoid(values[run], grid[run]))
        start = b + 1
    return total


def true_amcr(pop: Population, z=None, w=None) -> AmcrResult:
    """Weighted integral of the mean outcome derivative over the treatment
    range swept out when the instrument moves from ``w`` to ``z``."""
    if not pop.is_continuous:
        raise UnsupportedError("marginal causal response requires continuous treatment")
    if z is None or w is None:
        w, z = pop.binary_z_pair()
    if _mean_potential_treatment(pop, z) < _mean_potential_treatment(pop, w):
        raise ConfigError(
            "instrument pair must be ordered by ascending mean treatment (swap the pair)"
        )
    grid = np.asarray(pop.d_support.grid)
    shares = pop.unit_shares()
    d_z = np.array([u.d_at(z) for u in pop.units], dtype=float)
    d_w = np.array([u.d_at(w) for u in pop.units], dtype=float)
    derivs = _grid_derivatives(pop)
    inside = (grid[None, :] <= d_z[:, None]) & (grid[None, :] >= d_w[:, None])
    mass = shares @ inside
    if not np.any(mass > 0):
        raise IdentificationError("no switching mass anywhere on the treatment grid")
    cond_deriv = np.zeros_like(mass)
    pos = mass > 0
    cond_deriv[pos] = (shares[:, None] * derivs * inside).sum(axis=0)[pos] / mass[pos]
    denom = _masked_trapezoid(mass, pos, grid)
    if denom <= 0:
        raise IdentificationError("switching mass has zero measure on the grid")
    numer = _masked_trapezoid(cond_deriv * mass, pos, grid)
    return AmcrResult(value=numer / denom, grid=grid, weight_density=mass / denom)


# ---------------------------------------------------------------------------
# Instrument combinations (multi-valued Z)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IvCombination:
    value: float
    weights: np.ndarray
    pairs: tuple[tuple, ...]
    pair_values: np.ndarray


def _ranked_groups(pop: Population) -> list[list]:
    """Support ranked by mean potential treatment, tied values grouped.

    Under monotonicity, tied values move no unit (adjacent effects between
    them would be 0/0), so each tie group collapses into one label; units
    are checked for exact agreement on tied values so the collapse is
    well-defined.
    """
    shares = pop.unit_shares()
    means = {
        z: float(np.dot(shares, [u.d_at(z) for u in pop.units])) for z in pop.z_support
    }
    ordered = sorted(pop.z_support, key=lambda z: means[z])
    groups: list[list] = []
    for z in ordered:
        if groups and means[groups[-1][0]] == means[z]:
            groups[-1].append(z)
        else:
            groups.append([z])
    for grp in groups:
        rep = grp[0]
        for other in grp[1:]:
            for u in pop.units:
                if u.d_at(other) != u.d_at(rep):
                    raise MonotonicityViolationError(
                        "tied instrument values move some units in opposite directions",
                        pairs=[(rep, other)],
                    )
    return groups


def _check_monotone(pop: Population, ranked: list) -> None:
    bad = []
    for a, b in zip(ranked, ranked[1:]):
        if any(u.d_at(b) < u.d_at(a) for u in pop.units):
            bad.append((a, b))
    if bad:
        raise MonotonicityViolationError(
            f"units move against the instrument ranking for pairs {bad}", pairs=bad
        )


def true_iv_combination(pop: Population, g=None) -> IvCombination:
    """Theorem right-hand side for a multi-valued instrument: the convex
    combination of adjacent-pair effects (switch effects for binary
    treatment, per-level responses for ordered treatment, marginal
    responses for continuous treatment) with the telescoped weights."""
    groups = _ranked_groups(pop)
    ranked = [grp[0] for grp in groups]
    if len(ranked) < 2:
        raise WeakInstrumentError("instrument does not move mean treatment at all")
    _check_monotone(pop, ranked)
    shares = pop.unit_shares()
    means = [float(np.dot(shares, [u.d_at(z) for u in pop.units])) for z in ranked]
    gf = (lambda z: _mean_potential_treatment(pop, z)) if g is None else g
    # per group: total probability and probability-weighted mean of g, so a
    # g that varies inside a tie group is still accounted exactly
    pi = np.array([sum(pop.z_dist[z] for z in grp) for grp in groups])
    g_values = np.array(
        [
            sum(pop.z_dist[z] * float(gf(z)) for z in grp) / p if p > 0 else float(gf(grp[0]))
            for grp, p in zip(groups, pi)
        ]
    )
    g_mean = float(np.dot(pi, g_values))
    centered = pi * (g_values - g_mean)
    c = centered[::-1].cumsum()[::-1][1:]  # tail sums from each pair upward
    delta_d = np.diff(np.array(means))
    raw = delta_d * c
    denom = raw.sum()
    if abs(denom) <= FIRST_STAGE_EPS:
        raise WeakInstrumentError("instrument function has zero covariance with treatment")
    weights = raw / denom
    pairs = tuple((ranked[k], ranked[k + 1]) for k in range(len(ranked) - 1))
    pair_values = np.zeros(len(pairs))
    for k, (a, b) in enumerate(pairs):
        if pop.is_continuous:
            pair_values[k] = true_amcr(pop, z=b, w=a).value
        elif len(pop.d_support) == 2:
            pair_values[k] = true_late(pop, z=b, w=a)
        else:
            pair_values[k] = true_acr(pop, z=b, w=a).value
    return IvCombination(
        value=float(np.dot(weights, pair_values)),
        weights=weights,
        pairs=pairs,
        pair_values=pair_values,
    )


@dataclass(frozen=True)
class CovariateAcrResult:
    value: float
    theta: dict
    cell_values: dict
    dropped_cells: tuple


def _cell_populations(pop: Population) -> dict:
    names = tuple(sorted(pop.covariate_schema))
    cells: dict[tuple, list] = {}
    for u in pop.units:
        key = tuple(str(u.x.get(n, "")) for n in names)
        cells.setdefault(key, []).append(u)
    return {
        key: Population(
            units=tuple(units),
            z_support=pop.z_support,
            d_support=pop.d_support,
            z_dist=dict(pop.z_dist),
            exclusion_holds=pop.exclusion_holds,
            covariate_schema=pop.covariate_schema,
        )
        for key, units in cells.items()
    }


def true_acr_with_covariates(pop: Population) -> CovariateAcrResult:
    """Ratio of instrument-strength-weighted cell responses: cells where the
    instrument does not move treatment get zero weight and drop out."""
    if not pop.covariate_schema:
        raise ConfigError("population declares no covariates")
    cells = _cell_populations(pop)
    total_mass = pop.total_weight
    theta: dict = {}
    values: dict = {}
    dropped = []
    num = 0.0
    den = 0.0
    for key, sub in cells.items():
        mass = sub.total_weight / total_mass
        sub_shares = sub.unit_shares()
        h = np.array(
            [float(np.dot(sub_shares, [u.d_at(z) for u in sub.units])) for z in sub.z_support]
        )
        pi = sub.z_probs()
        h_mean = float(np.dot(pi, h))
        th = float(np.dot(pi, (h - h_mean) ** 2))
        theta[key] = th
        if th <= FIRST_STAGE_EPS:
            dropped.append(key)
            continue
        values[key] = true_iv_combination(sub).value
        num += mass * th * values[key]
        den += mass * th
    if den <= 0:
        raise IdentificationError("instrument moves treatment in no covariate cell")
    return CovariateAcrResult(
        value=num / den,
        theta=theta,
        cell_values=values,
        dropped_cells=tuple(dropped),
    )


# ---------------------------------------------------------------------------
# Observable estimands (left-hand sides)
# ---------------------------------------------------------------------------

ESTIMAND_FORMS = ("wald", "iv_g", "tsls_sat", "tsls_sat_x", "ols")


def population_estimand(pop: Population, form: str, g=None) -> float:
    """Exact population value of a named observable estimand, computed from
    the joint law of (Y, D, Z, X) via enumerated cells — no counterfactual
    access, so equality with the oracle quantities is a real check."""
    form = form.lower()
    if form not in ESTIMAND_FORMS:
        raise ConfigError(f"unknown estimand form {form!r}")
    sample = enumerate_cells(pop)
    y, d, z, wt = sample.y, sample.d, sample.z, sample.weight
    if form == "wald":
        z_lo, z_hi = pop.binary_z_pair()
        num = wmean(y[z == z_hi], wt[z == z_hi], "E[Y | assigned arm]") - wmean(
            y[z == z_lo], wt[z == z_lo], "E[Y | control arm]"
        )
        den = wmean(d[z == z_hi], wt[z == z_hi], "E[D | assigned arm]") - wmean(
            d[z == z_lo], wt[z == z_lo], "E[D | control arm]"
        )
        if abs(den) <= FIRST_STAGE_EPS:
            raise WeakInstrumentError("zero first stage")
        return num / den
    if form == "ols":
        var = wvar(d, wt, "V(D)")
        if var <= FIRST_STAGE_EPS:
            raise WeakInstrumentError("treatment does not vary")
        return wcov(y, d, wt) / var
    if form == "iv_g":
        if g is None:
            raise ConfigError("iv_g requires an instrument function g")
        gz = np.array([float(g(v)) for v in z])
        den = wcov(d, gz, wt)
        if abs(den) <= FIRST_STAGE_EPS:
            raise WeakInstrumentError("instrument function has zero covariance with treatment")
        return wcov(y, gz, wt) / den
    if form == "tsls_sat":
        dhat = _fitted(z, d, wt)
        den = wvar(dhat, wt)
        if den <= FIRST_STAGE_EPS:
            raise WeakInstrumentError("saturated first stage is constant")
        return wcov(y, dhat, wt) / den
    # tsls_sat_x: within-cell moments of the (Z, X)-saturated first stage
    combos, cells = sample.x_cells()
    zx = cells * (np.max(z) + 1.0 - np.min(z)) + z  # unique code per (cell, z)
    dhat = _fitted(zx, d, wt)
    num = 0.0
    den = 0.0
    for c in range(len(combos)):
        m = cells == c
        mass = float(wt[m].sum())
        num += mass * wcov(y[m], dhat[m], wt[m])
        den += mass * wvar(dhat[m], wt[m])
    if den <= FIRST_STAGE_EPS:
        raise WeakInstrumentError("instrument moves treatment in no covariate cell")
    return num / den


def _fitted(key: np.ndarray, d: np.ndarray, wt: np.ndarray) -> np.ndarray:
    """Weighted cell means of d by the discrete key (a saturated fit)."""
    out = np.empty_like(d)
    for v in np.unique(key):
        m = key == v
        out[m] = wmean(d[m], wt[m], "cell mean")
    return out


# ---------------------------------------------------------------------------
# Uniform parameter reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CausalParameter:
    """One oracle quantity in report form: kind, value, attached weights (when
    the underlying theorem defines them), and the preconditions verified."""

    kind: str
    value: float | dict
    weights: list | dict | None
    preconditions_checked: tuple[str, ...]

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "value": self.value,
            "weights": self.weights,
            "preconditions_checked": list(self.preconditions_checked),
        }


def compute_parameter(pop: Population, kind: str, **params) -> CausalParameter:
    """Single dispatch point for oracle quantities, returning the uniform
    report shape used by the CLI and logs."""
    kind = kind.lower()
    if kind in BASIC_KINDS:
        value = true_basic(pop, kind)
        return CausalParameter(kind, value, None, ("enumerable_population",))
    if kind == "late":
        z, w = params.get("z"), params.get("w")
        value = true_late(pop, z=z, w=w)
        return CausalParameter(
            kind, value, None, ("binary_treatment", "positive_switching_mass")
        )
    if kind == "acr":
        res = true_acr(pop, z=params.get("z"), w=params.get("w"))
        return CausalParameter(
            kind,
            res.value,
            list(res.weights),
            ("unit_spaced_levels", "pair_ranked_by_mean_treatment", "positive_switching_mass"),
        )
    if kind == "iv_combination":
        res = true_iv_combination(pop, g=params.get("g"))
        return CausalParameter(
            kind,
            res.value,
            list(res.weights),
            ("ranked_instrument", "monotone_responses", "nonzero_instrument_covariance"),
        )
    if kind == "acr_with_covariates":
        res = true_acr_with_covariates(pop)
        return CausalParameter(
            kind,
            res.value,
            {"|".join(map(str, k)): v for k, v in res.theta.items()},
            ("finite_covariate_support", "per_cell_ranking"),
        )
    if kind == "amcr":
        res = true_amcr(pop, z=params.get("z"), w=params.get("w"))
        return CausalParameter(
            kind,
            res.value,
            list(res.weight_density),
            ("continuous_treatment_grid", "positive_switching_mass"),
        )
    if kind == "qte":
        value = true_qte(pop, params["tau"])
        return CausalParameter(
            kind, value, None, ("binary_instrument_and_treatment", "positive_complier_mass")
        )
    if kind == "complier_cdf":
        curve = true_complier_outcome(pop, params["arm"])
        return CausalParameter(
            kind,
            curve.as_dict(),
            None,
            ("binary_instrument_and_treatment", "positive_complier_mass"),
        )
    raise ConfigError(f"unknown parameter kind {kind!r}")
