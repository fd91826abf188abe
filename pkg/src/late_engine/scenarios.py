"""Declarative scenario configurations and the population builder.

Type shares become exact unit weights, never sampled counts, so oracle
quantities computed from a generated population are exact and theorem
equalities can be asserted at float precision.  The seed drives only the
outcome heterogeneity (baselines, per-level effect increments, direct
effects), through a single ``numpy.random.default_rng`` stream consumed in
a fixed order.

Violation knobs:

- ``type_shares["defier"] > 0`` breaks monotonicity (D(1) >= D(0));
- ``direct_effect != 0`` gives noncompliers an instrument effect on the
  outcome, breaking exclusion (the population is flagged accordingly).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .population import ContinuousTreatment, Population, PotentialUnit

TYPE_NEVER = "never_taker"
TYPE_COMPLIER = "complier"
TYPE_DEFIER = "defier"
TYPE_ALWAYS = "always_taker"
TYPE_ORDER = (TYPE_NEVER, TYPE_COMPLIER, TYPE_DEFIER, TYPE_ALWAYS)

TAG_LINEAR_EFFECTS = "linear_effects"
TAG_NO_SELECTION = "no_selection"

_SHARE_TOL = 1e-9


@dataclass(frozen=True)
class CovariateSpec:
    """One discrete covariate and how it relates to compliance behaviour.

    Exactly one parameterization is used:

    - ``dist_by_profile``: P(X = x | profile) on top of the global shares;
    - ``cell_weights`` + ``profile_shares_by_cell``: P(X = x) with
      profile shares differing per cell (the saturated-covariate setting).
    """

    levels: tuple[str, ...]
    name: str = "x"
    dist_by_profile: dict | None = None
    cell_weights: dict | None = None
    profile_shares_by_cell: dict | None = None
    effect_shift_by_cell: dict | None = None


@dataclass(frozen=True)
class ContinuousSpec:
    """Continuous-treatment scenario: all units share the per-arm treatment
    values; heterogeneity lives in per-unit polynomial outcome curves."""

    arm_values: tuple[float, ...]
    grid_points: int = 513
    coef_ranges: tuple[tuple[float, float], ...] = ((0.0, 1.0), (0.5, 1.5), (-0.5, 0.5))


@dataclass(frozen=True)
class LinearSelectionSpec:
    """Selection-on-treatment scenario with linear causal effects and, by
    construction, zero covariance between potential outcomes and treatment:
    levels get symmetric masses and the systematic effect component is an
    even function of the distance to the mean level."""

    n_profiles: int = 8
    effect_base: float = 1.0
    curvature: float = 1.0
    noise_half_width: float = 0.5


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    z_support: tuple = (0, 1)
    z_probs: tuple | None = None
    d_support: tuple = (0, 1)
    n_units: int = 40
    type_shares: dict | None = None
    profile_shares: dict | None = None
    baseline_range: tuple[float, float] = (0.0, 1.0)
    effect_range: tuple[float, float] = (0.5, 1.5)
    effect_range_by_type: dict | None = None
    direct_effect: float = 0.0
    direct_effect_jitter: float = 0.0
    covariate: CovariateSpec | None = None
    continuous: ContinuousSpec | None = None
    selection: LinearSelectionSpec | None = None


# ---------------------------------------------------------------------------
# Profile bookkeeping
# ---------------------------------------------------------------------------


def _binary_profile(type_name: str, z_support) -> tuple:
    lo_hi = {
        TYPE_NEVER: (0, 0),
        TYPE_COMPLIER: (0, 1),
        TYPE_DEFIER: (1, 0),
        TYPE_ALWAYS: (1, 1),
    }
    if type_name not in lo_hi:
        raise ConfigError(f"unknown compliance type {type_name!r}")
    if len(z_support) != 2:
        raise ConfigError("type shares require a binary instrument")
    return lo_hi[type_name]


def _as_profile(key, config: ScenarioConfig) -> tuple:
    if isinstance(key, str):
        return _binary_profile(key, config.z_support)
    profile = tuple(key)
    if len(profile) != len(config.z_support):
        raise ConfigError(f"profile {profile} does not match the instrument support")
    for d in profile:
        if d not in config.d_support:
            raise ConfigError(f"profile {profile} uses treatment value outside support")
    return profile


def _check_shares(shares: dict, what: str) -> None:
    vals = list(shares.values())
    if any(s < 0 or s > 1 for s in vals):
        raise ConfigError(f"{what} must lie in [0, 1]")
    if abs(sum(vals) - 1.0) > _SHARE_TOL:
        raise ConfigError(f"{what} must sum to 1 (got {sum(vals)!r})")


def _profile_shares(config: ScenarioConfig) -> dict:
    if (config.type_shares is None) == (config.profile_shares is None):
        raise ConfigError("exactly one of type_shares / profile_shares is required")
    if config.type_shares is not None:
        if len(config.d_support) != 2:
            raise ConfigError("type shares require a binary treatment")
        _check_shares(config.type_shares, "type shares")
        return {
            _binary_profile(t, config.z_support): s
            for t, s in config.type_shares.items()
            if s > 0
        }
    _check_shares(config.profile_shares, "profile shares")
    return {
        _as_profile(p, config): s for p, s in config.profile_shares.items() if s > 0
    }


def _effect_range_for(config: ScenarioConfig, key) -> tuple[float, float]:
    table = config.effect_range_by_type or {}
    if key in table:
        return table[key]
    return config.effect_range


_TYPE_BY_PROFILE = {
    (0, 0): TYPE_NEVER,
    (0, 1): TYPE_COMPLIER,
    (1, 0): TYPE_DEFIER,
    (1, 1): TYPE_ALWAYS,
}


def _effect_key(profile: tuple, config: ScenarioConfig):
    if len(config.d_support) == 2 and len(profile) == 2 and profile in _TYPE_BY_PROFILE:
        return _TYPE_BY_PROFILE[profile]
    return profile


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def make_scenario(config: ScenarioConfig) -> Population:
    """Build the population described by ``config``; deterministic given seed."""
    if config.continuous is not None and config.selection is not None:
        raise ConfigError("continuous and selection scenarios are mutually exclusive")
    if config.continuous is not None:
        return _make_continuous(config)
    if config.selection is not None:
        return _make_linear_selection(config)
    return _make_discrete(config)


def _z_dist(config: ScenarioConfig) -> dict:
    z = config.z_support
    if config.z_probs is None:
        return {v: 1.0 / len(z) for v in z}
    if len(config.z_probs) != len(z):
        raise ConfigError("z_probs must match z_support")
    dist = dict(zip(z, config.z_probs))
    _check_shares(dist, "instrument probabilities")
    return dist


def _groups(config: ScenarioConfig) -> list[dict]:
    """Joint (profile, covariate cell) mass layout with exact shares."""
    cov = config.covariate
    if cov is not None and cov.profile_shares_by_cell is not None:
        # profiles specified per covariate cell; global shares are not used
        if cov.cell_weights is None:
            raise ConfigError("profile_shares_by_cell requires cell_weights")
        _check_shares(cov.cell_weights, "covariate cell weights")
        shift = cov.effect_shift_by_cell or {}
        groups = []
        for level in cov.levels:
            w_cell = cov.cell_weights.get(level, 0.0)
            if w_cell <= 0:
                continue
            cell_profiles = {
                _as_profile(p, config): s
                for p, s in cov.profile_shares_by_cell[level].items()
                if s > 0
            }
            _check_shares(cell_profiles, f"profile shares in cell {level}")
            for p, s in cell_profiles.items():
                groups.append(
                    {
                        "profile": p,
                        "x": {cov.name: level},
                        "share": w_cell * s,
                        "shift": shift.get(level, 0.0),
                    }
                )
        return groups
    profiles = _profile_shares(config)
    if cov is None:
        return [
            {"profile": p, "x": {}, "share": s, "shift": 0.0}
            for p, s in profiles.items()
        ]
    shift = cov.effect_shift_by_cell or {}
    dist = cov.dist_by_profile or {}
    uniform = {lvl: 1.0 / len(cov.levels) for lvl in cov.levels}
    groups = []
    for p, s in profiles.items():
        key = _TYPE_BY_PROFILE.get(p, p) if len(p) == 2 else p
        cell_dist = dist.get(key, dist.get(p, uniform))
        _check_shares(cell_dist, f"covariate distribution for {key}")
        for level, q in cell_dist.items():
            if q <= 0:
                continue
            groups.append(
                {
                    "profile": p,
                    "x": {cov.name: level},
                    "share": s * q,
                    "shift": shift.get(level, 0.0),
                }
            )
    return groups


def _make_discrete(config: ScenarioConfig) -> Population:
    if config.n_units < 1:
        raise ConfigError("n_units must be at least 1")
    levels = tuple(config.d_support)
    n_levels = len(levels)
    breaks_exclusion = config.direct_effect != 0.0 or config.direct_effect_jitter != 0.0
    if breaks_exclusion and (n_levels != 2 or len(config.z_support) != 2):
        raise ConfigError("direct effects are only modeled for binary Z and D")
    rng = np.random.default_rng(config.seed)
    groups = _groups(config)
    total_share = sum(g["share"] for g in groups)
    units = []
    uid = 0
    for g in groups:
        m = max(1, round(config.n_units * g["share"] / total_share))
        w = g["share"] / m
        lo, hi = config.baseline_range
        e_lo, e_hi = _effect_range_for(config, _effect_key(g["profile"], config))
        e_lo, e_hi = e_lo + g["shift"], e_hi + g["shift"]
        for _ in range(m):
            baseline = float(rng.uniform(lo, hi))
            increments = rng.uniform(e_lo, e_hi, size=n_levels - 1)
            y = np.concatenate([[baseline], baseline + np.cumsum(increments)])
            y_by_z = {z: tuple(float(v) for v in y) for z in config.z_support}
            profile = g["profile"]
            if breaks_exclusion and profile[0] == profile[1]:
                jitter = config.direct_effect_jitter
                h = config.direct_effect + (
                    float(rng.uniform(-jitter, jitter)) if jitter else 0.0
                )
                z_hi = config.z_support[1]
                y_by_z[z_hi] = tuple(float(v + h) for v in y)
            uid += 1
            units.append(
                PotentialUnit(
                    id=f"s{uid}",
                    weight=w,
                    d_of_z=dict(zip(config.z_support, profile)),
                    y_of_zd=y_by_z,
                    x=dict(g["x"]),
                )
            )
    schema = (
        {config.covariate.name: tuple(config.covariate.levels)} if config.covariate else {}
    )
    return Population(
        units=tuple(units),
        z_support=tuple(config.z_support),
        d_support=levels,
        z_dist=_z_dist(config),
        exclusion_holds=not breaks_exclusion,
        covariate_schema=schema,
    )


def _make_continuous(config: ScenarioConfig) -> Population:
    spec = config.continuous
    arms = tuple(float(v) for v in spec.arm_values)
    if len(arms) != len(config.z_support):
        raise ConfigError("arm_values must give one treatment value per instrument value")
    if any(b <= a for a, b in zip(arms, arms[1:])):
        raise ConfigError("arm_values must be strictly ascending")
    treatment = ContinuousTreatment.over(arms[0], arms[-1], spec.grid_points)
    grid = np.asarray(treatment.grid)
    # snap interior arm values onto the grid so supports align exactly
    arms = tuple(float(grid[int(np.argmin(np.abs(grid - v)))]) for v in arms)
    rng = np.random.default_rng(config.seed)
    units = []
    for i in range(config.n_units):
        coefs = [float(rng.uniform(lo, hi)) for lo, hi in spec.coef_ranges]
        y = np.polynomial.polynomial.polyval(grid, coefs)
        y_by_z = {z: tuple(float(v) for v in y) for z in config.z_support}
        units.append(
            PotentialUnit(
                id=f"c{i + 1}",
                weight=1.0 / config.n_units,
                d_of_z=dict(zip(config.z_support, arms)),
                y_of_zd=y_by_z,
            )
        )
    return Population(
        units=tuple(units),
        z_support=tuple(config.z_support),
        d_support=treatment,
        z_dist=_z_dist(config),
        exclusion_holds=True,
    )


def _make_linear_selection(config: ScenarioConfig) -> Population:
    """Cross profiles with treatment levels so potential outcomes are exactly
    uncorrelated with the realized treatment while the effect still varies
    with the (squared, centered) treatment level."""
    spec = config.selection
    levels = tuple(config.d_support)
    if len(levels) < 2 or list(levels) != sorted(levels):
        raise ConfigError("selection scenarios need at least two ordered levels")
    mid = (levels[0] + levels[-1]) / 2.0
    if any(levels[i] + levels[len(levels) - 1 - i] != levels[0] + levels[-1] for i in range(len(levels))):
        raise ConfigError("selection scenarios need a symmetric level set")
    rng = np.random.default_rng(config.seed)
    lo, hi = config.baseline_range
    units = []
    w = 1.0 / (spec.n_profiles * len(levels))
    uid = 0
    for _ in range(spec.n_profiles):
        a = float(rng.uniform(lo, hi))
        eps = float(rng.uniform(-spec.noise_half_width, spec.noise_half_width))
        for level in levels:
            delta = spec.effect_base + spec.curvature * (level - mid) ** 2 + eps
            y = tuple(float(a + delta * j) for j in levels)
            uid += 1
            units.append(
                PotentialUnit(
                    id=f"w{uid}",
                    weight=w,
                    d_of_z={0: level},
                    y_of_zd={0: y},
                )
            )
    return Population(
        units=tuple(units),
        z_support=(0,),
        d_support=levels,
        z_dist={0: 1.0},
        exclusion_holds=True,
        tags=(TAG_LINEAR_EFFECTS, TAG_NO_SELECTION),
    )


# ---------------------------------------------------------------------------
# Config families used by the verification batteries and the CLI
# ---------------------------------------------------------------------------


def binary_iv_config(
    seed: int,
    complier: float = 0.5,
    never: float = 0.25,
    always: float = 0.25,
    defier: float = 0.0,
    n_units: int = 40,
    direct_effect: float = 0.0,
    direct_effect_jitter: float = 0.0,
    effect_range_by_type: dict | None = None,
) -> ScenarioConfig:
    return ScenarioConfig(
        seed=seed,
        n_units=n_units,
        type_shares={
            TYPE_NEVER: never,
            TYPE_COMPLIER: complier,
            TYPE_DEFIER: defier,
            TYPE_ALWAYS: always,
        },
        direct_effect=direct_effect,
        direct_effect_jitter=direct_effect_jitter,
        effect_range_by_type=effect_range_by_type,
    )


def _positive_shares(rng: np.random.Generator, k: int, floor: float = 0.03) -> np.ndarray:
    raw = rng.dirichlet(np.ones(k))
    raw = np.maximum(raw, floor)
    return raw / raw.sum()


def multi_z_binary_d_config(seed: int, n_z: int, n_units: int = 36) -> ScenarioConfig:
    """Multi-valued instrument, binary treatment: threshold profiles with
    positive share at every threshold, so the mean treatment is strictly
    increasing along the instrument."""
    if n_z < 2:
        raise ConfigError("need at least two instrument values")
    rng = np.random.default_rng((seed, 101))
    z_support = tuple(range(n_z))
    shares = _positive_shares(rng, n_z + 1)
    profiles = {}
    for t in range(n_z + 1):  # t = threshold; t == n_z means never treated
        profile = tuple(1 if k >= t else 0 for k in range(n_z))
        profiles[profile] = float(shares[t])
    z_probs = _positive_shares(rng, n_z)
    return ScenarioConfig(
        seed=seed,
        z_support=z_support,
        z_probs=tuple(float(p) for p in z_probs),
        d_support=(0, 1),
        n_units=n_units,
        profile_shares=profiles,
    )


def _monotone_profiles(rng: np.random.Generator, n_z: int, n_levels: int, extra: int) -> dict:
    ladder = tuple(min(k, n_levels - 1) for k in range(n_z))
    profiles = {ladder}
    for _ in range(extra):
        profiles.add(tuple(sorted(int(v) for v in rng.integers(0, n_levels, size=n_z))))
    shares = _positive_shares(rng, len(profiles))
    out = dict(zip(sorted(profiles), (float(s) for s in shares)))
    # keep the strictly-increasing ladder heavy enough for strict ranking
    out[ladder] = out[ladder] + 0.25
    total = sum(out.values())
    return {p: s / total for p, s in out.items()}


def multi_d_config(
    seed: int, n_levels: int = 3, n_z: int = 2, n_units: int = 36
) -> ScenarioConfig:
    """Ordered multi-valued treatment with monotone response profiles."""
    if n_levels < 2 or n_z < 2 or n_z > n_levels:
        raise ConfigError("need 2 <= n_z <= n_levels")
    rng = np.random.default_rng((seed, 202))
    profiles = _monotone_profiles(rng, n_z, n_levels, extra=4)
    return ScenarioConfig(
        seed=seed,
        z_support=tuple(range(n_z)),
        z_probs=tuple(float(p) for p in _positive_shares(rng, n_z)),
        d_support=tuple(range(n_levels)),
        n_units=n_units,
        profile_shares=profiles,
    )


def covariate_cells_config(
    seed: int, n_cells: int = 2, n_levels: int = 3, n_z: int = 2, n_units: int = 48
) -> ScenarioConfig:
    """Saturated-covariate setting: response profiles and effect levels both
    differ across covariate cells."""
    rng = np.random.default_rng((seed, 303))
    levels = tuple(chr(ord("a") + i) for i in range(n_cells))
    cell_weights = dict(zip(levels, (float(v) for v in _positive_shares(rng, n_cells, 0.15))))
    by_cell = {
        lvl: _monotone_profiles(rng, n_z, n_levels, extra=3) for lvl in levels
    }
    shifts = {lvl: float(rng.uniform(-0.4, 0.4)) for lvl in levels}
    return ScenarioConfig(
        seed=seed,
        z_support=tuple(range(n_z)),
        z_probs=tuple(float(p) for p in _positive_shares(rng, n_z)),
        d_support=tuple(range(n_levels)),
        n_units=n_units,
        covariate=CovariateSpec(
            levels=levels,
            cell_weights=cell_weights,
            profile_shares_by_cell=by_cell,
            effect_shift_by_cell=shifts,
        ),
    )


def continuous_config(
    seed: int,
    n_z: int = 2,
    n_units: int = 12,
    grid_points: int = 513,
    coef_ranges: tuple = ((0.0, 1.0), (0.5, 1.5), (-0.5, 0.5)),
) -> ScenarioConfig:
    arms = tuple(k / (n_z - 1) for k in range(n_z))
    return ScenarioConfig(
        seed=seed,
        z_support=tuple(range(n_z)),
        d_support=(0, 1),  # replaced by the continuous grid
        n_units=n_units,
        continuous=ContinuousSpec(
            arm_values=arms, grid_points=grid_points, coef_ranges=coef_ranges
        ),
    )


def weighted_effect_config(seed: int, n_levels: int = 3, n_profiles: int = 8) -> ScenarioConfig:
    return ScenarioConfig(
        seed=seed,
        d_support=tuple(range(n_levels)),
        selection=LinearSelectionSpec(n_profiles=n_profiles),
    )


# ---------------------------------------------------------------------------
# JSON codec for declarative configs (profiles become {"profile","share"} rows)
# ---------------------------------------------------------------------------


def _profiles_to_json(shares: dict | None):
    if shares is None:
        return None
    return [
        {"profile": (list(p) if isinstance(p, (tuple, list)) else p), "share": s}
        for p, s in shares.items()
    ]


def _profiles_from_json(rows):
    if rows is None:
        return None
    out = {}
    for row in rows:
        p = row["profile"]
        out[tuple(p) if isinstance(p, list) else p] = float(row["share"])
    return out


def scenario_config_to_dict(config: ScenarioConfig) -> dict:
    out = {
        "seed": config.seed,
        "z_support": list(config.z_support),
        "z_probs": list(config.z_probs) if config.z_probs is not None else None,
        "d_support": list(config.d_support),
        "n_units": config.n_units,
        "type_shares": dict(config.type_shares) if config.type_shares else None,
        "profile_shares": _profiles_to_json(config.profile_shares),
        "baseline_range": list(config.baseline_range),
        "effect_range": list(config.effect_range),
        "effect_range_by_type": (
            {str(k): list(v) for k, v in config.effect_range_by_type.items()}
            if config.effect_range_by_type
            else None
        ),
        "direct_effect": config.direct_effect,
        "direct_effect_jitter": config.direct_effect_jitter,
    }
    if config.covariate is not None:
        cov = config.covariate
        out["covariate"] = {
            "name": cov.name,
            "levels": list(cov.levels),
            "dist_by_profile": (
                {str(k): dict(v) for k, v in cov.dist_by_profile.items()}
                if cov.dist_by_profile
                else None
            ),
            "cell_weights": dict(cov.cell_weights) if cov.cell_weights else None,
            "profile_shares_by_cell": (
                {lvl: _profiles_to_json(shares) for lvl, shares in cov.profile_shares_by_cell.items()}
                if cov.profile_shares_by_cell
                else None
            ),
            "effect_shift_by_cell": (
                dict(cov.effect_shift_by_cell) if cov.effect_shift_by_cell else None
            ),
        }
    if config.continuous is not None:
        out["continuous"] = {
            "arm_values": list(config.continuous.arm_values),
            "grid_points": config.continuous.grid_points,
            "coef_ranges": [list(r) for r in config.continuous.coef_ranges],
        }
    if config.selection is not None:
        out["selection"] = {
            "n_profiles": config.selection.n_profiles,
            "effect_base": config.selection.effect_base,
            "curvature": config.selection.curvature,
            "noise_half_width": config.selection.noise_half_width,
        }
    return out


def scenario_config_from_dict(data: dict) -> ScenarioConfig:
    if "seed" not in data:
        raise ConfigError("scenario config requires a seed")
    cov = None
    if data.get("covariate"):
        raw = data["covariate"]
        cov = CovariateSpec(
            name=raw.get("name", "x"),
            levels=tuple(raw["levels"]),
            dist_by_profile=raw.get("dist_by_profile"),
            cell_weights=raw.get("cell_weights"),
            profile_shares_by_cell=(
                {lvl: _profiles_from_json(rows) for lvl, rows in raw["profile_shares_by_cell"].items()}
                if raw.get("profile_shares_by_cell")
                else None
            ),
            effect_shift_by_cell=raw.get("effect_shift_by_cell"),
        )
    continuous = None
    if data.get("continuous"):
        raw = data["continuous"]
        continuous = ContinuousSpec(
            arm_values=tuple(float(v) for v in raw["arm_values"]),
            grid_points=int(raw.get("grid_points", 513)),
            coef_ranges=tuple(tuple(r) for r in raw.get("coef_ranges", ((0.0, 1.0), (0.5, 1.5)))),
        )
    selection = None
    if data.get("selection"):
        raw = data["selection"]
        selection = LinearSelectionSpec(
            n_profiles=int(raw.get("n_profiles", 8)),
            effect_base=float(raw.get("effect_base", 1.0)),
            curvature=float(raw.get("curvature", 1.0)),
            noise_half_width=float(raw.get("noise_half_width", 0.5)),
        )
    return ScenarioConfig(
        seed=int(data["seed"]),
        z_support=tuple(data.get("z_support", (0, 1))),
        z_probs=tuple(data["z_probs"]) if data.get("z_probs") else None,
        d_support=tuple(data.get("d_support", (0, 1))),
        n_units=int(data.get("n_units", 40)),
        type_shares=data.get("type_shares"),
        profile_shares=_profiles_from_json(data.get("profile_shares")),
        baseline_range=tuple(data.get("baseline_range", (0.0, 1.0))),
        effect_range=tuple(data.get("effect_range", (0.5, 1.5))),
        effect_range_by_type=(
            {k: tuple(v) for k, v in data["effect_range_by_type"].items()}
            if data.get("effect_range_by_type")
            else None
        ),
        direct_effect=float(data.get("direct_effect", 0.0)),
        direct_effect_jitter=float(data.get("direct_effect_jitter", 0.0)),
        covariate=cov,
        continuous=continuous,
        selection=selection,
    )
