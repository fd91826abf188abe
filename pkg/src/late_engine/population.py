"""Finite weighted populations with complete counterfactual tables.

A :class:`Population` is a finite list of :class:`PotentialUnit`, each
carrying the full mapping ``z -> D(z)`` and ``(z, d) -> Y(z, d)``, plus an
instrument distribution drawn independently of the unit.  Every
"expectation" downstream is a finite weighted sum over these tables, so
identification equalities can be verified exactly instead of within
Monte-Carlo noise.

Treatment support is either a finite ordered tuple of levels or a
:class:`ContinuousTreatment` interval carrying the evaluation grid used
for integration.  In both cases a unit stores, for every instrument value
``z``, the vector of outcomes over the treatment values (levels or grid
points); under the exclusion restriction these vectors coincide across
``z``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, UnsupportedError

Z_DIST_TOL = 1e-12


class ComplianceType(enum.Enum):
    NEVER_TAKER = "never_taker"
    COMPLIER = "complier"
    DEFIER = "defier"
    ALWAYS_TAKER = "always_taker"


@dataclass(frozen=True)
class ContinuousTreatment:
    """Continuous treatment interval with its evaluation grid."""

    lo: float
    hi: float
    grid: tuple[float, ...]

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        if g.size < 3 or np.any(np.diff(g) <= 0):
            raise ConfigError("grid must be strictly ascending with at least 3 points")
        if g[0] != self.lo or g[-1] != self.hi:
            raise ConfigError("grid must span exactly [lo, hi]")

    @staticmethod
    def over(lo: float, hi: float, points: int = 513) -> "ContinuousTreatment":
        if hi <= lo:
            raise ConfigError("continuous treatment interval must have hi > lo")
        grid = tuple(float(v) for v in np.linspace(lo, hi, points))
        return ContinuousTreatment(float(lo), float(hi), grid)

    def refined(self, points: int) -> "ContinuousTreatment":
        return ContinuousTreatment.over(self.lo, self.hi, points)


@dataclass(frozen=True)
class PotentialUnit:
    """One unit's complete counterfactual table.

    ``y_of_zd[z]`` is the outcome vector over the population's treatment
    values (discrete levels, or grid points for continuous treatment).
    """

    id: str
    weight: float
    d_of_z: dict
    y_of_zd: dict
    x: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.weight < 0:
            raise ConfigError(f"unit {self.id}: weight must be nonnegative")

    def d_at(self, z) -> float:
        return self.d_of_z[z]

    def y_vector(self, z) -> np.ndarray:
        return np.asarray(self.y_of_zd[z], dtype=float)

    def y_at(self, z, d, d_support) -> float:
        """Y(z, d), looked up on levels or interpolated on the grid."""
        vec = self.y_vector(z)
        if isinstance(d_support, ContinuousTreatment):
            return float(np.interp(d, d_support.grid, vec))
        try:
            j = d_support.index(d)
        except ValueError:
            raise UnsupportedError(f"treatment value {d!r} outside declared support") from None
        return float(vec[j])

    def is_z_invariant(self) -> bool:
        vecs = [self.y_vector(z) for z in self.y_of_zd]
        return all(np.array_equal(vecs[0], v) for v in vecs[1:])


def classify(unit: PotentialUnit, w, z, d_support=(0, 1)) -> ComplianceType:
    """Four-way compliance label of a unit for the ordered pair (w, z).

    ``w`` is the instrument value ranked below ``z``.  Only defined for a
    binary treatment; multi-valued units are profiled by their full
    ``d_of_z`` map instead.
    """
    if isinstance(d_support, ContinuousTreatment) or len(d_support) != 2:
        raise UnsupportedError("compliance classification requires a binary treatment")
    if w == z:
        raise ConfigError("instrument pair must be two distinct values")
    lo, hi = d_support
    dw, dz = unit.d_at(w), unit.d_at(z)
    if dw == lo and dz == lo:
        return ComplianceType.NEVER_TAKER
    if dw == hi and dz == hi:
        return ComplianceType.ALWAYS_TAKER
    if dw == lo and dz == hi:
        return ComplianceType.COMPLIER
    return ComplianceType.DEFIER


@dataclass(frozen=True)
class Population:
    """Finite weighted population plus the instrument assignment law.

    Independence of the instrument is structural: Z is drawn from
    ``z_dist`` regardless of the unit, so E[D | Z = z] = E[D(z)] exactly.
    """

    units: tuple[PotentialUnit, ...]
    z_support: tuple
    d_support: tuple | ContinuousTreatment
    z_dist: dict
    exclusion_holds: bool = True
    covariate_schema: dict = field(default_factory=dict)
    tags: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "units", tuple(self.units))
        if not self.units:
            raise ConfigError("population must contain at least one unit")
        total = sum(u.weight for u in self.units)
        if total <= 0:
            raise ConfigError("total unit weight must be positive")
        probs = [self.z_dist.get(z, None) for z in self.z_support]
        if any(p is None for p in probs):
            raise ConfigError("z_dist must cover every instrument value")
        if any(p < 0 or p > 1 for p in probs):
            raise ConfigError("z_dist probabilities must lie in [0, 1]")
        if abs(sum(probs) - 1.0) > Z_DIST_TOL:
            raise ConfigError("z_dist must sum to 1 within 1e-12")
        n_d = len(self.d_grid_values())
        for u in self.units:
            for z in self.z_support:
                if z not in u.d_of_z:
                    raise ConfigError(f"unit {u.id}: d_of_z missing instrument value {z!r}")
                if z not in u.y_of_zd:
                    raise ConfigError(f"unit {u.id}: y_of_zd missing instrument value {z!r}")
                if len(u.y_of_zd[z]) != n_d:
                    raise ConfigError(
                        f"unit {u.id}: outcome vector for z={z!r} has wrong length"
                    )
                d = u.d_of_z[z]
                if isinstance(self.d_support, ContinuousTreatment):
                    if not (self.d_support.lo <= d <= self.d_support.hi):
                        raise ConfigError(f"unit {u.id}: D({z!r}) outside treatment interval")
                elif d not in self.d_support:
                    raise ConfigError(f"unit {u.id}: D({z!r}) outside treatment support")
            for name, label in u.x.items():
                labels = self.covariate_schema.get(name)
                if labels is None or label not in labels:
                    raise ConfigError(f"unit {u.id}: covariate {name}={label!r} not in schema")
        if self.exclusion_holds:
            for u in self.units:
                if not u.is_z_invariant():
                    raise ConfigError(
                        f"unit {u.id}: outcomes depend on the instrument but the "
                        "exclusion flag is set"
                    )

    # -- basic structure -------------------------------------------------

    def d_grid_values(self) -> tuple[float, ...]:
        if isinstance(self.d_support, ContinuousTreatment):
            return self.d_support.grid
        return tuple(self.d_support)

    @property
    def is_continuous(self) -> bool:
        return isinstance(self.d_support, ContinuousTreatment)

    @property
    def total_weight(self) -> float:
        return float(sum(u.weight for u in self.units))

    def unit_shares(self) -> np.ndarray:
        w = np.array([u.weight for u in self.units], dtype=float)
        return w / w.sum()

    def z_probs(self) -> np.ndarray:
        return np.array([self.z_dist[z] for z in self.z_support], dtype=float)

    def binary_z_pair(self) -> tuple:
        if len(self.z_support) != 2:
            raise UnsupportedError("operation requires a binary instrument")
        return self.z_support[0], self.z_support[1]

    def classify_units(self, w=None, z=None) -> list[ComplianceType]:
        if w is None or z is None:
            w, z = self.binary_z_pair()
        return [classify(u, w, z, self.d_support) for u in self.units]

    def type_masses(self, w=None, z=None) -> dict[ComplianceType, float]:
        labels = self.classify_units(w, z)
        shares = self.unit_shares()
        masses = {t: 0.0 for t in ComplianceType}
        for lab, s in zip(labels, shares):
            masses[lab] += float(s)
        return masses

    def has_defiers(self) -> bool:
        """(M') check over all instrument pairs ranked by mean potential treatment."""
        order = rank_z_by_treatment(self)
        for a, b in zip(order, order[1:]):
            for u in self.units:
                if u.d_at(b) < u.d_at(a):
                    return True
        return False

    # -- tables used by realize / enumerate ------------------------------

    def treatment_table(self) -> np.ndarray:
        """D(z) per (unit, z)."""
        return np.array(
            [[float(u.d_at(z)) for z in self.z_support] for u in self.units], dtype=float
        )

    def outcome_table(self) -> np.ndarray:
        """Y(z, D(z)) per (unit, z)."""
        return np.array(
            [
                [u.y_at(z, u.d_at(z), self.d_support) for z in self.z_support]
                for u in self.units
            ],
            dtype=float,
        )


def rank_z_by_treatment(pop: Population) -> tuple:
    """Instrument values sorted by ascending mean potential treatment E[D(z)]."""
    shares = pop.unit_shares()
    means = {
        z: float(np.dot(shares, [u.d_at(z) for u in pop.units])) for z in pop.z_support
    }
    return tuple(sorted(pop.z_support, key=lambda z: means[z]))


# ---------------------------------------------------------------------------
# Observed samples
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ObservedSample:
    """Immutable table of (Y, D, Z, X) rows, optionally weighted.

    This is the estimators' only input: no counterfactual access.  Weighted
    rows let the exact "infinite sample" produced by :func:`enumerate_cells`
    flow through the same code paths as sampled data.
    """

    y: np.ndarray
    d: np.ndarray
    z: np.ndarray
    x: dict[str, np.ndarray] = field(default_factory=dict)
    weight: np.ndarray | None = None
    z_support: tuple | None = None
    d_support: tuple | ContinuousTreatment | None = None
    covariate_schema: dict = field(default_factory=dict)
    weighted: bool = field(init=False, default=False)

    def __post_init__(self):
        object.__setattr__(self, "weighted", self.weight is not None)
        y = np.asarray(self.y, dtype=float)
        d = np.asarray(self.d, dtype=float)
        z = np.asarray(self.z, dtype=float)
        n = y.shape[0]
        if d.shape[0] != n or z.shape[0] != n or n == 0:
            raise DataError("y, d, z must be nonempty columns of equal length")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(d)) and np.all(np.isfinite(z))):
            raise DataError("sample contains non-finite values")
        w = self.weight
        w = np.ones(n, dtype=float) if w is None else np.asarray(w, dtype=float)
        if w.shape[0] != n:
            raise DataError("weight column length mismatch")
        if np.any(w < 0) or not np.all(np.isfinite(w)) or w.sum() <= 0:
            raise DataError("weights must be nonnegative with positive total")
        xcols = {}
        for name, col in self.x.items():
            arr = np.asarray(col)
            if arr.shape[0] != n:
                raise DataError(f"covariate column {name} length mismatch")
            arr = arr.astype(str)
            arr.flags.writeable = False
            xcols[name] = arr
        if self.z_support is not None:
            declared = {float(v) for v in self.z_support}
            bad = set(np.unique(z)) - declared
            if bad:
                raise DataError(f"instrument values outside declared support: {sorted(bad)}")
        for name, labels in self.covariate_schema.items():
            if name not in xcols:
                raise DataError(f"covariate column {name} missing")
            bad = set(np.unique(xcols[name])) - {str(v) for v in labels}
            if bad:
                raise DataError(f"covariate {name} has labels outside schema: {sorted(bad)}")
        for arr in (y, d, z, w):
            arr.flags.writeable = False
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "x", xcols)

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    def z_values(self) -> np.ndarray:
        return np.unique(self.z)

    def d_values(self) -> np.ndarray:
        return np.unique(self.d)

    def binary_z_pair(self) -> tuple[float, float]:
        vals = self.z_values()
        if vals.size != 2:
            raise UnsupportedError(
                f"operation requires a binary instrument; observed {vals.size} values"
            )
        return float(vals[0]), float(vals[1])

    def x_cells(self, names: tuple[str, ...] | None = None) -> tuple[tuple, np.ndarray]:
        """Distinct covariate label combinations and the cell index per row."""
        if names is None:
            names = tuple(sorted(self.x))
        if not names:
            return ((),), np.zeros(self.n, dtype=int)
        cols = [self.x[name] for name in names]
        combos = sorted(set(zip(*cols)))
        index = {c: i for i, c in enumerate(combos)}
        cells = np.array([index[c] for c in zip(*cols)], dtype=int)
        return tuple(combos), cells


# ---------------------------------------------------------------------------
# Realization
# ---------------------------------------------------------------------------


def realize(pop: Population, n: int, seed: int) -> ObservedSample:
    """Draw an i.i.d. observed sample: unit ~ weights, Z ~ z_dist, D = D(Z),
    Y = Y(Z, D(Z)).  Deterministic given (pop, n, seed)."""
    if n < 1:
        raise ConfigError("sample size must be at least 1")
    rng = np.random.default_rng(seed)
    shares = pop.unit_shares()
    zp = pop.z_probs()
    unit_idx = rng.choice(len(pop.units), size=n, p=shares)
    z_idx = rng.choice(len(pop.z_support), size=n, p=zp)
    d_table = pop.treatment_table()
    y_table = pop.outcome_table()
    z_values = np.array([float(z) for z in pop.z_support])
    x = {}
    for name in pop.covariate_schema:
        labels = np.array([str(u.x.get(name, "")) for u in pop.units])
        x[name] = labels[unit_idx]
    return ObservedSample(
        y=y_table[unit_idx, z_idx],
        d=d_table[unit_idx, z_idx],
        z=z_values[z_idx],
        x=x,
        z_support=tuple(float(z) for z in pop.z_support),
        d_support=pop.d_support,
        covariate_schema=dict(pop.covariate_schema),
    )


def enumerate_cells(pop: Population) -> ObservedSample:
    """The exact finite-population "infinite sample": one weighted row per
    (unit, z) cell with mass weight * z_dist(z).

    Weighted moments of the result equal population moments exactly, which
    is what makes noise-free verification of identification equalities
    possible.  Cells with zero instrument probability are omitted, so
    conditioning on such a value errors rather than returning 0/0.
    """
    shares = pop.unit_shares()
    d_table = pop.treatment_table()
    y_table = pop.outcome_table()
    rows_y, rows_d, rows_z, rows_w = [], [], [], []
    rows_x: dict[str, list] = {name: [] for name in pop.covariate_schema}
    for i, u in enumerate(pop.units):
        for k, z in enumerate(pop.z_support):
            pz = pop.z_dist[z]
            if pz <= 0:
                continue
            rows_y.append(y_table[i, k])
            rows_d.append(d_table[i, k])
            rows_z.append(float(z))
            rows_w.append(shares[i] * pz)
            for name in rows_x:
                rows_x[name].append(str(u.x.get(name, "")))
    return ObservedSample(
        y=np.array(rows_y),
        d=np.array(rows_d),
        z=np.array(rows_z),
        x={name: np.array(col) for name, col in rows_x.items()},
        weight=np.array(rows_w),
        z_support=tuple(float(z) for z in pop.z_support),
        d_support=pop.d_support,
        covariate_schema=dict(pop.covariate_schema),
    )


# ---------------------------------------------------------------------------
# JSON round trip
# ---------------------------------------------------------------------------


def _zkey(z) -> str:
    return format(z, ".17g") if isinstance(z, float) else str(z)


def population_to_dict(pop: Population) -> dict:
    d_support = (
        {
            "kind": "continuous",
            "lo": pop.d_support.lo,
            "hi": pop.d_support.hi,
            "grid": list(pop.d_support.grid),
        }
        if pop.is_continuous
        else list(pop.d_support)
    )
    out = {
        "z_support": list(pop.z_support),
        "d_support": d_support,
        "z_dist": {_zkey(z): pop.z_dist[z] for z in pop.z_support},
        "units": [
            {
                "id": u.id,
                "weight": u.weight,
                "d_of_z": {_zkey(z): u.d_of_z[z] for z in pop.z_support},
                "y_of_zd": {_zkey(z): list(map(float, u.y_of_zd[z])) for z in pop.z_support},
                "x": dict(u.x),
            }
            for u in pop.units
        ],
        "exclusion_holds": pop.exclusion_holds,
    }
    if pop.covariate_schema:
        out["covariate_schema"] = {k: list(v) for k, v in pop.covariate_schema.items()}
    if pop.tags:
        out["tags"] = list(pop.tags)
    return out


def population_from_dict(data: dict) -> Population:
    try:
        z_support = tuple(data["z_support"])
        raw_d = data["d_support"]
        if isinstance(raw_d, dict):
            d_support: tuple | ContinuousTreatment = ContinuousTreatment(
                float(raw_d["lo"]), float(raw_d["hi"]), tuple(float(v) for v in raw_d["grid"])
            )
        else:
            d_support = tuple(raw_d)
        by_key = {_zkey(z): z for z in z_support}

        def resolve(mapping):
            out = {}
            for key, val in mapping.items():
                if key not in by_key:
                    raise DataError(f"instrument key {key!r} not in z_support")
                out[by_key[key]] = val
            return out

        z_dist = resolve(data["z_dist"])
        units = tuple(
            PotentialUnit(
                id=str(raw["id"]),
                weight=float(raw["weight"]),
                d_of_z=resolve(raw["d_of_z"]),
                y_of_zd={z: tuple(map(float, v)) for z, v in resolve(raw["y_of_zd"]).items()},
                x={str(k): str(v) for k, v in raw.get("x", {}).items()},
            )
            for raw in data["units"]
        )
        schema = {
            str(k): tuple(str(lbl) for lbl in v)
            for k, v in data.get("covariate_schema", {}).items()
        }
        return Population(
            units=units,
            z_support=z_support,
            d_support=d_support,
            z_dist=z_dist,
            exclusion_holds=bool(data["exclusion_holds"]),
            covariate_schema=schema,
            tags=tuple(data.get("tags", ())),
        )
    except KeyError as exc:
        raise DataError(f"population JSON missing field {exc}") from None


def load_population(path) -> Population:
    with open(path, "r", encoding="utf-8") as fh:
        return population_from_dict(json.load(fh))


def save_population(pop: Population, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(population_to_dict(pop), fh, indent=2)
        fh.write("\n")
