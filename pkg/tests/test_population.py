import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from late_engine import (
    ComplianceType,
    ConfigError,
    ContinuousTreatment,
    Population,
    PotentialUnit,
    UnsupportedError,
    classify,
    enumerate_cells,
    realize,
)
from late_engine.population import population_from_dict, population_to_dict
from late_engine.wstats import wmean


def unit(uid, d0, d1, y0, y1, weight=0.25, x=None):
    return PotentialUnit(
        id=uid,
        weight=weight,
        d_of_z={0: d0, 1: d1},
        y_of_zd={0: (y0, y1), 1: (y0, y1)},
        x=x or {},
    )


# ---------------------------------------------------------------------------
# classify
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "d0, d1, expected",
    [
        (0, 1, ComplianceType.COMPLIER),
        (1, 1, ComplianceType.ALWAYS_TAKER),
        (0, 0, ComplianceType.NEVER_TAKER),
        (1, 0, ComplianceType.DEFIER),
    ],
)
def test_classify_four_types(d0, d1, expected):
    assert classify(unit("u", d0, d1, 0.0, 1.0), 0, 1) is expected


def test_classify_rejects_multivalued():
    u = PotentialUnit(
        id="m", weight=1.0, d_of_z={0: 0, 1: 2}, y_of_zd={0: (0, 1, 2), 1: (0, 1, 2)}
    )
    with pytest.raises(UnsupportedError):
        classify(u, 0, 1, d_support=(0, 1, 2))


def test_classify_rejects_equal_pair():
    with pytest.raises(ConfigError):
        classify(unit("u", 0, 1, 0.0, 1.0), 1, 1)


def test_type_masses_sum_to_total(p2):
    masses = p2.type_masses()
    assert_allclose(sum(masses.values()), 1.0, atol=1e-12)
    assert_allclose(masses[ComplianceType.DEFIER], 0.2, atol=1e-12)


def test_defier_flag_tracks_monotonicity(p1, p2):
    assert not p1.has_defiers()
    assert p2.has_defiers()


# ---------------------------------------------------------------------------
# Population validation
# ---------------------------------------------------------------------------


def test_z_dist_must_sum_to_one():
    with pytest.raises(ConfigError):
        Population(
            units=(unit("u", 0, 1, 0.0, 1.0),),
            z_support=(0, 1),
            d_support=(0, 1),
            z_dist={0: 0.6, 1: 0.6},
        )


def test_negative_weight_rejected():
    with pytest.raises(ConfigError):
        unit("u", 0, 1, 0.0, 1.0, weight=-0.1)


def test_exclusion_flag_checked_against_tables():
    bad = PotentialUnit(
        id="b", weight=1.0, d_of_z={0: 0, 1: 1}, y_of_zd={0: (0.0, 1.0), 1: (0.0, 2.0)}
    )
    with pytest.raises(ConfigError, match="exclusion"):
        Population(
            units=(bad,),
            z_support=(0, 1),
            d_support=(0, 1),
            z_dist={0: 0.5, 1: 0.5},
            exclusion_holds=True,
        )


def test_covariate_labels_must_match_schema():
    u = unit("u", 0, 1, 0.0, 1.0, x={"g": "c"})
    with pytest.raises(ConfigError):
        Population(
            units=(u,),
            z_support=(0, 1),
            d_support=(0, 1),
            z_dist={0: 0.5, 1: 0.5},
            covariate_schema={"g": ("a", "b")},
        )


# ---------------------------------------------------------------------------
# enumerate_cells
# ---------------------------------------------------------------------------


def test_enumerate_p1_shape_and_mass(p1_cells):
    assert p1_cells.n == 8
    assert_allclose(p1_cells.weight, np.full(8, 0.125))


def test_enumerate_p1_arm_means(p1_cells):
    m1 = p1_cells.z == 1.0
    m0 = p1_cells.z == 0.0
    assert_allclose(wmean(p1_cells.y[m1], p1_cells.weight[m1]), 4.0, atol=1e-12)
    assert_allclose(wmean(p1_cells.y[m0], p1_cells.weight[m0]), 2.0, atol=1e-12)


def test_enumerate_drops_zero_probability_arm():
    pop = Population(
        units=(unit("u", 0, 1, 0.0, 1.0, weight=1.0),),
        z_support=(0, 1),
        d_support=(0, 1),
        z_dist={0: 1.0, 1: 0.0},
    )
    cells = enumerate_cells(pop)
    assert_array_equal(np.unique(cells.z), [0.0])
    with pytest.raises(UnsupportedError):
        cells.binary_z_pair()  # conditioning on the degenerate arm must not give 0/0


# ---------------------------------------------------------------------------
# realize
# ---------------------------------------------------------------------------


def test_realize_deterministic(p1):
    a = realize(p1, 500, seed=7)
    b = realize(p1, 500, seed=7)
    assert_array_equal(a.y, b.y)
    assert_array_equal(a.d, b.d)
    assert_array_equal(a.z, b.z)


def test_realize_degenerate_z():
    pop = Population(
        units=(unit("u", 0, 1, 0.0, 1.0, weight=1.0),),
        z_support=(0, 1),
        d_support=(0, 1),
        z_dist={0: 1.0, 1: 0.0},
    )
    sample = realize(pop, 100, seed=1)
    assert_array_equal(np.unique(sample.z), [0.0])


def test_realize_first_stage_near_oracle(p1):
    sample = realize(p1, 4000, seed=7)
    m1, m0 = sample.z == 1.0, sample.z == 0.0
    fs = sample.d[m1].mean() - sample.d[m0].mean()
    assert abs(fs - 0.5) < 5 * np.sqrt(0.25 / 1000)  # loose Monte Carlo band


def test_realize_moments_converge_to_cells(p1, p1_cells):
    n = 100_000
    sample = realize(p1, n, seed=123)
    for col in ("y", "d"):
        values = getattr(sample, col)
        target = wmean(getattr(p1_cells, col), p1_cells.weight)
        sd = float(np.std(values))
        assert abs(values.mean() - target) < 5 * sd / np.sqrt(n)


def test_realize_requires_positive_n(p1):
    with pytest.raises(ConfigError):
        realize(p1, 0, seed=1)


# ---------------------------------------------------------------------------
# JSON round trip
# ---------------------------------------------------------------------------


def test_population_json_round_trip(p2):
    data = population_to_dict(p2)
    back = population_from_dict(data)
    assert population_to_dict(back) == data


def test_continuous_population_round_trip():
    ct = ContinuousTreatment.over(0.0, 1.0, 9)
    grid = np.asarray(ct.grid)
    u = PotentialUnit(
        id="c",
        weight=1.0,
        d_of_z={0: 0.0, 1: 1.0},
        y_of_zd={0: tuple(grid * 2.0), 1: tuple(grid * 2.0)},
    )
    pop = Population(
        units=(u,), z_support=(0, 1), d_support=ct, z_dist={0: 0.5, 1: 0.5}
    )
    back = population_from_dict(population_to_dict(pop))
    assert back.is_continuous
    assert back.d_support.grid == ct.grid


# ---------------------------------------------------------------------------
# ObservedSample immutability
# ---------------------------------------------------------------------------


def test_sample_arrays_are_read_only(p1_cells):
    with pytest.raises(ValueError):
        p1_cells.y[0] = 99.0
    with pytest.raises(ValueError):
        p1_cells.weight[0] = 99.0
