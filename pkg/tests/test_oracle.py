import numpy as np
import pytest
from numpy.testing import assert_allclose

from late_engine import (
    ConditioningError,
    ConfigError,
    ContinuousTreatment,
    IdentificationError,
    MonotonicityViolationError,
    Population,
    PotentialUnit,
    UnsupportedError,
    WeakInstrumentError,
    make_scenario,
    population_estimand,
    true_acr,
    true_acr_with_covariates,
    true_amcr,
    true_basic,
    true_complier_outcome,
    true_iv_combination,
    true_late,
    true_qte,
)
from late_engine.scenarios import (
    CovariateSpec,
    ScenarioConfig,
    continuous_config,
    multi_z_binary_d_config,
)

EXACT = 1e-12


def binary_pop(units):
    return Population(
        units=tuple(units), z_support=(0, 1), d_support=(0, 1), z_dist={0: 0.5, 1: 0.5}
    )


def mk_unit(uid, d0, d1, y0, y1, weight=1.0):
    return PotentialUnit(
        id=uid, weight=weight, d_of_z={0: d0, 1: d1}, y_of_zd={0: (y0, y1), 1: (y0, y1)}
    )


# ---------------------------------------------------------------------------
# true_late / true_basic
# ---------------------------------------------------------------------------


def test_true_late_p1(p1):
    assert_allclose(true_late(p1, z=1, w=0), 4.0, atol=EXACT)


def test_true_late_homogeneous_effects():
    pop = binary_pop(
        [mk_unit("a", 0, 1, 1.0, 4.0), mk_unit("b", 1, 1, 0.0, 3.0), mk_unit("c", 0, 1, 2.0, 5.0)]
    )
    assert_allclose(true_late(pop), 3.0, atol=EXACT)


def test_true_late_rejects_degenerate_pair(p1):
    with pytest.raises(ConfigError):
        true_late(p1, z=0, w=0)


def test_true_late_requires_switchers():
    pop = binary_pop([mk_unit("nt", 0, 0, 1.0, 2.0), mk_unit("at", 1, 1, 0.0, 5.0)])
    with pytest.raises(IdentificationError):
        true_late(pop)


@pytest.mark.parametrize(
    "kind, expected",
    [
        ("ate", 5.25),
        ("att", 4.5),
        ("itt", 2.0),
        ("complier_share", 0.5),
        ("complier_share_of_treated", 0.5),
    ],
)
def test_true_basic_p1(p1, kind, expected):
    assert_allclose(true_basic(p1, kind), expected, atol=EXACT)


def test_att_requires_treated_mass():
    pop = binary_pop([mk_unit("nt", 0, 0, 1.0, 2.0)])
    with pytest.raises(ConditioningError):
        true_basic(pop, "att")


# ---------------------------------------------------------------------------
# true_acr
# ---------------------------------------------------------------------------


def test_true_acr_p3(p3):
    res = true_acr(p3, z=1, w=0)
    assert_allclose(res.value, 5.0 / 3.0, atol=EXACT)
    assert_allclose(res.weights, [2.0 / 3.0, 1.0 / 3.0], atol=EXACT)
    assert_allclose(res.pair_effects, [1.5, 2.0], atol=EXACT)
    assert res.overlap_units == 1  # one unit crosses both levels


def test_true_acr_single_level_equals_late():
    units = [
        PotentialUnit(
            id="a", weight=1.0, d_of_z={0: 1, 1: 2}, y_of_zd={0: (0.0, 1.0, 4.0), 1: (0.0, 1.0, 4.0)}
        ),
        PotentialUnit(
            id="b", weight=1.0, d_of_z={0: 1, 1: 1}, y_of_zd={0: (0.0, 2.0, 9.0), 1: (0.0, 2.0, 9.0)}
        ),
    ]
    pop = Population(
        units=tuple(units), z_support=(0, 1), d_support=(0, 1, 2), z_dist={0: 0.5, 1: 0.5}
    )
    res = true_acr(pop)
    assert_allclose(res.weights, [0.0, 1.0], atol=EXACT)
    assert_allclose(res.value, 3.0, atol=EXACT)  # level-2 effect of the single mover


def test_true_acr_enforces_pair_ranking(p3):
    with pytest.raises(ConfigError):
        true_acr(p3, z=0, w=1)


def test_true_acr_requires_unit_spacing():
    units = [
        PotentialUnit(
            id="a", weight=1.0, d_of_z={0: 0, 1: 5}, y_of_zd={0: (0.0, 1.0), 1: (0.0, 1.0)}
        )
    ]
    pop = Population(
        units=tuple(units), z_support=(0, 1), d_support=(0, 5), z_dist={0: 0.5, 1: 0.5}
    )
    with pytest.raises(UnsupportedError):
        true_acr(pop)


# ---------------------------------------------------------------------------
# true_iv_combination
# ---------------------------------------------------------------------------


def test_combination_binary_collapses_to_late(p1):
    res = true_iv_combination(p1)
    assert_allclose(res.weights, [1.0], atol=EXACT)
    assert_allclose(res.value, true_late(p1), atol=EXACT)


def test_combination_p3_with_propensity_g(p3):
    res = true_iv_combination(p3)
    assert_allclose(res.value, 5.0 / 3.0, atol=EXACT)


def test_combination_matches_estimand_seed42():
    pop = make_scenario(multi_z_binary_d_config(seed=42, n_z=3))
    g = lambda z: float(z)
    lhs = population_estimand(pop, "iv_g", g=g)
    res = true_iv_combination(pop, g=g)
    assert_allclose(lhs, res.value, atol=1e-12)
    assert_allclose(res.weights.sum(), 1.0, atol=EXACT)
    assert np.all(res.weights >= -EXACT)


def test_combination_detects_defiers(p2):
    with pytest.raises(MonotonicityViolationError) as err:
        true_iv_combination(p2)
    assert err.value.pairs  # offending pairs are reported


def test_combination_collapses_tied_values_with_varying_g():
    # z = 0 and z = 1 are duplicates (same treatment for every unit)
    units = [
        PotentialUnit(
            id="c",
            weight=1.0,
            d_of_z={0: 0, 1: 0, 2: 1},
            y_of_zd={z: (1.0, 3.0) for z in (0, 1, 2)},
        ),
        PotentialUnit(
            id="at",
            weight=1.0,
            d_of_z={0: 1, 1: 1, 2: 1},
            y_of_zd={z: (0.0, 2.0) for z in (0, 1, 2)},
        ),
    ]
    pop = Population(
        units=tuple(units),
        z_support=(0, 1, 2),
        d_support=(0, 1),
        z_dist={0: 0.25, 1: 0.25, 2: 0.5},
    )
    g = lambda z: float(z)  # varies inside the tied group {0, 1}
    res = true_iv_combination(pop, g=g)
    assert len(res.weights) == 1
    assert_allclose(res.value, population_estimand(pop, "iv_g", g=g), atol=1e-12)


# ---------------------------------------------------------------------------
# true_acr_with_covariates
# ---------------------------------------------------------------------------


def _cell_config(effect_shifts, cell_weights):
    shares = {(0, 1): 0.5, (0, 2): 0.3, (1, 1): 0.2}
    return ScenarioConfig(
        seed=8,
        z_support=(0, 1),
        d_support=(0, 1, 2),
        n_units=24,
        covariate=CovariateSpec(
            levels=tuple(cell_weights),
            cell_weights=cell_weights,
            profile_shares_by_cell={lvl: shares for lvl in cell_weights},
            effect_shift_by_cell=effect_shifts,
        ),
    )


def test_covariate_acr_constant_x_reduces_to_combination():
    pop = make_scenario(_cell_config({"a": 0.0}, {"a": 1.0}))
    res = true_acr_with_covariates(pop)
    assert_allclose(res.value, true_iv_combination(pop).value, atol=EXACT)


def test_covariate_acr_equal_theta_is_unweighted_mean():
    # same response profiles in both cells -> same instrument strength
    pop = make_scenario(_cell_config({"a": -0.5, "b": 0.5}, {"a": 0.5, "b": 0.5}))
    res = true_acr_with_covariates(pop)
    thetas = list(res.theta.values())
    assert_allclose(thetas[0], thetas[1], atol=EXACT)
    assert_allclose(res.value, np.mean(list(res.cell_values.values())), atol=1e-10)


def test_covariate_acr_drops_degenerate_cell():
    config = ScenarioConfig(
        seed=9,
        z_support=(0, 1),
        d_support=(0, 1, 2),
        n_units=24,
        covariate=CovariateSpec(
            levels=("a", "b"),
            cell_weights={"a": 0.6, "b": 0.4},
            profile_shares_by_cell={
                "a": {(0, 1): 0.6, (0, 2): 0.4},
                "b": {(1, 1): 0.7, (2, 2): 0.3},  # instrument moves nobody
            },
        ),
    )
    pop = make_scenario(config)
    res = true_acr_with_covariates(pop)
    assert ("b",) in res.dropped_cells
    assert_allclose(res.theta[("b",)], 0.0, atol=EXACT)
    cell_a = [u for u in pop.units if u.x["x"] == "a"]
    sub = Population(
        units=tuple(cell_a),
        z_support=pop.z_support,
        d_support=pop.d_support,
        z_dist=dict(pop.z_dist),
        covariate_schema=pop.covariate_schema,
    )
    assert_allclose(res.value, true_iv_combination(sub).value, atol=EXACT)


def test_covariate_acr_all_degenerate_is_identification_error():
    config = ScenarioConfig(
        seed=10,
        z_support=(0, 1),
        d_support=(0, 1),
        n_units=8,
        covariate=CovariateSpec(
            levels=("a",),
            cell_weights={"a": 1.0},
            profile_shares_by_cell={"a": {(0, 0): 0.5, (1, 1): 0.5}},
        ),
    )
    with pytest.raises(IdentificationError):
        true_acr_with_covariates(make_scenario(config))


# ---------------------------------------------------------------------------
# true_amcr
# ---------------------------------------------------------------------------


def _continuous_pop(y_fn, arms=(0.0, 1.0), points=513):
    ct = ContinuousTreatment.over(arms[0], arms[-1], points)
    grid = np.asarray(ct.grid)
    units = [
        PotentialUnit(
            id="u",
            weight=1.0,
            d_of_z=dict(zip((0, 1), arms)),
            y_of_zd={z: tuple(y_fn(grid)) for z in (0, 1)},
        )
    ]
    return Population(
        units=tuple(units), z_support=(0, 1), d_support=ct, z_dist={0: 0.5, 1: 0.5}
    )


def test_amcr_linear_returns_slope():
    pop = _continuous_pop(lambda d: 0.3 + 2.5 * d)
    assert_allclose(true_amcr(pop).value, 2.5, atol=1e-10)


def test_amcr_quadratic_matches_integral():
    pop = _continuous_pop(lambda d: d**2)
    res = true_amcr(pop)
    assert_allclose(res.value, 1.0, atol=1e-4)
    grid = res.grid
    assert_allclose(np.trapezoid(res.weight_density, grid), 1.0, atol=1e-9)


def test_amcr_grid_refinement_is_stable():
    coarse = make_scenario(
        continuous_config(seed=2, n_z=2, grid_points=513,
                          coef_ranges=((0.0, 1.0), (0.5, 1.5), (-0.5, 0.5), (-0.4, 0.4)))
    )
    fine = make_scenario(
        continuous_config(seed=2, n_z=2, grid_points=2049,
                          coef_ranges=((0.0, 1.0), (0.5, 1.5), (-0.5, 0.5), (-0.4, 0.4)))
    )
    assert abs(true_amcr(coarse).value - true_amcr(fine).value) < 1e-6


def test_amcr_requires_switching_mass():
    ct = ContinuousTreatment.over(0.0, 1.0, 65)
    grid = np.asarray(ct.grid)
    u = PotentialUnit(
        id="flat",
        weight=1.0,
        d_of_z={0: 0.5, 1: 0.5},
        y_of_zd={z: tuple(grid) for z in (0, 1)},
    )
    pop = Population(
        units=(u,), z_support=(0, 1), d_support=ct, z_dist={0: 0.5, 1: 0.5}
    )
    with pytest.raises(IdentificationError):
        true_amcr(pop, z=1, w=0)


# ---------------------------------------------------------------------------
# complier outcome distributions / QTE
# ---------------------------------------------------------------------------


def test_complier_cdf_p1(p1):
    cdf1 = true_complier_outcome(p1, 1)
    assert cdf1.points == (4.0, 6.0)
    assert_allclose(cdf1.values, (0.5, 1.0), atol=EXACT)
    cdf0 = true_complier_outcome(p1, 0)
    assert cdf0.points == (0.0, 2.0)


def test_true_qte_p1(p1):
    assert_allclose(true_qte(p1, 0.5), 4.0, atol=EXACT)


def test_true_qte_null_effects():
    pop = binary_pop(
        [mk_unit("a", 0, 1, 2.0, 2.0), mk_unit("b", 0, 1, 5.0, 5.0), mk_unit("c", 0, 0, 1.0, 1.0)]
    )
    for tau in (0.2, 0.5, 0.8):
        assert_allclose(true_qte(pop, tau), 0.0, atol=EXACT)


# ---------------------------------------------------------------------------
# population_estimand
# ---------------------------------------------------------------------------


def test_estimand_wald_p1(p1):
    assert_allclose(population_estimand(p1, "wald"), 4.0, atol=EXACT)


def test_estimand_wald_p2_sign_reversal(p2):
    assert_allclose(population_estimand(p2, "wald"), -2.0, atol=EXACT)


def test_estimand_ols_p1(p1):
    assert_allclose(population_estimand(p1, "ols"), 4.0, atol=EXACT)


def test_estimand_zero_first_stage_errors():
    pop = binary_pop([mk_unit("nt", 0, 0, 1.0, 2.0), mk_unit("at", 1, 1, 0.0, 5.0)])
    with pytest.raises(WeakInstrumentError):
        population_estimand(pop, "wald")


def test_estimand_unknown_form(p1):
    with pytest.raises(ConfigError):
        population_estimand(p1, "magic")


# ---------------------------------------------------------------------------
# parameter reports
# ---------------------------------------------------------------------------


def test_compute_parameter_report_shapes(p1, p3):
    from late_engine import compute_parameter
    from late_engine.sample_io import dumps_report

    late = compute_parameter(p1, "late")
    assert late.as_dict()["value"] == 4.0
    acr = compute_parameter(p3, "acr")
    assert_allclose(acr.weights, [2.0 / 3.0, 1.0 / 3.0], atol=EXACT)
    qte_rep = compute_parameter(p1, "qte", tau=0.5)
    assert qte_rep.value == 4.0
    cdf_rep = compute_parameter(p1, "complier_cdf", arm=1)
    assert cdf_rep.value["y"] == [4.0, 6.0]
    # every report serializes through the deterministic JSON writer
    for rep in (late, acr, qte_rep, cdf_rep):
        assert dumps_report(rep.as_dict())
        assert rep.preconditions_checked


def test_compute_parameter_unknown_kind(p1):
    from late_engine import compute_parameter

    with pytest.raises(ConfigError):
        compute_parameter(p1, "nope")
