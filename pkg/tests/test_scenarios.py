import numpy as np
import pytest
from numpy.testing import assert_allclose

from late_engine import (
    ComplianceType,
    ConfigError,
    ScenarioConfig,
    enumerate_cells,
    make_scenario,
)
from late_engine.population import population_to_dict
from late_engine.scenarios import (
    binary_iv_config,
    continuous_config,
    covariate_cells_config,
    multi_d_config,
    multi_z_binary_d_config,
    scenario_config_from_dict,
    scenario_config_to_dict,
    weighted_effect_config,
)
from late_engine.wstats import wcov


def test_type_shares_become_exact_masses():
    pop = make_scenario(binary_iv_config(seed=0, complier=0.5, never=0.25, always=0.25))
    masses = pop.type_masses()
    assert_allclose(masses[ComplianceType.COMPLIER], 0.5, atol=1e-12)
    assert_allclose(masses[ComplianceType.NEVER_TAKER], 0.25, atol=1e-12)
    assert_allclose(masses[ComplianceType.ALWAYS_TAKER], 0.25, atol=1e-12)
    assert_allclose(masses[ComplianceType.DEFIER], 0.0, atol=1e-12)


def test_defier_share_breaks_monotonicity():
    pop = make_scenario(
        binary_iv_config(seed=1, complier=0.5, never=0.15, always=0.15, defier=0.2)
    )
    assert pop.has_defiers()
    assert_allclose(pop.type_masses()[ComplianceType.DEFIER], 0.2, atol=1e-12)


def test_shares_must_sum_to_one():
    with pytest.raises(ConfigError):
        make_scenario(binary_iv_config(seed=0, complier=0.5, never=0.3, always=0.3))


def test_exclusion_flag_false_iff_direct_effect():
    clean = make_scenario(binary_iv_config(seed=2))
    assert clean.exclusion_holds
    dirty = make_scenario(binary_iv_config(seed=2, direct_effect=0.7))
    assert not dirty.exclusion_holds
    jittered = make_scenario(binary_iv_config(seed=2, direct_effect_jitter=0.3))
    assert not jittered.exclusion_holds


def test_seed_fully_determines_population():
    cfg = covariate_cells_config(seed=5)
    a = population_to_dict(make_scenario(cfg))
    b = population_to_dict(make_scenario(cfg))
    assert a == b


def test_multi_z_profiles_are_threshold_monotone():
    pop = make_scenario(multi_z_binary_d_config(seed=3, n_z=4))
    assert not pop.has_defiers()
    means = [
        float(np.dot(pop.unit_shares(), [u.d_at(z) for u in pop.units]))
        for z in pop.z_support
    ]
    assert all(b > a for a, b in zip(means, means[1:]))


def test_multi_d_profiles_monotone():
    pop = make_scenario(multi_d_config(seed=4, n_levels=4, n_z=3))
    for u in pop.units:
        levels = [u.d_at(z) for z in pop.z_support]
        assert levels == sorted(levels)


def test_continuous_arms_land_on_grid():
    pop = make_scenario(continuous_config(seed=6, n_z=3, grid_points=513))
    grid = set(pop.d_support.grid)
    for u in pop.units:
        for z in pop.z_support:
            assert u.d_at(z) in grid


def test_weighted_effect_population_is_certified_uncorrelated():
    pop = make_scenario(weighted_effect_config(seed=7, n_levels=3))
    assert "linear_effects" in pop.tags and "no_selection" in pop.tags
    cells = enumerate_cells(pop)
    # potential outcomes at each level are uncorrelated with realized treatment
    levels = pop.d_support
    shares = pop.unit_shares()
    d = np.array([u.d_at(0) for u in pop.units], dtype=float)
    for j, _ in enumerate(levels):
        yj = np.array([u.y_vector(0)[j] for u in pop.units])
        assert abs(wcov(yj, d, shares)) < 1e-12
    assert cells.n == len(pop.units)


def test_config_json_round_trip():
    for cfg in (
        binary_iv_config(seed=1, defier=0.1, complier=0.5, never=0.2, always=0.2),
        multi_z_binary_d_config(seed=2, n_z=3),
        covariate_cells_config(seed=3),
        continuous_config(seed=4),
        weighted_effect_config(seed=5),
    ):
        data = scenario_config_to_dict(cfg)
        back = scenario_config_from_dict(data)
        assert population_to_dict(make_scenario(back)) == population_to_dict(
            make_scenario(cfg)
        )


def test_direct_effect_requires_binary_setting():
    with pytest.raises(ConfigError):
        make_scenario(
            ScenarioConfig(
                seed=0,
                z_support=(0, 1, 2),
                d_support=(0, 1),
                profile_shares={(0, 0, 1): 0.5, (0, 1, 1): 0.5},
                direct_effect=1.0,
            )
        )
