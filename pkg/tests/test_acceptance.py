"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Tolerances are pinned here, not configurable: exact fixture equalities at
1e-12, enumerated theorem batteries at 1e-10, grid-integrated continuous
cases at 1e-4, and the stated runtime budgets.
"""

import time

import numpy as np

import late_engine as le
from late_engine import enumerate_cells, realize
from late_engine.compliers import complier_mean, complier_outcome_cdf, qte
from late_engine.diagnostics import (
    defier_sensitivity,
    exclusion_sensitivity,
    monotonicity_check,
    ols_decomposition,
    ols_weighted_effect,
)
from late_engine.estimators import bootstrap, tsls_saturated, tsls_saturated_x, wald
from late_engine.oracle import (
    population_estimand,
    true_acr,
    true_acr_with_covariates,
    true_amcr,
    true_complier_mean,
    true_complier_outcome,
    true_iv_combination,
    true_late,
    true_qte,
)
from late_engine.scenarios import (
    binary_iv_config,
    continuous_config,
    covariate_cells_config,
    make_scenario,
    multi_d_config,
    multi_z_binary_d_config,
    weighted_effect_config,
)
from late_engine.verify import CUBIC_COEFS, LINEAR_COEFS, defier_mix_config, with_direct_effect

EXACT = 1e-12
TIGHT = 1e-10
GRID_TOL = 1e-4


def _report(num: int, description: str, passed: bool) -> None:
    print(f"ACCEPTANCE {num:02d} [{description}]: {'PASS' if passed else 'FAIL'}")
    assert passed, f"criterion {num} failed: {description}"


def test_criterion_01_textbook_late(p1, p1_cells):
    best = np.inf
    for _ in range(5):
        t0 = time.perf_counter()
        point = wald(p1_cells).point
        truth = true_late(p1)
        best = min(best, time.perf_counter() - t0)
    ok = abs(point - 4.0) <= EXACT and abs(truth - 4.0) <= EXACT and best < 1e-3
    _report(1, f"textbook equality 4 = 4 in {best * 1e6:.0f}us", ok)


def test_criterion_02_iv_combination():
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(50):
        n_z = 2 + seed % 3
        pop = make_scenario(multi_z_binary_d_config(seed=seed, n_z=n_z))
        g = lambda z: float(z)
        lhs = population_estimand(pop, "iv_g", g=g)
        rhs = true_iv_combination(pop, g=g)
        worst = max(worst, abs(lhs - rhs.value))
        assert np.all(rhs.weights >= -EXACT)
        assert abs(rhs.weights.sum() - 1.0) <= EXACT
    elapsed = time.perf_counter() - t0
    ok = worst <= TIGHT and elapsed < 1.0
    _report(2, f"50 instrument combinations, max err {worst:.1e}, {elapsed:.2f}s", ok)


def test_criterion_03_variable_intensity(p3, p3_cells):
    acr = true_acr(p3)
    ok = (
        abs(wald(p3_cells).point - 5.0 / 3.0) <= EXACT
        and abs(acr.value - 5.0 / 3.0) <= EXACT
        and np.allclose(acr.weights, [2.0 / 3.0, 1.0 / 3.0], atol=EXACT)
    )
    worst = 0.0
    for seed in range(50):
        mode = seed % 3
        if mode == 0:  # binary instrument, multi-valued treatment
            pop = make_scenario(multi_d_config(seed=seed, n_levels=3 + seed % 3, n_z=2))
            lhs = wald(enumerate_cells(pop)).point
            rhs = true_acr(pop, z=pop.z_support[1], w=pop.z_support[0]).value
        elif mode == 1:  # multi-valued instrument
            pop = make_scenario(multi_d_config(seed=seed, n_levels=4, n_z=3))
            lhs = tsls_saturated(enumerate_cells(pop)).point
            rhs = true_iv_combination(pop).value
        else:  # 2-3 covariate cells
            pop = make_scenario(covariate_cells_config(seed=seed, n_cells=2 + seed % 2))
            lhs = tsls_saturated_x(enumerate_cells(pop)).point
            rhs = true_acr_with_covariates(pop).value
        worst = max(worst, abs(lhs - rhs))
    refused = False
    try:
        tsls_saturated_x(enumerate_cells(make_scenario(covariate_cells_config(seed=1))),
                         covariate_mode="linear")
    except le.UnsupportedError:
        refused = True
    ok = ok and worst <= TIGHT and refused
    _report(3, f"P3 exact, 50 intensity batteries max err {worst:.1e}, refusal ok", ok)


def test_criterion_04_continuous_treatment():
    worst_coarse = 0.0
    min_shrink = np.inf
    for seed in range(6):
        coarse = make_scenario(
            continuous_config(seed=seed, n_z=2 + seed % 2, grid_points=513, coef_ranges=CUBIC_COEFS)
        )
        fine = make_scenario(
            continuous_config(seed=seed, n_z=2 + seed % 2, grid_points=2049, coef_ranges=CUBIC_COEFS)
        )
        e_c = abs(
            population_estimand(coarse, "tsls_sat") - true_iv_combination(coarse).value
        )
        e_f = abs(population_estimand(fine, "tsls_sat") - true_iv_combination(fine).value)
        worst_coarse = max(worst_coarse, e_c)
        if e_c > 1e-13 and e_f > 0:
            min_shrink = min(min_shrink, e_c / e_f)
    worst_linear = 0.0
    for seed in range(6):
        pop = make_scenario(
            continuous_config(seed=seed, n_z=2, grid_points=513, coef_ranges=LINEAR_COEFS)
        )
        slopes = [float(u.y_vector(0)[-1] - u.y_vector(0)[0]) for u in pop.units]
        worst_linear = max(worst_linear, abs(true_amcr(pop).value - float(np.mean(slopes))))
    ok = worst_coarse <= GRID_TOL and min_shrink >= 4.0 and worst_linear <= TIGHT
    _report(
        4,
        f"continuous: err {worst_coarse:.1e} @513, shrink {min_shrink:.1f}x, linear {worst_linear:.1e}",
        ok,
    )


def test_criterion_05_defier_bias(p2):
    t0 = time.perf_counter()
    rep = defier_sensitivity(p2)
    ok = (
        abs(rep.drivers["lambda"] - 1.0) <= EXACT
        and abs(rep.biased_estimand - (-2.0)) <= EXACT
        and rep.sign_reversed
        and all(
            u.y_vector(0)[1] - u.y_vector(0)[0] > 0 for u in p2.units
        )  # every unit effect positive, estimand still negative
    )
    worst = 0.0
    for seed in range(200):
        pop = make_scenario(defier_mix_config(seed))
        r = defier_sensitivity(pop)
        lam = r.drivers["lambda"]
        combo = (1 + lam) * r.drivers["delta_compliers"] - lam * r.drivers["delta_defiers"]
        worst = max(worst, abs(r.biased_estimand - combo))
    elapsed = time.perf_counter() - t0
    ok = ok and worst <= TIGHT and elapsed < 5.0
    _report(5, f"defier identity on P2 + 200 seeds, max err {worst:.1e}, {elapsed:.2f}s", ok)


def test_criterion_06_exclusion_bias(p1):
    fix = with_direct_effect(p1, lambda u: 1.0 if u.id == "u1" else 0.0)
    rep = exclusion_sensitivity(fix)
    ok = abs(rep.bias - 0.5) <= EXACT
    worst = 0.0
    for seed in range(200):
        rng = np.random.default_rng((seed, 777))
        base = make_scenario(binary_iv_config(seed=seed))
        h = {u.id: float(rng.uniform(-1.0, 1.5)) for u in base.units}
        r = exclusion_sensitivity(with_direct_effect(base, lambda u: h[u.id]))
        product = r.drivers["mean_direct_effect_noncompliers"] * r.drivers["odds_noncompliance"]
        worst = max(worst, abs(r.bias - product))
    ok = ok and worst <= TIGHT
    _report(6, f"exclusion product form, fixture bias 0.5, 200 seeds max err {worst:.1e}", ok)


def test_criterion_07_kappa_suite(p1_cells):
    ok = abs(complier_mean(p1_cells, lambda y, d, x: y) - 3.0) <= EXACT
    pop = make_scenario(binary_iv_config(seed=3))
    cells = enumerate_cells(pop)
    rng = np.random.default_rng(71)
    worst = 0.0
    for _ in range(20):
        a, b, c = rng.uniform(-2, 2, size=3)
        cut = rng.uniform(0, 8)
        g = lambda y, d, x, a=a, b=b, c=c, cut=cut: a * y + b * d + c * (y > cut)
        worst = max(worst, abs(complier_mean(cells, g) - true_complier_mean(pop, g)))
    ok = ok and worst <= TIGHT
    _report(7, f"kappa means: fixture 3.0 exact, 20 random g max err {worst:.1e}", ok)


def test_criterion_08_complier_distributions(p1, p1_cells):
    worst = 0.0
    for arm in (0, 1):
        est = complier_outcome_cdf(p1_cells, arm)
        truth = true_complier_outcome(p1, arm)
        for y, f in zip(est.curve.points, est.curve.values):
            worst = max(worst, abs(f - truth.at(y)))
    ok = worst <= TIGHT and abs(qte(p1_cells, 0.5) - 4.0) <= EXACT
    # null-effect population: zero quantile effects everywhere
    base = make_scenario(binary_iv_config(seed=9))
    null_units = tuple(
        le.PotentialUnit(
            id=u.id,
            weight=u.weight,
            d_of_z=dict(u.d_of_z),
            y_of_zd={z: (u.y_of_zd[0][0], u.y_of_zd[0][0]) for z in (0, 1)},
        )
        for u in base.units
    )
    null_pop = le.Population(
        units=null_units, z_support=(0, 1), d_support=(0, 1), z_dist={0: 0.5, 1: 0.5}
    )
    null_cells = enumerate_cells(null_pop)
    null_worst = max(
        max(abs(qte(null_cells, tau)), abs(true_qte(null_pop, tau)))
        for tau in (0.1, 0.3, 0.5, 0.7, 0.9)
    )
    ok = ok and null_worst <= EXACT
    _report(8, f"complier CDFs max err {worst:.1e}, qte(0.5)=4, null qte {null_worst:.1e}", ok)


def test_criterion_09_regression_decompositions(p1):
    rep = ols_decomposition(p1)
    ok = (
        abs(rep.slope - 4.0) <= EXACT
        and abs(rep.att - 4.5) <= EXACT
        and abs(rep.selection_bias - (-0.5)) <= EXACT
    )
    worst_identity = 0.0
    worst_mean = 0.0
    for seed in range(25):
        pop = make_scenario(weighted_effect_config(seed=seed, n_levels=3 + seed % 3))
        r = ols_weighted_effect(pop)
        worst_identity = max(worst_identity, abs(r.slope - r.weighted_effect))
        worst_mean = max(worst_mean, abs(r.weight_mean - 1.0))
    ok = ok and worst_identity <= TIGHT and worst_mean <= EXACT
    _report(
        9,
        f"OLS split (4, 4.5, -0.5) exact; weighted identity max err {worst_identity:.1e}",
        ok,
    )


def test_criterion_10_sampling_consistency(p1):
    t0 = time.perf_counter()
    target = true_late(p1)
    hits = 0
    n_runs = 100
    for seed in range(n_runs):
        sample = realize(p1, 10_000, seed=9_000 + seed)
        est = wald(sample)
        boot = bootstrap(sample, "wald", b=200, seed=seed)
        if abs(est.point - target) <= 5.0 * boot.se:
            hits += 1
    elapsed = time.perf_counter() - t0
    ok = hits >= 95 and elapsed < 120.0
    _report(10, f"sampling: {hits}/100 within 5 bootstrap SEs, {elapsed:.1f}s", ok)


def test_criterion_11_monotonicity_diagnostic():
    false_crossings = 0
    for seed in range(100):
        if seed % 2:
            pop = make_scenario(multi_d_config(seed=seed, n_levels=3 + seed % 2, n_z=2))
        else:
            pop = make_scenario(binary_iv_config(seed=seed))
        if monotonicity_check(enumerate_cells(pop)).verdict != "consistent":
            false_crossings += 1
    detected = 0
    for seed in range(10):
        pop = make_scenario(
            binary_iv_config(seed=seed, complier=0.2, never=0.1, always=0.1, defier=0.6)
        )
        if monotonicity_check(enumerate_cells(pop)).verdict == "crossing":
            detected += 1
    ok = false_crossings == 0 and detected == 10
    _report(11, f"{false_crossings} false crossings in 100; 10/10 defier scenarios detected", ok)
