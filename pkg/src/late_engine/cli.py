"""Command-line interface: simulate, estimate, profile-compliers, diagnose,
sensitivity, verify.

All outputs are deterministic given the run configuration (including seed):
report JSON is emitted with fixed field order and 17-significant-digit
floats, so identical runs produce byte-identical files.  Errors leave with
a nonzero exit code and a machine-readable record on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, compliers, diagnostics, estimators
from .errors import ConfigError, LateEngineError
from .fixtures import fixture_names, load_fixture
from .population import enumerate_cells, realize, save_population
from .sample_io import ColumnMapping, dumps_report, load_csv, save_csv, write_report, write_sweep_csv
from .scenarios import (
    binary_iv_config,
    continuous_config,
    covariate_cells_config,
    make_scenario,
    multi_d_config,
    multi_z_binary_d_config,
    scenario_config_from_dict,
    weighted_effect_config,
)
from .verify import run_verification, with_direct_effect
from .wstats import wmean

FAMILIES = {
    "binary": lambda seed: binary_iv_config(seed),
    "multi-z": lambda seed: multi_z_binary_d_config(seed, n_z=3),
    "multi-d": lambda seed: multi_d_config(seed),
    "covariates": lambda seed: covariate_cells_config(seed),
    "continuous": lambda seed: continuous_config(seed),
    "weighted-effect": lambda seed: weighted_effect_config(seed),
}


@dataclass(frozen=True)
class RunConfig:
    """Declarative description of one CLI invocation."""

    subcommand: str
    input: str | None = None
    fixture: str | None = None
    config_path: str | None = None
    family: str | None = None
    mapping: ColumnMapping = field(default_factory=ColumnMapping)
    estimator: str | None = None
    g: str = "identity"
    bootstrap_b: int | None = None
    seed: int | None = None
    n: int | None = None
    enumerate_cells: bool = False
    out: str | None = None
    pop_out: str | None = None
    out_dir: str | None = None
    weak_threshold: float = estimators.DEFAULT_WEAK_THRESHOLD
    crossing_eps: float | None = None
    spec: str = "saturated"
    scenario: str | None = None
    sweep: str | None = None
    plot: bool = False
    json_stdout: bool = False
    quick: bool = False


# ---------------------------------------------------------------------------
# Subcommand implementations
# ---------------------------------------------------------------------------


def _build_population(config: RunConfig):
    sources = [s for s in (config.fixture, config.config_path, config.family) if s]
    if len(sources) != 1:
        raise ConfigError("give exactly one of --fixture, --config, --family")
    if config.fixture:
        return load_fixture(config.fixture)
    if config.config_path:
        with open(config.config_path, "r", encoding="utf-8") as fh:
            return make_scenario(scenario_config_from_dict(json.load(fh)))
    if config.seed is None:
        raise ConfigError("--family requires --seed")
    return make_scenario(FAMILIES[config.family](config.seed))


def _cmd_simulate(config: RunConfig) -> int:
    pop = _build_population(config)
    if config.out is None:
        raise ConfigError("simulate requires --out for the sample CSV")
    if config.enumerate_cells:
        sample = enumerate_cells(pop)
    else:
        if config.n is None or config.seed is None:
            raise ConfigError("simulate requires --n and --seed unless --enumerate is given")
        sample = realize(pop, config.n, config.seed)
    save_csv(sample, config.out)
    if config.pop_out:
        save_population(pop, config.pop_out)
    print(f"wrote {sample.n} rows to {config.out}")
    return 0


def _g_function(config: RunConfig, sample):
    if config.g == "identity":
        return lambda z: float(z)
    if config.g == "propensity":
        means = {}
        for z in np.unique(sample.z):
            m = sample.z == z
            means[float(z)] = wmean(sample.d[m], sample.weight[m], "propensity cell")
        return lambda z: means[float(z)]
    raise ConfigError(f"unknown instrument function {config.g!r} (identity | propensity)")


def _echo_sample(sample) -> str:
    zs = ", ".join(format(v, "g") for v in sample.z_values())
    ds = ", ".join(format(v, "g") for v in sample.d_values()[:8])
    more = "..." if sample.d_values().size > 8 else ""
    return f"n={sample.n}, Z support {{{zs}}}, D values {{{ds}{more}}}"


def _cmd_estimate(config: RunConfig) -> int:
    if config.input is None or config.estimator is None:
        raise ConfigError("estimate requires --input and --estimator")
    sample = load_csv(config.input, config.mapping)
    g = _g_function(config, sample) if config.estimator == "iv_g" else None
    fn = estimators.resolve_estimator(config.estimator, g=g)
    if config.estimator in ("wald", "iv_g", "tsls_sat", "tsls_sat_x") and g is None:
        fn_report = fn(sample, weak_threshold=config.weak_threshold)
    else:
        fn_report = fn(sample)
    boot = None
    if config.bootstrap_b:
        if config.seed is None:
            raise ConfigError("--bootstrap requires --seed")
        boot = estimators.bootstrap(
            sample, config.estimator, b=config.bootstrap_b, seed=config.seed, g=g
        )
        fn_report = fn_report.with_inference(boot)
    payload = fn_report.as_dict()
    if config.json_stdout:
        print(dumps_report(payload))
    else:
        print(f"loaded sample: {_echo_sample(sample)}")
        line = f"{fn_report.kind}: point={fn_report.point:.6g}"
        if fn_report.first_stage is not None:
            line += f", first stage={fn_report.first_stage:.6g}"
        if fn_report.se is not None:
            line += f", se={fn_report.se:.4g}, ci=[{fn_report.ci[0]:.6g}, {fn_report.ci[1]:.6g}]"
        if fn_report.flags:
            line += f", flags={list(fn_report.flags)}"
        print(line)
    if config.out:
        write_report(payload, config.out)
        if config.plot and boot is not None:
            from .plots import plot_bootstrap

            fig_path = str(Path(config.out).with_suffix(".png"))
            plot_bootstrap(boot.points, fn_report.point, fig_path, title=fn_report.kind)
    return 0


def _cmd_profile(config: RunConfig) -> int:
    if config.input is None:
        raise ConfigError("profile-compliers requires --input")
    sample = load_csv(config.input, config.mapping)
    profile = compliers.complier_profile(sample)
    payload = profile.as_dict()
    if config.json_stdout:
        print(dumps_report(payload))
    else:
        print(f"loaded sample: {_echo_sample(sample)}")
        print(
            f"complier share={profile.share:.4g}, of the treated={profile.share_of_treated:.4g}, "
            f"mean kappa={profile.kappa_mean:.4g}, negative kappa fraction="
            f"{profile.kappa_negative_fraction:.4g}"
        )
    if config.out:
        write_report(payload, config.out)
    return 0


def _cmd_diagnose(config: RunConfig) -> int:
    if config.input is None:
        raise ConfigError("diagnose requires --input")
    sample = load_csv(config.input, config.mapping)
    mono = diagnostics.monotonicity_check(
        sample, eps=config.crossing_eps, seed=config.seed or 0
    )
    relevance = diagnostics.relevance_check(sample, weak_threshold=config.weak_threshold)
    saturation = diagnostics.saturation_check(sample, config.spec)
    payload = {
        "monotonicity": mono.as_dict(),
        "relevance": relevance.as_dict(),
        "saturation": saturation.as_dict(),
    }
    if config.json_stdout:
        print(dumps_report(payload))
    else:
        print(f"loaded sample: {_echo_sample(sample)}")
        print(f"monotonicity: {mono.verdict} (differences {list(mono.differences)})")
        print(f"relevance: first stage {relevance.first_stage:.6g}" + (" [weak]" if relevance.weak else ""))
        print(f"saturation: {'pass' if saturation.passed else 'refuse'} ({saturation.reason})")
    if config.out:
        write_report(payload, config.out)
    return 0


def _parse_sweep(text: str) -> np.ndarray:
    try:
        lo, hi, count = text.split(":")
        values = np.linspace(float(lo), float(hi), int(count))
    except ValueError:
        raise ConfigError(f"sweep must look like lo:hi:count, got {text!r}") from None
    if values.size < 1:
        raise ConfigError("sweep needs at least one point")
    return values


def _cmd_sensitivity(config: RunConfig) -> int:
    if config.scenario not in ("defiers", "exclusion"):
        raise ConfigError("sensitivity requires --scenario defiers|exclusion")
    if config.sweep is None:
        raise ConfigError("sensitivity requires --sweep lo:hi:count")
    seed = config.seed if config.seed is not None else 0
    rows = []
    if config.scenario == "defiers":
        for share in _parse_sweep(config.sweep):
            share = float(share)
            if not 0.0 <= share < 0.5:
                raise ConfigError("defier share sweep must stay within [0, 0.5)")
            rest = (1.0 - 0.5 - share) / 2.0
            pop = make_scenario(
                binary_iv_config(
                    seed=seed,
                    complier=0.5,
                    defier=share,
                    never=rest,
                    always=rest,
                    effect_range_by_type={"complier": (0.5, 1.5), "defier": (2.0, 3.5)},
                )
            )
            rep = diagnostics.defier_sensitivity(pop)
            rows.append(
                {
                    "defier_share": share,
                    "lambda": rep.drivers["lambda"],
                    "bias": rep.bias,
                    "true_late": rep.true_late,
                    "delta_defiers": rep.drivers["delta_defiers"],
                    "biased_estimand": rep.biased_estimand,
                    "sign_reversed": rep.sign_reversed,
                }
            )
        knob = "defier_share"
    else:
        base = make_scenario(binary_iv_config(seed=seed))
        for h in _parse_sweep(config.sweep):
            rep = diagnostics.exclusion_sensitivity(with_direct_effect(base, float(h)))
            rows.append(
                {
                    "direct_effect": float(h),
                    "mean_direct_effect_noncompliers": rep.drivers[
                        "mean_direct_effect_noncompliers"
                    ],
                    "odds_noncompliance": rep.drivers["odds_noncompliance"],
                    "bias": rep.bias,
                    "true_late": rep.true_late,
                    "biased_estimand": rep.biased_estimand,
                }
            )
        knob = "direct_effect"
    if config.out_dir:
        out_dir = Path(config.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / f"sensitivity_{config.scenario}.csv"
        write_sweep_csv(rows, csv_path)
        print(f"wrote {len(rows)} sweep rows to {csv_path}")
        if config.plot:
            from .plots import plot_sensitivity_sweep

            fig_path = out_dir / f"sensitivity_{config.scenario}.png"
            plot_sensitivity_sweep(rows, knob, fig_path)
            print(f"wrote figure to {fig_path}")
    else:
        header = list(rows[0])
        print(",".join(header))
        for row in rows:
            print(",".join(format(row[k], ".10g") if isinstance(row[k], float) else str(row[k]) for k in header))
    return 0


def _cmd_verify(config: RunConfig) -> int:
    results = run_verification(quick=config.quick)
    width = max(len(r.check_id) for r in results) + 2
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        err = f"  max err {r.max_error:.2e}" if r.max_error is not None else ""
        tail = "" if r.passed else f"  [{r.detail}]"
        print(f"{r.check_id:<{width}} ... {status}{err}{tail}")
    n_pass = sum(r.passed for r in results)
    print(f"{n_pass}/{len(results)} checks passed")
    if config.out_dir:
        out_dir = Path(config.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_report({"checks": [r.as_dict() for r in results]}, out_dir / "verify.json")
        if config.plot:
            from .plots import plot_verification

            plot_verification(results, out_dir / "verify.png")
    return 0 if n_pass == len(results) else 1


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="late-engine",
        description="simulate populations, estimate instrumented effects, and "
        "verify identification equalities",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_columns(p):
        p.add_argument("--input", required=True, help="input sample CSV")
        p.add_argument("--y", default="y", help="outcome column name")
        p.add_argument("--d", default="d", help="treatment column name")
        p.add_argument("--z", default="z", help="instrument column name")
        p.add_argument("--x", action="append", default=[], help="covariate column (repeatable)")
        p.add_argument("--weight", default=None, help="optional row-weight column")
        p.add_argument("--json", action="store_true", help="print the JSON report to stdout")
        p.add_argument("--out", default=None, help="write the JSON report here")

    p = sub.add_parser("simulate", help="generate a population and write a sample CSV")
    p.add_argument("--fixture", choices=fixture_names(), default=None)
    p.add_argument("--config", dest="config_path", default=None, help="scenario config JSON")
    p.add_argument("--family", choices=sorted(FAMILIES), default=None)
    p.add_argument("--n", type=int, default=None, help="number of sampled rows")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument(
        "--enumerate",
        dest="enumerate_cells",
        action="store_true",
        help="write the exact weighted cell enumeration instead of sampling",
    )
    p.add_argument("--out", required=True, help="output sample CSV")
    p.add_argument("--pop-out", default=None, help="also write the population JSON here")

    p = sub.add_parser("estimate", help="run one estimator on a CSV sample")
    add_columns(p)
    p.add_argument(
        "--estimator",
        required=True,
        choices=("wald", "iv_g", "tsls_sat", "tsls_sat_x", "itt", "ols"),
    )
    p.add_argument("--g", default="identity", help="instrument function for iv_g")
    p.add_argument("--bootstrap", dest="bootstrap_b", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--weak-threshold", type=float, default=estimators.DEFAULT_WEAK_THRESHOLD)
    p.add_argument("--plot", action="store_true", help="render a bootstrap histogram next to --out")

    p = sub.add_parser("profile-compliers", help="complier share, tilts, CDFs, kappa diagnostics")
    add_columns(p)

    p = sub.add_parser("diagnose", help="monotonicity, relevance, and saturation checks")
    add_columns(p)
    p.add_argument("--spec", default="saturated", help="covariate specification to vet")
    p.add_argument("--eps", dest="crossing_eps", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--weak-threshold", type=float, default=estimators.DEFAULT_WEAK_THRESHOLD)

    p = sub.add_parser("sensitivity", help="violation sweeps with exact bias accounting")
    p.add_argument("--scenario", required=True, choices=("defiers", "exclusion"))
    p.add_argument("--sweep", required=True, help="lo:hi:count")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--plot", action="store_true")

    p = sub.add_parser("verify", help="run every identification equality check")
    p.add_argument("--quick", action="store_true", help="smaller seeded batteries")
    p.add_argument("--out-dir", default=None)
    p.add_argument("--plot", action="store_true")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    mapping = ColumnMapping(
        y=getattr(args, "y", "y"),
        d=getattr(args, "d", "d"),
        z=getattr(args, "z", "z"),
        x=tuple(getattr(args, "x", []) or []),
        weight=getattr(args, "weight", None),
    )
    return RunConfig(
        subcommand=args.subcommand,
        input=getattr(args, "input", None),
        fixture=getattr(args, "fixture", None),
        config_path=getattr(args, "config_path", None),
        family=getattr(args, "family", None),
        mapping=mapping,
        estimator=getattr(args, "estimator", None),
        g=getattr(args, "g", "identity"),
        bootstrap_b=getattr(args, "bootstrap_b", None),
        seed=getattr(args, "seed", None),
        n=getattr(args, "n", None),
        enumerate_cells=getattr(args, "enumerate_cells", False),
        out=getattr(args, "out", None),
        pop_out=getattr(args, "pop_out", None),
        out_dir=getattr(args, "out_dir", None),
        weak_threshold=getattr(args, "weak_threshold", estimators.DEFAULT_WEAK_THRESHOLD),
        crossing_eps=getattr(args, "crossing_eps", None),
        spec=getattr(args, "spec", "saturated"),
        scenario=getattr(args, "scenario", None),
        sweep=getattr(args, "sweep", None),
        plot=getattr(args, "plot", False),
        json_stdout=getattr(args, "json", False),
        quick=getattr(args, "quick", False),
    )


_COMMANDS = {
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "profile-compliers": _cmd_profile,
    "diagnose": _cmd_diagnose,
    "sensitivity": _cmd_sensitivity,
    "verify": _cmd_verify,
}


def run(config: RunConfig) -> int:
    """Execute a run configuration; returns the process exit status."""
    return _COMMANDS[config.subcommand](config)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = config_from_args(args)
    try:
        return run(config)
    except LateEngineError as exc:
        record = {"error": {"code": exc.code, "message": str(exc)}}
        print(json.dumps(record), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
