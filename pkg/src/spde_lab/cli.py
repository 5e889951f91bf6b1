"""The `spde` command line.

Four subcommands: `simulate` runs a Monte Carlo ensemble from a JSON
config into a run directory, `verify` executes check suites over a run
directory, `report` emits the csv/json tables, and `selftest` exercises
the exact-identity checks on synthetic data with no directory at all.

Exit codes: 0 success, 1 a check failed, 2 config error (bad file,
unknown keys, missing run data, unmet preconditions), 3 runtime error.
"""

import argparse
import json
import math
import sys

from .coefficients import (
    EllipticitySpec,
    make_growth_data,
    make_initial_datum,
    make_nonlinearity,
)
from .ensemble import ConfigError, RunConfig, canonical_json, load_run, \
    run_ensemble
from .grid import Grid
from .noise import generate
from .report import SUITES, report, run_suite
from .solver import ProblemSpec, solve
from .verify import (
    check_chebyshev,
    check_energy_monotonicity,
    check_interpolation,
    check_mvt,
    check_reflection_bound,
    check_summation_by_parts,
    synthetic_fourier_trajectory,
)


def _print_results(pairs) -> bool:
    ok = True
    for label, result in pairs:
        ok = ok and result.passed
        if math.isinf(result.margin) and result.margin > 0:
            shown = "vacuous"
        else:
            shown = f"{result.margin:.4g}"
        tag = "PASS" if result.passed else "FAIL"
        print(f"[{tag}] {label}: margin={shown} ({result.mode})")
    return ok


def _cmd_simulate(args) -> int:
    try:
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {args.config}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {args.config} is not valid JSON: "
                          f"{exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    raw.setdefault("outputs", {})
    if not isinstance(raw["outputs"], dict):
        raise ConfigError("config group outputs must be an object")
    raw["outputs"]["directory"] = args.out
    cfg = RunConfig.from_dict(raw)
    run = run_ensemble(cfg)
    print(f"completed {len(run.summaries)} of "
          f"{cfg.ensemble.n_paths} paths in {args.out}")
    print(f"config hash {run.manifest['config_hash']}")
    if run.failures:
        for f in run.failures:
            print(f"path {f['path_id']} failed: {f['error']}",
                  file=sys.stderr)
        return 3
    return 0


def _cmd_verify(args) -> int:
    run = load_run(args.in_dir)
    pairs = run_suite(run, args.suite)
    ok = _print_results(pairs)
    if args.report_file:
        payload = [{"label": label, **result.to_json_dict()}
                   for label, result in pairs]
        with open(args.report_file, "w", encoding="ascii") as fh:
            fh.write(canonical_json(payload))
            fh.write("\n")
    return 0 if ok else 1


def _cmd_report(args) -> int:
    for path in report(args.in_dir, args.fmt):
        print(path)
    return 0


def _selftest_pairs() -> list:
    grid = Grid(n=1, L=1.0, N=32)
    ell = EllipticitySpec(lam=0.25, epoch_dt=0.25, cell=4)
    gd = make_growth_data(grid, Lambda=1.0)
    nl = make_nonlinearity(grid, gd, m=4, run_seed=7)
    ps = ProblemSpec(grid=grid, ell=ell, gd=gd,
                     nl=nl, u0=make_initial_datum(grid, "rough", run_seed=7),
                     t_end=2.0, dt=2e-3)
    path = generate(4, 0.0, 2.0, 2e-3, (0, 0))
    traj = solve(ps, path).trajectory
    grid3 = Grid(n=3, L=1.0, N=16)
    synth = synthetic_fourier_trajectory(grid3, steps=8, dt=0.25, run_seed=1)
    return [
        ("summation by parts", check_summation_by_parts(traj, ell, path)),
        ("level chebyshev", check_chebyshev(traj, a=1.0, k_max=4)),
        ("level monotonicity", check_energy_monotonicity(traj)),
        ("mean value bound", check_mvt(traj, a=1.0, k_max=4)),
        ("interpolation n=3", check_interpolation(synth)),
        ("reflection bound",
         check_reflection_bound(T=1.0, a_grid=(1.0, 2.0), b=1.0,
                                n_paths=4000, dt=1e-3, run_seed=0)),
    ]


def _cmd_selftest(args) -> int:
    return 0 if _print_results(_selftest_pairs()) else 1


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spde",
        description="simulate rough-coefficient stochastic parabolic "
                    "equations and verify regularity diagnostics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a Monte Carlo ensemble")
    sim.add_argument("--config", required=True, help="JSON config file")
    sim.add_argument("--out", required=True, help="run directory to write")
    sim.set_defaults(func=_cmd_simulate)

    ver = sub.add_parser("verify", help="run check suites over a run directory")
    ver.add_argument("--in", dest="in_dir", required=True,
                     help="run directory to read")
    ver.add_argument("--suite", default="all", choices=("all",) + SUITES)
    ver.add_argument("--report", dest="report_file",
                     help="write results as JSON to this file")
    ver.set_defaults(func=_cmd_verify)

    rep = sub.add_parser("report", help="emit tables for a run directory")
    rep.add_argument("--in", dest="in_dir", required=True,
                     help="run directory to read")
    rep.add_argument("--format", dest="fmt", default="csv",
                     choices=("csv", "json"))
    rep.set_defaults(func=_cmd_report)

    st = sub.add_parser("selftest",
                        help="exact-identity checks on synthetic data")
    st.set_defaults(func=_cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # CLI boundary: anything else is a runtime fault
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
