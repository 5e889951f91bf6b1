"""Tables, benchmark curves, and check suites over stored run results.

Everything here reads the per-path summaries a run directory holds; no
trajectories are kept, so the suites below are exactly the checks whose
inputs survive in the summary files.  Tables are emitted in a fixed
order (path id, then level base, then level) with a fixed float
encoding, so regenerating a report from the same run directory yields
byte-identical files.
"""

import csv
import json
import math
import os

import numpy as np

from .coefficients import EllipticitySpec, GrowthData, make_growth_data, \
    make_initial_datum, make_nonlinearity, zero_nonlinearity
from .ensemble import (
    ConfigError,
    EnsembleResult,
    canonical_json,
    load_run,
    rows_from_summary,
)
from .grid import Field, Grid, lp_norm
from .noise import generate
from .solver import ProblemSpec, solve
from .verify import (
    CheckResult,
    _tail_exponent,
    check_qv_bound,
    check_reflection_bound,
    combine_results,
    iteration_from_rows,
    tail_from_stats,
)

SUITES = ("degiorgi", "tail", "moment", "holder", "reflection")


def _require_paths(run: EnsembleResult) -> None:
    if not run.summaries:
        raise ConfigError(
            f"no results in {run.directory or 'run'}: no completed paths"
        )


# ---------------------------------------------------------------- tables

def levels_table(run: EnsembleResult) -> list:
    """Long-format level diagnostics: one row per level-set sample.

    Columns: path_id, a, k, U, X_star, qv, t, levelset.  A level with no
    samples still contributes one row with empty t and levelset, so every
    (path, a, k) triple is visible downstream.
    """
    _require_paths(run)
    rows = []
    for s in run.summaries:
        for a in run.config.diagnostics.a_grid:
            for r in rows_from_summary(s, a):
                samples = list(zip(r.levelset_times, r.levelset))
                if not samples:
                    samples = [("", "")]
                for t, measure in samples:
                    rows.append((s["path_id"], a, r.k, r.U, r.X_star, r.qv,
                                 t, measure))
    return rows


def tails_table(run: EnsembleResult) -> list:
    """Joint-event frequencies against the stretched-exponential bound.

    Columns: a, M, frequency, bound.  Row count is |a_grid| * |M_grid|.
    """
    _require_paths(run)
    d = run.config.diagnostics
    delta = _tail_exponent(run.config.problem.n, d.mu)
    sups = np.array([s["sup_plus"] for s in run.summaries])
    ys = np.array([s["mixed_42"] for s in run.summaries])
    n_paths = len(run.summaries)
    rows = []
    for a in d.a_grid:
        for M in sorted(d.M_grid):
            hit = (sups > a) & (M * ys <= a)
            freq = float(np.count_nonzero(hit)) / n_paths
            rows.append((a, M, freq, math.exp(-(M**delta))))
    return rows


def holder_table(run: EnsembleResult) -> list:
    """Per-path regularity fits: path_id, alpha_hat, seminorm.

    Degenerate paths are omitted; their count is reported in the summary.
    """
    _require_paths(run)
    rows = []
    for s in run.summaries:
        block = s["alpha"]
        if block["degenerate"]:
            continue
        rows.append((s["path_id"], block["alpha_hat"], block["seminorm"]))
    return rows


# ------------------------------------------------- convergence benchmark

def convergence_rows(
    temporal_dts=(4e-3, 2e-3, 1e-3),
    temporal_N: int = 256,
    spatial_Ns=(16, 32, 64),
    spatial_dt: float = 2e-4,
    self_dts=(2e-3, 1e-3, 5e-4, 2.5e-4),
    self_N: int = 64,
    coeff_seed: int = 7,
    path_seed: int = 31,
) -> list:
    """Deterministic solver benchmark: (kind, step, error) rows.

    temporal and spatial rows measure the terminal error of the identity
    heat flow on the 2 pi torus against the exact kernel decay e^{-1} of
    the lowest mode at t = 1; self rows measure terminal differences of
    successive dt halvings on one shared Brownian path with additive
    noise, reported at the coarser step of each pair.
    """

    def heat_error(N, dt):
        grid = Grid(n=1, L=2 * math.pi, N=N)
        ell = EllipticitySpec(lam=1.0, epoch_dt=10.0, cell=1)
        ps = ProblemSpec(grid=grid, ell=ell, gd=GrowthData(Field.zeros(grid), 1.0),
                         nl=zero_nonlinearity(grid, m=1),
                         u0=make_initial_datum(grid, "sine"), t_end=1.0, dt=dt)
        path = generate(1, 0.0, 1.0, dt, (0, 0))
        rep = solve(ps, path)
        exact = ps.u0.values * math.exp(-1.0)
        err = lp_norm(Field(grid, rep.trajectory.values[-1] - exact), 2)
        return err / lp_norm(ps.u0, 2)

    rows = [("temporal", dt, heat_error(temporal_N, dt))
            for dt in temporal_dts]
    rows += [("spatial", 2 * math.pi / N, heat_error(N, spatial_dt))
             for N in spatial_Ns]

    grid = Grid(n=1, L=1.0, N=self_N)
    ell = EllipticitySpec(lam=0.25, epoch_dt=0.25, cell=4)
    gd = make_growth_data(grid, Lambda=1.0)
    nl = make_nonlinearity(grid, gd, m=4, run_seed=coeff_seed, slope_frac=0.0)
    u0 = make_initial_datum(grid, "rough", run_seed=coeff_seed)
    dts = sorted(self_dts, reverse=True)
    path = generate(4, 0.0, 1.0, min(dts), (path_seed, 0))
    terminal = {}
    for dt in dts:
        ps = ProblemSpec(grid=grid, ell=ell, gd=gd, nl=nl, u0=u0,
                         t_end=1.0, dt=dt)
        terminal[dt] = solve(ps, path).trajectory.values[-1]
    for coarse, fine in zip(dts, dts[1:]):
        diff = lp_norm(Field(grid, terminal[coarse] - terminal[fine]), 2)
        rows.append(("self", coarse, diff))
    return rows


def check_convergence(rows) -> CheckResult:
    """Fitted orders from benchmark rows against the expected bands.

    temporal order must land in 1.0 +- 0.2, spatial in 2.0 +- 0.3, and
    the additive self-convergence rate must be at least 0.4; the margin
    is the smallest distance to a violated band edge.
    """
    by_kind = {}
    for kind, step, error in rows:
        by_kind.setdefault(kind, []).append((float(step), float(error)))
    orders = {}
    for kind, pts in by_kind.items():
        if len(pts) < 2:
            raise ValueError(f"need at least two {kind} rows to fit an order")
        if any(e <= 0 for _, e in pts):
            raise ValueError(f"nonpositive {kind} error cannot be log-fitted")
        x = np.log([p[0] for p in pts])
        y = np.log([p[1] for p in pts])
        orders[kind] = float(np.polyfit(x, y, 1)[0])
    bands = {"temporal": (0.8, 1.2), "spatial": (1.7, 2.3),
             "self": (0.4, float("inf"))}
    margins = []
    for kind, (lo, hi) in bands.items():
        if kind not in orders:
            continue
        v = orders[kind]
        slack = min(v - lo, hi - v) if math.isfinite(hi) else v - lo
        margins.append(slack)
    if not margins:
        raise ValueError("no recognized benchmark kinds in rows")
    margin = min(margins)
    return CheckResult(
        name="convergence",
        mode="fitted",
        passed=bool(margin >= 0.0 and all(math.isfinite(v)
                                          for v in orders.values())),
        margin=margin,
        details={"orders": orders,
                 "bands": {k: [lo, hi if math.isfinite(hi) else None]
                           for k, (lo, hi) in bands.items()}},
    )


# ----------------------------------------------------------- suites

def suite_degiorgi(run: EnsembleResult) -> list:
    """Iteration and quadratic-variation fits per level base."""
    _require_paths(run)
    cfg = run.config
    out = []
    for a in cfg.diagnostics.a_grid:
        per_path_rows = [rows_from_summary(s, a) for s in run.summaries]
        iteration = combine_results([
            iteration_from_rows(rows, cfg.problem.n, cfg.diagnostics.mu)
            for rows in per_path_rows
        ])
        qv = combine_results([check_qv_bound(rows) for rows in per_path_rows])
        out.append((f"iteration a={a:g}", iteration))
        out.append((f"qv_bound a={a:g}", qv))
    return out


def suite_tail(run: EnsembleResult) -> list:
    _require_paths(run)
    cfg = run.config
    norms = run.manifest["data_norms"]
    try:
        result = tail_from_stats(
            [s["sup_plus"] for s in run.summaries],
            [s["mixed_42"] for s in run.summaries],
            cfg.problem.n,
            cfg.diagnostics.M_grid,
            cfg.diagnostics.a_grid,
            u0_norm=norms["u0_l2"],
            K_inf=norms["K_inf"],
            mu=cfg.diagnostics.mu,
        )
    except ValueError as exc:
        if "normalized" in str(exc):
            # data-size preconditions are a config matter, not a failure
            raise ConfigError(f"tail suite: {exc}; rerun with "
                              "problem.normalize = true") from exc
        raise
    return [("tail", result)]


def suite_moment(run: EnsembleResult) -> list:
    """Finiteness (and data-relative size) of the p-th moment integrand."""
    _require_paths(run)
    norms = run.manifest["data_norms"]
    size = norms["u0_l2"] + norms["K_2"] + norms["K_inf"]
    out = []
    for p in ("2", "4"):
        vals = [s["moment"][p] for s in run.summaries]
        mean = float(np.mean(vals))
        ratio = mean / size ** float(p) if size > 0 else None
        result = CheckResult(
            name="moment",
            mode="monte_carlo",
            passed=bool(math.isfinite(mean)),
            margin=mean,
            details={"p": float(p), "mean": mean, "data_size": size,
                     "ratio": ratio, "n_paths": len(vals)},
        )
        out.append((f"moment p={p}", result))
    return out


def suite_holder(run: EnsembleResult) -> list:
    """Median regularity exponent and finiteness of the stored norms."""
    _require_paths(run)
    alphas, semis, v_semis, phi_semis = [], [], [], []
    degenerate = 0
    for s in run.summaries:
        block = s["alpha"]
        if block["degenerate"]:
            degenerate += 1
        else:
            alphas.append(block["alpha_hat"])
            semis.append(block["seminorm"])
        for part, sink in (("v", v_semis), ("phi", phi_semis)):
            sub = s["split"][part]
            if not sub["degenerate"]:
                sink.append(sub["seminorm"])
    if not alphas:
        result = CheckResult("holder", "fitted", False, 0.0,
                             {"note": "every path degenerate",
                              "degenerate": degenerate})
        return [("holder", result)]
    median = float(np.median(alphas))
    moments = {p: float(np.mean([s ** p for s in semis])) for p in (2, 4)}
    finite = (all(math.isfinite(v) for v in semis + v_semis + phi_semis)
              and all(math.isfinite(v) for v in moments.values()))
    result = CheckResult(
        name="holder",
        mode="fitted",
        passed=bool(median > 0.0 and finite),
        margin=median,
        details={
            "alpha_median": median,
            "degenerate": degenerate,
            "n_paths": len(run.summaries),
            "seminorm_moments": {str(p): v for p, v in moments.items()},
            "v_seminorm_mean": float(np.mean(v_semis)) if v_semis else None,
            "phi_seminorm_mean": float(np.mean(phi_semis)) if phi_semis else None,
        },
    )
    return [("holder", result)]


def suite_reflection(run: EnsembleResult) -> list:
    refl = run.config.reflection
    result = check_reflection_bound(
        T=refl.T, a_grid=refl.a_grid, b=refl.b, n_paths=refl.n_paths,
        dt=refl.dt, run_seed=run.config.ensemble.run_seed,
    )
    return [("reflection", result)]


_SUITE_RUNNERS = {
    "degiorgi": suite_degiorgi,
    "tail": suite_tail,
    "moment": suite_moment,
    "holder": suite_holder,
    "reflection": suite_reflection,
}


def run_suite(run: EnsembleResult, suite: str) -> list:
    """Execute one named suite (or all) over a loaded run.

    Returns [(label, CheckResult)] in a fixed order.
    """
    if suite == "all":
        names = SUITES
    elif suite in _SUITE_RUNNERS:
        names = (suite,)
    else:
        raise ConfigError(f"unknown suite {suite!r}; choose from "
                          f"{('all',) + SUITES}")
    out = []
    for name in names:
        out.extend(_SUITE_RUNNERS[name](run))
    return out


# ----------------------------------------------------------- emission

def _write_csv(path: str, header, rows) -> None:
    with open(path, "w", encoding="ascii", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_json_table(path: str, header, rows) -> None:
    records = [dict(zip(header, row)) for row in rows]
    cleaned = [{k: (None if v == "" else v) for k, v in rec.items()}
               for rec in records]
    with open(path, "w", encoding="ascii") as fh:
        fh.write(canonical_json(cleaned))
        fh.write("\n")


_TABLES = (
    ("levels", ("path_id", "a", "k", "U", "X_star", "qv", "t", "levelset"),
     levels_table),
    ("tails", ("a", "M", "frequency", "bound"), tails_table),
    ("holder", ("path_id", "alpha_hat", "seminorm"), holder_table),
)


def report(directory: str, fmt: str = "csv") -> list:
    """Emit tables and the check summary for a run directory.

    Writes levels, tails, and holder tables plus a convergence benchmark
    table (csv always; json additionally when fmt is json) and
    summary.json holding the CheckResults of every suite that operates
    on stored data (reflection is a standalone Monte Carlo suite, run via
    the verify command).  Returns the list of files written.
    """
    if fmt not in ("csv", "json"):
        raise ConfigError(f"unknown report format {fmt!r}")
    run = load_run(directory)
    _require_paths(run)
    written = []
    tables = [(name, header, fn(run)) for name, header, fn in _TABLES]
    tables.append((
        "convergence", ("kind", "step", "error"), convergence_rows(),
    ))
    for name, header, rows in tables:
        target = os.path.join(directory, f"{name}.csv")
        _write_csv(target, header, rows)
        written.append(target)
        if fmt == "json":
            target = os.path.join(directory, f"{name}.json")
            _write_json_table(target, header, rows)
            written.append(target)
    checks = []
    skipped = {}
    for suite in ("degiorgi", "tail", "moment", "holder"):
        try:
            results = run_suite(run, suite)
        except ConfigError as exc:
            # unnormalized runs have no tail-bound check; the raw
            # frequencies are still in tails.csv
            skipped[suite] = str(exc)
            continue
        for label, result in results:
            checks.append({"suite": suite, "label": label,
                           **result.to_json_dict()})
    conv_rows = next(rows for name, _, rows in tables if name == "convergence")
    checks.append({"suite": "convergence", "label": "convergence",
                   **check_convergence(conv_rows).to_json_dict()})
    summary = {
        "config_hash": run.manifest["config_hash"],
        "n_paths": len(run.summaries),
        "checks": checks,
        "skipped": skipped,
    }
    target = os.path.join(directory, "summary.json")
    with open(target, "w", encoding="ascii") as fh:
        fh.write(canonical_json(summary))
        fh.write("\n")
    written.append(target)
    return written
