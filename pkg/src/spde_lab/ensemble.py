"""Run configuration, Monte Carlo orchestration, and persistence.

A RunConfig pins one ensemble completely: the problem data, the number
of paths, the diagnostics to record, and where results land.  Paths are
independent; path j draws its noise (and its coefficient stream) from
the seed key (run_seed, j), so any path can be recomputed in isolation
and a crashed run resumes by skipping the per-path files already on
disk.  Result files are written in a canonical JSON encoding, making
byte-identical output a plain consequence of determinism.

The config hash excludes execution details (thread count, output
directory): runs of the same mathematical content share a hash no
matter where or how wide they executed.
"""

import dataclasses
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .coefficients import (
    EllipticitySpec,
    make_growth_data,
    make_initial_datum,
    make_nonlinearity,
)
from .degiorgi import (
    LevelDiagnostics,
    build_level_diagnostics,
    estimate_alpha,
    holder_seminorm,
    level_energy,
    sup_norm,
)
from .grid import Grid, lp_norm
from .noise import generate
from .solver import ProblemSpec, solve, solve_companion
from .verify import moment_value


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


U0_KINDS = ("zero", "bump", "sine", "rough")


@dataclass(frozen=True)
class ProblemConfig:
    n: int = 1
    L: float = 1.0
    N: int = 64
    dt: float = 1e-3
    t_end: float = 2.0
    scheme: str = "semi_implicit"
    lam: float = 0.25
    epoch_dt: float = 0.25
    cell: int = 4
    m: int = 4
    Lambda: float = 1.0
    budget: float = 1.0
    radius: float | None = None
    offset_frac: float = 0.8
    slope_frac: float = 0.5
    coeff_seed: int = 0
    u0_kind: str = "rough"
    u0_size: float = 1.0
    u0_seed: int = 0
    normalize: bool = False


@dataclass(frozen=True)
class EnsembleConfig:
    n_paths: int = 1
    run_seed: int = 0
    thread_count: int = 1


@dataclass(frozen=True)
class DiagnosticsConfig:
    a_grid: tuple = (1.0, 2.0, 4.0)
    k_max: int = 6
    mu: float = 0.3
    M_grid: tuple = (4.0, 8.0, 16.0, 32.0)


@dataclass(frozen=True)
class OutputsConfig:
    directory: str | None = None
    snapshot_stride: int = 25


@dataclass(frozen=True)
class ReflectionConfig:
    T: float = 1.0
    b: float = 1.0
    a_grid: tuple = (1.0, 1.5, 2.0, 3.0)
    n_paths: int = 100000
    dt: float = 1e-4


# field name -> coercion tag, per group; from_dict rejects anything else
_SCHEMAS = {
    "problem": (ProblemConfig, {
        "n": "int", "L": "float", "N": "int", "dt": "float", "t_end": "float",
        "scheme": "str", "lam": "float", "epoch_dt": "float", "cell": "int",
        "m": "int", "Lambda": "float", "budget": "float",
        "radius": "opt_float", "offset_frac": "float", "slope_frac": "float",
        "coeff_seed": "int", "u0_kind": "str", "u0_size": "float",
        "u0_seed": "int", "normalize": "bool",
    }),
    "ensemble": (EnsembleConfig, {
        "n_paths": "int", "run_seed": "int", "thread_count": "int",
    }),
    "diagnostics": (DiagnosticsConfig, {
        "a_grid": "float_tuple", "k_max": "int", "mu": "float",
        "M_grid": "float_tuple",
    }),
    "outputs": (OutputsConfig, {
        "directory": "opt_str", "snapshot_stride": "int",
    }),
    "reflection": (ReflectionConfig, {
        "T": "float", "b": "float", "a_grid": "float_tuple",
        "n_paths": "int", "dt": "float",
    }),
}


def _coerce(group: str, key: str, tag: str, value):
    where = f"{group}.{key}"
    if tag == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false")
        return value
    if isinstance(value, bool):
        raise ConfigError(f"{where} must not be a boolean")
    if tag == "int":
        if not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer")
        return value
    if tag == "float":
        if not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ConfigError(f"{where} must be a finite number")
        return float(value)
    if tag == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
        return value
    if tag == "opt_float":
        if value is None:
            return None
        return _coerce(group, key, "float", value)
    if tag == "opt_str":
        if value is None:
            return None
        return _coerce(group, key, "str", value)
    if tag == "float_tuple":
        if not isinstance(value, (list, tuple)) or not value:
            raise ConfigError(f"{where} must be a nonempty list of numbers")
        return tuple(_coerce(group, key, "float", v) for v in value)
    raise AssertionError(tag)


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    outputs: OutputsConfig = field(default_factory=OutputsConfig)
    reflection: ReflectionConfig = field(default_factory=ReflectionConfig)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - set(_SCHEMAS)
        if unknown:
            raise ConfigError(f"unknown config groups: {sorted(unknown)}")
        groups = {}
        for name, (group_cls, schema) in _SCHEMAS.items():
            raw = data.get(name, {})
            if not isinstance(raw, dict):
                raise ConfigError(f"config group {name!r} must be an object")
            bad = set(raw) - set(schema)
            if bad:
                raise ConfigError(f"unknown keys in {name}: {sorted(bad)}")
            kwargs = {k: _coerce(name, k, schema[k], v) for k, v in raw.items()}
            groups[name] = group_cls(**kwargs)
        cfg = cls(**groups)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        out = {}
        for name in _SCHEMAS:
            group = dataclasses.asdict(getattr(self, name))
            out[name] = {
                k: list(v) if isinstance(v, tuple) else v
                for k, v in group.items()
            }
        return out

    def validate(self) -> None:
        p, e, d, o, refl = (self.problem, self.ensemble, self.diagnostics,
                           self.outputs, self.reflection)
        if p.t_end != 2.0:
            raise ConfigError(
                "problem.t_end must be 2.0: diagnostics windows are the "
                "absolute intervals [1 - 2^-k, 2]"
            )
        if p.u0_kind not in U0_KINDS:
            raise ConfigError(f"problem.u0_kind must be one of {U0_KINDS}")
        if p.u0_size < 0:
            raise ConfigError("problem.u0_size must be nonnegative")
        if not (0 <= p.offset_frac <= 1 and 0 <= p.slope_frac <= 1):
            raise ConfigError("problem fractions must lie in [0, 1]")
        if e.n_paths < 1:
            raise ConfigError("ensemble.n_paths must be at least 1")
        if e.thread_count < 1:
            raise ConfigError("ensemble.thread_count must be at least 1")
        if d.k_max < 1:
            raise ConfigError("diagnostics.k_max must be at least 1")
        if any(a < 1.0 for a in d.a_grid):
            raise ConfigError("diagnostics.a_grid entries must be >= 1")
        if any(M <= 0 for M in d.M_grid):
            raise ConfigError("diagnostics.M_grid entries must be positive")
        if p.n == 2 and not (0.0 < d.mu < 1.0 / 3.0):
            raise ConfigError("diagnostics.mu must lie in (0, 1/3) for n = 2")
        if o.snapshot_stride < 1:
            raise ConfigError("outputs.snapshot_stride must be at least 1")
        if refl.n_paths < 1 or refl.T <= 0 or refl.b <= 0 or refl.dt <= 0:
            raise ConfigError("reflection parameters must be positive")


def resolve(cfg: RunConfig) -> tuple[RunConfig, dict]:
    """Validate and normalize a config; returns (resolved config, metadata).

    With problem.normalize set, u0_size and budget are divided by the
    scale factor s = max(1, ||u0||_2, ||K||_2 + ||K||_inf) so the tail
    and exponential-bound preconditions hold; the factor is recorded.
    The constructors make those two norms equal u0_size and budget, so
    no fields have to be built to compute s.
    """
    p = cfg.problem
    scale = 1.0
    if p.normalize:
        u0_norm = 0.0 if p.u0_kind == "zero" else p.u0_size
        scale = max(1.0, u0_norm, p.budget)
        if scale != 1.0:
            cfg = replace(cfg, problem=replace(
                p, u0_size=p.u0_size / scale, budget=p.budget / scale))
    cfg.validate()
    try:
        pieces = build_problem(cfg)
    except (ValueError, TypeError) as exc:
        # constructors own the detailed range checks; surface them as
        # config errors so nothing starts running
        raise ConfigError(str(exc)) from exc
    meta = {
        "scale_factor": scale,
        "data_norms": {
            "u0_l2": lp_norm(pieces["u0"], 2),
            "K_2": pieces["gd"].norm_2,
            "K_inf": pieces["gd"].norm_inf,
        },
    }
    return cfg, meta


def build_problem(cfg: RunConfig) -> dict:
    """Construct the deterministic problem objects a path solve needs."""
    p = cfg.problem
    grid = Grid(n=p.n, L=p.L, N=p.N)
    ell = EllipticitySpec(lam=p.lam, epoch_dt=p.epoch_dt, cell=p.cell)
    gd = make_growth_data(grid, Lambda=p.Lambda, budget=p.budget, radius=p.radius)
    nl = make_nonlinearity(grid, gd, m=p.m, run_seed=p.coeff_seed,
                           offset_frac=p.offset_frac, slope_frac=p.slope_frac,
                           cell=p.cell)
    u0 = make_initial_datum(grid, p.u0_kind, size=p.u0_size, run_seed=p.u0_seed)
    ps = ProblemSpec(grid=grid, ell=ell, gd=gd, nl=nl, u0=u0,
                     t_end=p.t_end, dt=p.dt, scheme=p.scheme)
    return {"grid": grid, "ell": ell, "gd": gd, "nl": nl, "u0": u0, "ps": ps}


def _plain_scalar(x):
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.integer):
        return int(x)
    raise TypeError(f"not JSON-serializable: {type(x).__name__}")


def canonical_json(obj) -> str:
    """Stable serialization: sorted keys, no whitespace, strict floats."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      allow_nan=False, default=_plain_scalar)


def config_hash(cfg: RunConfig) -> str:
    d = cfg.to_dict()
    d["ensemble"].pop("thread_count")
    d["outputs"].pop("directory")
    return hashlib.sha256(canonical_json(d).encode("ascii")).hexdigest()


def _finite_or_none(x) -> float | None:
    x = float(x)
    return x if math.isfinite(x) else None


def _alpha_block(traj, interval=(1.0, 2.0)) -> dict:
    fit = estimate_alpha(traj, interval)
    if fit.degenerate:
        return {"alpha_hat": None, "stderr": None, "degenerate": True,
                "seminorm": None}
    return {
        "alpha_hat": _finite_or_none(fit.alpha_hat),
        "stderr": _finite_or_none(fit.stderr),
        "degenerate": False,
        "seminorm": _finite_or_none(holder_seminorm(traj, fit.alpha_hat,
                                                    interval)),
    }


def _run_one_path(cfg_dict: dict, path_id: int) -> dict:
    """Pure per-path worker: everything derives from (config, path_id)."""
    cfg = RunConfig.from_dict(cfg_dict)
    p = cfg.problem
    pieces = build_problem(cfg)
    nl = pieces["nl"]
    path = generate(p.m, 0.0, p.t_end, p.dt,
                    (cfg.ensemble.run_seed, path_id))
    traj = solve(pieces["ps"], path).trajectory
    d = cfg.diagnostics
    levels = {}
    for a in d.a_grid:
        rows = build_level_diagnostics(traj, path, nl, a, k_max=d.k_max,
                                       levelset_stride=cfg.outputs.snapshot_stride)
        levels[repr(a)] = [{
            "k": r.k,
            "window": list(r.window),
            "U": r.U,
            "X_star": r.X_star,
            "qv": r.qv,
            "levelset_times": list(r.levelset_times),
            "levelset": list(r.levelset),
        } for r in rows]
    split = solve_companion(traj, nl, path)
    flat_last = traj.values[-1].ravel()
    summary = {
        "path_id": path_id,
        "seed_key": [cfg.ensemble.run_seed, path_id],
        "config_hash": config_hash(cfg),
        "sup_plus": sup_norm(traj, (1.0, 2.0), "plus"),
        "sup_abs": sup_norm(traj, (1.0, 2.0), "abs"),
        "mixed_42": math.sqrt(level_energy(traj, 0, 1.0)),
        "l2_final": math.sqrt(float(flat_last @ flat_last)
                              * traj.grid.cell_volume),
        "moment": {"2": moment_value(traj, 2), "4": moment_value(traj, 4)},
        "alpha": _alpha_block(traj),
        "split": {"v": _alpha_block(split.v), "phi": _alpha_block(split.phi)},
        "levels": levels,
    }
    return summary


def _path_file(directory: str, path_id: int) -> str:
    return os.path.join(directory, "paths", f"path_{path_id:05d}.json")


def _flush(directory: str, path_id: int, summary: dict) -> None:
    target = _path_file(directory, path_id)
    tmp = target + ".tmp"
    with open(tmp, "w", encoding="ascii") as fh:
        fh.write(canonical_json(summary))
        fh.write("\n")
    os.replace(tmp, target)


def rows_from_summary(summary: dict, a: float) -> list:
    """Rebuild LevelDiagnostics rows stored in a per-path summary."""
    key = repr(float(a))
    if key not in summary["levels"]:
        raise KeyError(f"no diagnostics at level base {a}")
    return [
        LevelDiagnostics(
            a=float(a), k=int(r["k"]), window=tuple(r["window"]),
            U=float(r["U"]), X_star=float(r["X_star"]), qv=float(r["qv"]),
            levelset_times=tuple(r["levelset_times"]),
            levelset=tuple(r["levelset"]),
        )
        for r in summary["levels"][key]
    ]


def _aggregate(summaries: list) -> dict:
    alphas = [s["alpha"]["alpha_hat"] for s in summaries
              if not s["alpha"]["degenerate"]]
    moment_mean = {
        p: float(np.mean([s["moment"][p] for s in summaries]))
        for p in ("2", "4")
    } if summaries else {"2": 0.0, "4": 0.0}
    return {
        "n_paths": len(summaries),
        "degenerate": sum(1 for s in summaries if s["alpha"]["degenerate"]),
        "alpha_median": float(np.median(alphas)) if alphas else None,
        "moment_mean": moment_mean,
        "sup_plus_max": max((s["sup_plus"] for s in summaries), default=0.0),
        "mixed_42_max": max((s["mixed_42"] for s in summaries), default=0.0),
    }


@dataclass
class EnsembleResult:
    config: RunConfig
    summaries: list
    failures: list
    aggregate: dict
    manifest: dict
    directory: str | None


def thread_count(cfg: RunConfig) -> int:
    """Configured worker count, overridable by the SPDE_THREADS env var."""
    env = os.environ.get("SPDE_THREADS")
    if env is None:
        return cfg.ensemble.thread_count
    try:
        n = int(env)
    except ValueError:
        raise ConfigError(f"SPDE_THREADS must be an integer, got {env!r}")
    if n < 1:
        raise ConfigError(f"SPDE_THREADS must be at least 1, got {n}")
    return n


def run_ensemble(cfg: RunConfig) -> EnsembleResult:
    """Run (or resume) every path of the configured ensemble.

    Per-path results flush to <directory>/paths/ as they complete; a
    rerun loads any file whose config hash matches instead of solving
    again.  Solver failures are recorded and the run continues.
    """
    t0 = time.monotonic()
    resolved, meta = resolve(cfg)
    h = config_hash(resolved)
    workers = thread_count(resolved)
    out_dir = resolved.outputs.directory
    n_paths = resolved.ensemble.n_paths
    summaries = {}
    failures = []
    pending = list(range(n_paths))
    if out_dir is not None:
        os.makedirs(os.path.join(out_dir, "paths"), exist_ok=True)
        for pid in list(pending):
            fname = _path_file(out_dir, pid)
            if not os.path.exists(fname):
                continue
            with open(fname, encoding="ascii") as fh:
                stored = json.load(fh)
            if stored.get("config_hash") != h:
                raise ConfigError(
                    f"{fname} was produced by a different config "
                    f"(hash {stored.get('config_hash')!r} != {h!r})"
                )
            summaries[pid] = stored
            pending.remove(pid)
    cfg_dict = resolved.to_dict()

    def record(pid: int, summary: dict) -> None:
        summaries[pid] = summary
        if out_dir is not None:
            _flush(out_dir, pid, summary)

    if pending and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_run_one_path, cfg_dict, pid): pid
                       for pid in pending}
            for fut in as_completed(futures):
                pid = futures[fut]
                try:
                    record(pid, fut.result())
                except Exception as exc:
                    failures.append({"path_id": pid,
                                     "error": f"{type(exc).__name__}: {exc}"})
    else:
        for pid in pending:
            try:
                record(pid, _run_one_path(cfg_dict, pid))
            except Exception as exc:
                failures.append({"path_id": pid,
                                 "error": f"{type(exc).__name__}: {exc}"})
    failures.sort(key=lambda f: f["path_id"])
    ordered = [summaries[pid] for pid in sorted(summaries)]
    manifest = {
        "config": cfg_dict,
        "config_hash": h,
        "version": __version__,
        "n_paths": n_paths,
        "completed": len(ordered),
        "thread_count": workers,
        "scale_factor": meta["scale_factor"],
        "data_norms": meta["data_norms"],
        "failures": failures,
        "wall_time": time.monotonic() - t0,
    }
    if out_dir is not None:
        with open(os.path.join(out_dir, "manifest.json"), "w",
                  encoding="ascii") as fh:
            fh.write(canonical_json(manifest))
            fh.write("\n")
    return EnsembleResult(
        config=resolved,
        summaries=ordered,
        failures=failures,
        aggregate=_aggregate(ordered),
        manifest=manifest,
        directory=out_dir,
    )


def load_run(directory: str) -> EnsembleResult:
    """Load a completed or partial run directory."""
    manifest_file = os.path.join(directory, "manifest.json")
    if not os.path.exists(manifest_file):
        raise ConfigError(f"no results in {directory}: manifest.json missing")
    with open(manifest_file, encoding="ascii") as fh:
        manifest = json.load(fh)
    cfg = RunConfig.from_dict(manifest["config"])
    h = manifest["config_hash"]
    summaries = []
    paths_dir = os.path.join(directory, "paths")
    if os.path.isdir(paths_dir):
        for name in sorted(os.listdir(paths_dir)):
            if not (name.startswith("path_") and name.endswith(".json")):
                continue
            with open(os.path.join(paths_dir, name), encoding="ascii") as fh:
                stored = json.load(fh)
            if stored.get("config_hash") != h:
                raise ConfigError(f"{name} does not belong to this run")
            summaries.append(stored)
    summaries.sort(key=lambda s: s["path_id"])
    return EnsembleResult(
        config=cfg,
        summaries=summaries,
        failures=manifest.get("failures", []),
        aggregate=_aggregate(summaries),
        manifest=manifest,
        directory=directory,
    )
