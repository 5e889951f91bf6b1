"""Level-set truncation energies and martingale statistics of a trajectory.

The iteration geometry is fixed once and for all: level k uses the time
window

    I_k = [1 - 2^{-k}, 2]

and the truncation

    u_{k,a} = (u - a (1 - 2^{-k}))^+,   a >= 1,

whose squared mixed norm over I_k,

    U_{k,a} = ( integral_{I_k} ||u_{k,a}(t)||_2^4 dt )^{1/2},

is the quantity driven to zero as k grows.  Alongside it live the
martingale ingredients: the discrete Ito sums

    X_{m+1} = X_m + sum_i <g_i(u^m), u^m_{k,a}> dW^i_m

accumulated with left-endpoint (non-anticipating) evaluation, their
largest drawup X_star = max_t (X_t - min_{s<=t} X_s), and the discrete
quadratic variation qv = sum_m sum_i <g_i(u^m), u^m_{k,a}>^2 dt.

Everything here is a pure function of (trajectory, noise, nonlinearity);
rows for different (k, a) pairs or different paths never share state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coefficients import Nonlinearity
from .grid import Field, Trajectory, time_window
from .noise import NoisePath, coarsen

__all__ = [
    "level_interval",
    "truncate",
    "truncate_trajectory",
    "level_energy",
    "MartingaleStats",
    "martingale_stats",
    "levelset_measure",
    "sup_norm",
    "holder_seminorm",
    "AlphaFit",
    "estimate_alpha",
    "LevelDiagnostics",
    "build_level_diagnostics",
]


def level_interval(k: int) -> tuple:
    """I_k = [1 - 2^{-k}, 2]."""
    if k < 0:
        raise ValueError(f"level index must be >= 0, got {k}")
    return (1.0 - 2.0 ** (-k), 2.0)


def _shift(k: int, a: float) -> float:
    if a < 1.0:
        raise ValueError(f"level base a must be >= 1, got {a}")
    if k < 0:
        raise ValueError(f"level index must be >= 0, got {k}")
    return a * (1.0 - 2.0 ** (-k))


def truncate(f: Field, k: int, a: float) -> Field:
    """(u - a(1 - 2^{-k}))^+; k = 0 reduces to the positive part."""
    return Field(f.grid, np.maximum(f.values - _shift(k, a), 0.0))


def truncate_trajectory(traj: Trajectory, k: int, a: float) -> Trajectory:
    s = _shift(k, a)
    return Trajectory(
        traj.grid, traj.t0, traj.t1, traj.dt, np.maximum(traj.values - s, 0.0), copy=False
    )


def _require_span(traj: Trajectory, interval) -> None:
    if traj.t0 > interval[0] + 1e-9 or traj.t1 < interval[1] - 1e-9:
        raise ValueError(
            f"trajectory spans [{traj.t0}, {traj.t1}], needs [{interval[0]}, {interval[1]}]"
        )


def _trapezoid(count: int, dt: float) -> np.ndarray:
    if count == 1:
        return np.zeros(1)
    w = np.full(count, dt)
    w[0] = w[-1] = dt / 2
    return w


def level_energy(traj: Trajectory, k: int, a: float) -> float:
    """U_{k,a}: squared (4,2)-mixed norm of the truncation over I_k."""
    window = level_interval(k)
    s = _shift(k, a)
    _require_span(traj, window)
    i0, i1 = time_window(traj, window)
    vals = np.maximum(traj.values[i0 : i1 + 1] - s, 0.0)
    sq = (vals * vals).reshape(vals.shape[0], -1).sum(axis=1) * traj.grid.cell_volume
    w = _trapezoid(i1 - i0 + 1, traj.dt)
    return float(np.sqrt(np.sum(w * sq * sq)))


@dataclass(frozen=True)
class MartingaleStats:
    """Discrete Ito path of one (k, a) pair over one window."""

    X: np.ndarray
    X_star: float
    qv: float
    window: tuple
    k: int
    a: float

    def __post_init__(self):
        if self.X_star < 0 or self.qv < 0:
            raise ValueError("drawup and quadratic variation must be nonnegative")


def _aligned_increments(traj: Trajectory, path: NoisePath) -> np.ndarray:
    ratio = traj.dt / path.dt_fine
    factor = int(round(ratio))
    if abs(ratio - factor) > 1e-9 or factor < 1:
        raise ValueError(
            f"trajectory step {traj.dt} incompatible with noise step {path.dt_fine}"
        )
    if abs(path.t0 - traj.t0) > 1e-12:
        raise ValueError(f"noise starts at {path.t0}, trajectory at {traj.t0}")
    return coarsen(path, factor).increments


def martingale_stats(
    traj: Trajectory,
    path: NoisePath,
    nl: Nonlinearity,
    k: int,
    a: float,
    window=None,
) -> MartingaleStats:
    """Ito sums of <g_i(u), u_{k,a}> against the noise over a window.

    The integrand carries the level index k; the window defaults to I_k
    but can be overridden (the quadratic-variation bound pairs the level
    k+1 integrand with the window I_k, one level behind).
    """
    if window is None:
        window = level_interval(k)
    s = _shift(k, a)
    _require_span(traj, window)
    inc = _aligned_increments(traj, path)
    i0, i1 = time_window(traj, window)
    steps = i1 - i0
    grid = traj.grid
    if steps <= 0:
        return MartingaleStats(np.zeros(1), 0.0, 0.0, tuple(window), k, a)
    u_win = traj.values[i0:i1]
    trunc = np.maximum(u_win - s, 0.0).reshape(steps, -1)
    u_flat = u_win.reshape(steps, -1)
    # <g_i(u^m), T^m> = <kappa_i, T^m> + lam_i <u^m, T^m>, all modes at once
    s1 = trunc @ nl.kappa[1:].reshape(nl.m, -1).T
    s2 = np.einsum("sx,sx->s", u_flat, trunc)
    pair = grid.cell_volume * (s1 + np.outer(s2, nl.lam[1:]))
    dX = np.einsum("sm,ms->s", pair, inc[:, i0:i1])
    X = np.concatenate([[0.0], np.cumsum(dX)])
    X_star = float(np.max(X - np.minimum.accumulate(X)))
    qv = math.fsum((pair * pair).sum(axis=1)) * traj.dt
    return MartingaleStats(X, X_star, float(qv), tuple(window), k, a)


def levelset_measure(f: Field, threshold: float) -> float:
    """Measure of the strict superlevel set, dx^n per node above."""
    return float(np.count_nonzero(f.values > threshold)) * f.grid.cell_volume


def sup_norm(traj: Trajectory, interval, signed: str = "plus") -> float:
    """Sup over window nodes of u^+ ("plus") or |u| ("abs")."""
    i0, i1 = time_window(traj, interval)
    block = traj.values[i0 : i1 + 1]
    if signed == "plus":
        return max(float(block.max()), 0.0)
    if signed == "abs":
        return float(np.abs(block).max())
    raise ValueError(f"signed must be 'plus' or 'abs', got {signed!r}")


def _dyadic_scales(traj: Trajectory) -> list:
    """Node shifts 1, 2, 4, ... with shift*dx <= L/4."""
    grid = traj.grid
    shifts = []
    s = 1
    while s * grid.dx <= grid.L / 4 + 1e-12:
        shifts.append(s)
        s *= 2
    return shifts


def _increment_sups(traj: Trajectory, interval) -> tuple:
    """Max |u| increment at each dyadic parabolic scale.

    Scale rho = shift*dx pairs spatial moves of rho (per axis, periodic)
    with time lags of about rho^2 (skipped when rho^2 < dt).
    """
    i0, i1 = time_window(traj, interval)
    block = traj.values[i0 : i1 + 1]
    grid = traj.grid
    shifts = _dyadic_scales(traj)
    if len(shifts) < 4:
        raise ValueError(
            f"only {len(shifts)} dyadic scales at N={grid.N}; need at least 4"
        )
    rhos, sups = [], []
    for shift in shifts:
        rho = shift * grid.dx
        best = 0.0
        for axis in range(grid.n):
            d = np.abs(np.roll(block, -shift, axis=axis + 1) - block)
            best = max(best, float(d.max()))
        lag = int(round(rho * rho / traj.dt))
        if 1 <= lag <= block.shape[0] - 1:
            d = np.abs(block[lag:] - block[:-lag])
            best = max(best, float(d.max()))
        rhos.append(rho)
        sups.append(best)
    return np.array(rhos), np.array(sups)


def holder_seminorm(traj: Trajectory, alpha: float, interval) -> float:
    """Largest increment-to-scale ratio over the sampled dyadic pairs."""
    rhos, sups = _increment_sups(traj, interval)
    return float(np.max(sups / rhos**alpha))


@dataclass(frozen=True)
class AlphaFit:
    """Least-squares regularity exponent with its fit diagnostics."""

    alpha_hat: float
    scales: tuple
    sups: tuple
    stderr: float
    degenerate: bool


def estimate_alpha(traj: Trajectory, interval) -> AlphaFit:
    """Fit log(increment sup) against log(scale) over dyadic scales.

    A trajectory whose increments vanish at some scales (constants) is
    flagged degenerate instead of producing infinities.
    """
    rhos, sups = _increment_sups(traj, interval)
    keep = sups > 0
    if keep.sum() < 2:
        return AlphaFit(
            alpha_hat=float("nan"),
            scales=tuple(rhos),
            sups=tuple(sups),
            stderr=float("nan"),
            degenerate=True,
        )
    x = np.log(rhos[keep])
    y = np.log(sups[keep])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    dof = max(len(x) - 2, 1)
    denom = np.sum((x - x.mean()) ** 2)
    stderr = float(np.sqrt(np.sum(resid**2) / dof / denom)) if denom > 0 else float("inf")
    return AlphaFit(
        alpha_hat=float(slope),
        scales=tuple(rhos),
        sups=tuple(sups),
        stderr=stderr,
        degenerate=False,
    )


@dataclass(frozen=True)
class LevelDiagnostics:
    """One row of the iteration table for a fixed level base a.

    X_star is the drawup whose integrand sits at this row's level k over
    I_k (the combination the energy inequality at step k consumes); qv
    pairs the level k+1 integrand with this row's window I_k (the
    combination the tail bound consumes).  levelset samples the measure
    of {u_{k,a}(t) > 0} every `stride` snapshots inside I_k.
    """

    a: float
    k: int
    window: tuple
    U: float
    X_star: float
    qv: float
    levelset_times: tuple
    levelset: tuple

    def __post_init__(self):
        if self.U < 0 or self.X_star < 0 or self.qv < 0:
            raise ValueError("diagnostics must be nonnegative")


def build_level_diagnostics(
    traj: Trajectory,
    path: NoisePath,
    nl: Nonlinearity,
    a: float,
    k_max: int = 6,
    levelset_stride: int = 25,
) -> list:
    """Rows k = 0..k_max of the iteration table for one trajectory."""
    if levelset_stride < 1:
        raise ValueError(f"levelset_stride must be >= 1, got {levelset_stride}")
    rows = []
    for k in range(k_max + 1):
        window = level_interval(k)
        U = level_energy(traj, k, a)
        own = martingale_stats(traj, path, nl, k, a)
        ahead = martingale_stats(traj, path, nl, k + 1, a, window=window)
        i0, i1 = time_window(traj, window)
        s = _shift(k, a)
        times, measures = [], []
        for i in range(i0, i1 + 1, levelset_stride):
            times.append(traj.t0 + i * traj.dt)
            measures.append(
                float(np.count_nonzero(traj.values[i] > s)) * traj.grid.cell_volume
            )
        rows.append(
            LevelDiagnostics(
                a=float(a),
                k=k,
                window=window,
                U=U,
                X_star=own.X_star,
                qv=ahead.qv,
                levelset_times=tuple(times),
                levelset=tuple(measures),
            )
        )
    return rows
