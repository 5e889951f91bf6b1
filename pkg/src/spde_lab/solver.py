"""Semi-implicit time stepping for the quasilinear stochastic equation.

One step from u^m to u^{m+1} solves

    (I - dt * div(A_m grad .)) u^{m+1} = u^m + dt f(u^m) + sum_i g_i(u^m) dW^i_m

with the diffusion matrix frozen at the left endpoint of the step (the
epoch in force at time t_m) and drift and noise evaluated explicitly at
u^m, so the martingale term never peeks forward.  The implicit operator is
symmetric positive definite for any measurable A above the ellipticity
floor, which is what makes the scheme unconditionally stable; an explicit
scheme is kept for cross-validation under its parabolic step restriction.

The implicit solve has two interchangeable backends: preconditioned
conjugate gradient (relative residual 1e-10) and a sparse direct
factorization reused across the steps of an epoch.  "auto" picks the
direct path, which is much faster for many steps per epoch at the grid
sizes this laboratory runs; both backends record per-step residuals and
the weak-form residual probe checks the scheme identity afterwards.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coefficients import (
    EllipticitySpec,
    GrowthData,
    Nonlinearity,
    eval_drift,
    noise_amplitudes,
    sample_coefficient,
    validate_ellipticity,
)
from .grid import (
    Field,
    Grid,
    MatrixField,
    Trajectory,
    _div_a_grad_values,
    _face_coefficients,
    a_grad_pairing,
    inner,
    time_window,
    write_trajectory,
)
from .noise import NoisePath, coarsen

__all__ = [
    "ProblemSpec",
    "SolveReport",
    "LinearSolveError",
    "CompanionSplit",
    "step",
    "solve",
    "weak_residual",
    "solve_companion",
]

CG_RTOL = 1e-10


class LinearSolveError(RuntimeError):
    """An implicit solve failed to reach the required residual."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class ProblemSpec:
    """Everything that defines one solve, independent of the noise draw."""

    grid: Grid
    ell: EllipticitySpec
    gd: GrowthData
    nl: Nonlinearity
    u0: Field
    t_end: float = 2.0
    dt: float = 1e-3
    scheme: str = "semi_implicit"

    def __post_init__(self):
        if self.scheme not in ("semi_implicit", "explicit"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not (self.t_end > 0 and self.dt > 0):
            raise ValueError("t_end and dt must be positive")
        steps = self.t_end / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError(f"dt={self.dt} does not divide t_end={self.t_end}")
        for f, name in ((self.u0, "u0"), (self.gd.K, "K")):
            if f.grid != self.grid:
                raise ValueError(f"{name} lives on a different grid")
        if self.nl.grid != self.grid:
            raise ValueError("nonlinearity lives on a different grid")
        if self.scheme == "explicit":
            # explicit diffusion of coefficients up to 1/lam needs a
            # parabolic step restriction; keep a factor-2 safety margin
            cap = self.ell.lam * self.grid.dx**2 / (4 * self.grid.n)
            if self.dt > cap * (1 + 1e-12):
                raise ValueError(
                    f"explicit scheme needs dt <= lam*dx^2/(4n) = {cap:.3e}, got {self.dt}"
                )

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def epoch_of_step(self, m: int) -> int:
        """Epoch in force on [t_m, t_{m+1}); left-endpoint convention."""
        return int(np.floor(m * self.dt / self.ell.epoch_dt + 1e-9))


@dataclass(frozen=True)
class SolveReport:
    """A finished solve: the trajectory plus linear-solver bookkeeping.

    Wall time is excluded from canonical_bytes so that reproducibility
    comparisons see only the mathematical content.
    """

    trajectory: Trajectory
    iterations: np.ndarray
    residuals: np.ndarray
    wall_time: float
    scheme: str
    linear_solver: str
    seed_key: tuple

    def canonical_bytes(self) -> bytes:
        grid = self.trajectory.grid
        head = (
            f"spde-solve/1 n={grid.n} N={grid.N} L={grid.L!r} "
            f"t0={self.trajectory.t0!r} t1={self.trajectory.t1!r} dt={self.trajectory.dt!r} "
            f"scheme={self.scheme} linear={self.linear_solver} seed={self.seed_key!r}\n"
        ).encode()
        return (
            head
            + self.trajectory.values.tobytes()
            + np.ascontiguousarray(self.iterations, dtype=np.int64).tobytes()
            + np.ascontiguousarray(self.residuals, dtype=np.float64).tobytes()
        )

    def content_hash(self) -> str:
        import hashlib

        return hashlib.sha256(self.canonical_bytes()).hexdigest()


def _assemble_implicit(grid: Grid, A: MatrixField, dt: float) -> sp.csr_matrix:
    """Sparse matrix of (I - dt * div(A grad .)) in flux form.

    Must agree entry-for-entry with grid.div_a_grad so that direct solves,
    CG solves, and the weak-residual probe all speak about one operator.
    """
    size = grid.size
    idx = np.arange(size).reshape(grid.shape)
    c = dt / grid.dx**2
    i_flat = idx.ravel()
    rows = [i_flat]
    cols = [i_flat]
    vals = [np.ones(size)]
    for axis in range(grid.n):
        face = _face_coefficients(A.diag[axis], axis).ravel()
        right = np.roll(idx, -1, axis=axis).ravel()
        rows.extend([i_flat, right, i_flat, right])
        cols.extend([right, i_flat, i_flat, right])
        vals.extend([-c * face, -c * face, c * face, c * face])
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(size, size),
    )
    return mat.tocsr()


class _ImplicitSolver:
    """One epoch's implicit operator with a chosen backend."""

    def __init__(self, grid: Grid, A: MatrixField, dt: float, backend: str):
        self.grid = grid
        self.backend = backend
        self.matrix = _assemble_implicit(grid, A, dt)
        if backend == "lu":
            self._lu = spla.splu(self.matrix.tocsc())
        elif backend == "cg":
            inv_diag = 1.0 / self.matrix.diagonal()
            self._precond = spla.LinearOperator(
                self.matrix.shape, matvec=lambda x: inv_diag * x
            )
        else:
            raise ValueError(f"unknown linear solver backend {backend!r}")

    def solve(self, rhs: np.ndarray, x0: np.ndarray) -> tuple[np.ndarray, int, float]:
        """Returns (solution, iterations, relative residual)."""
        b = rhs.ravel()
        b_norm = float(np.linalg.norm(b))
        if b_norm == 0.0:
            return np.zeros_like(rhs), 0, 0.0
        if self.backend == "lu":
            x = self._lu.solve(b)
            res = float(np.linalg.norm(b - self.matrix @ x)) / b_norm
            if res > CG_RTOL:
                raise LinearSolveError("direct solve residual too large", res, 1)
            return x.reshape(rhs.shape), 1, res
        count = [0]

        def cb(_):
            count[0] += 1

        maxiter = 10 * self.grid.size
        x, info = spla.cg(
            self.matrix,
            b,
            x0=x0.ravel(),
            rtol=CG_RTOL,
            atol=0.0,
            maxiter=maxiter,
            M=self._precond,
            callback=cb,
        )
        res = float(np.linalg.norm(b - self.matrix @ x)) / b_norm
        if info != 0:
            raise LinearSolveError("conjugate gradient did not converge", res, count[0])
        return x.reshape(rhs.shape), count[0], res


def _explicit_rhs(u: np.ndarray, A: MatrixField, nl: Nonlinearity, dW: np.ndarray, dt: float, grid: Grid) -> np.ndarray:
    f = nl.kappa[0] + nl.lam[0] * u
    g = nl.kappa[1:] + nl.lam[1:].reshape((nl.m,) + (1,) * grid.n) * u
    return u + dt * _div_a_grad_values(u, A.diag, grid.dx) + dt * f + np.tensordot(dW, g, axes=(0, 0))


def step(
    u_m: Field,
    A_m: MatrixField | None,
    nl: Nonlinearity,
    dW: np.ndarray,
    dt: float,
    scheme: str = "semi_implicit",
    backend: str = "lu",
) -> Field:
    """Advance one step.  A_m = None drops the diffusion term entirely.

    Standalone entry point for tests and experiments; `solve` uses the same
    arithmetic but reuses the factorized operator across an epoch.
    """
    dW = np.asarray(dW, dtype=float)
    if dW.shape != (nl.m,):
        raise ValueError(f"need one increment per mode, got shape {dW.shape}")
    grid = u_m.grid
    u = u_m.values
    if A_m is None:
        f = eval_drift(nl, u_m).values
        g = noise_amplitudes(nl, u_m)
        out = u + dt * f + np.tensordot(dW, g, axes=(0, 0))
        return Field(grid, out)
    if scheme == "explicit":
        return Field(grid, _explicit_rhs(u, A_m, nl, dW, dt, grid))
    if scheme != "semi_implicit":
        raise ValueError(f"unknown scheme {scheme!r}")
    f = eval_drift(nl, u_m).values
    g = noise_amplitudes(nl, u_m)
    rhs = u + dt * f + np.tensordot(dW, g, axes=(0, 0))
    solver = _ImplicitSolver(grid, A_m, dt, backend)
    x, _, _ = solver.solve(rhs, u)
    out = Field(grid, x)
    if not out.is_finite():
        raise FloatingPointError("step produced non-finite values")
    return out


def _align_noise(ps: ProblemSpec, path: NoisePath) -> NoisePath:
    """Coarsen the noise to the solver step, validating compatibility."""
    if abs(path.t0) > 1e-12:
        raise ValueError(f"noise path must start at t=0, got t0={path.t0}")
    if path.t1 < ps.t_end - 1e-12:
        raise ValueError(f"noise path ends at {path.t1}, before t_end={ps.t_end}")
    ratio = ps.dt / path.dt_fine
    factor = int(round(ratio))
    if abs(ratio - factor) > 1e-9 or factor < 1:
        raise ValueError(
            f"solver step {ps.dt} is not an integer multiple of noise step {path.dt_fine}"
        )
    return coarsen(path, factor)


def solve(
    ps: ProblemSpec,
    path: NoisePath,
    linear_solver: str = "auto",
    snapshot_file=None,
    snapshot_stride: int = 1,
) -> SolveReport:
    """Run the scheme over [0, t_end] with per-epoch coefficient resampling.

    The coefficient stream is keyed by the (run_seed, path_index) recorded
    in the noise path, so a (ProblemSpec, NoisePath) pair pins the entire
    solve; identical inputs give byte-identical reports regardless of how
    many sibling paths run, or on how many workers.
    """
    if linear_solver == "auto":
        linear_solver = "lu"
    if linear_solver not in ("lu", "cg"):
        raise ValueError(f"unknown linear solver {linear_solver!r}")
    t_start = time.perf_counter()
    aligned = _align_noise(ps, path)
    run_seed, path_index = int(path.seed_key[0]), int(path.seed_key[1])
    grid = ps.grid
    steps = ps.steps
    values = np.empty((steps + 1,) + grid.shape)
    values[0] = ps.u0.values
    iterations = np.zeros(steps, dtype=np.int64)
    residuals = np.zeros(steps)

    kappa0, lam0 = ps.nl.kappa[0], ps.nl.lam[0]
    kappa_g = ps.nl.kappa[1:]
    lam_g = ps.nl.lam[1:].reshape((ps.nl.m,) + (1,) * grid.n)
    inc = aligned.increments

    implicit = ps.scheme == "semi_implicit"
    current_epoch = -1
    op = None
    A = None
    for m in range(steps):
        epoch = ps.epoch_of_step(m)
        if epoch != current_epoch:
            A = sample_coefficient(ps.ell, grid, run_seed, path_index, epoch)
            rep = validate_ellipticity(A, ps.ell.lam)
            if not rep.passed:
                raise RuntimeError(
                    f"sampled coefficient violates ellipticity: {rep.worst_low}..{rep.worst_high}"
                )
            if implicit:
                op = _ImplicitSolver(grid, A, ps.dt, linear_solver)
            current_epoch = epoch
        u = values[m]
        dW = inc[:, m]
        if implicit:
            rhs = u + ps.dt * (kappa0 + lam0 * u) + np.tensordot(dW, kappa_g + lam_g * u, axes=(0, 0))
            x, its, res = op.solve(rhs, u)
            values[m + 1] = x
            iterations[m] = its
            residuals[m] = res
        else:
            values[m + 1] = _explicit_rhs(u, A, ps.nl, dW, ps.dt, grid)
    if not np.isfinite(values).all():
        raise FloatingPointError("solve produced non-finite values")
    traj = Trajectory(grid, t0=0.0, t1=ps.t_end, dt=ps.dt, values=values, copy=False)
    report = SolveReport(
        trajectory=traj,
        iterations=iterations,
        residuals=residuals,
        wall_time=time.perf_counter() - t_start,
        scheme=ps.scheme,
        linear_solver=linear_solver if implicit else "none",
        seed_key=path.seed_key,
    )
    if snapshot_file is not None:
        write_trajectory(snapshot_file, traj, stride=snapshot_stride)
    return report


def weak_residual(
    traj: Trajectory,
    ell: EllipticitySpec,
    nl: Nonlinearity,
    path: NoisePath,
    phi: Field,
    interval=(None, None),
) -> float:
    """Relative weak-form defect of a trajectory against a test field.

    Accumulates, over the steps inside the interval,

        <u^{m+1} - u^m, phi> + dt a(u^{m+1}, phi; A_m)
            - dt <f(u^m), phi> - sum_i <g_i(u^m), phi> dW^i_m

    with the same epoch fields, quadrature, and endpoint conventions the
    scheme itself uses, then divides by the accumulated size of the terms.
    For a trajectory produced by `solve` this is an algebraic identity up
    to linear-solver residuals, so values above ~1e-8 expose corrupted
    data, mismatched noise, or mismatched coefficient streams.
    """
    if phi.grid != traj.grid:
        raise ValueError("test field lives on a different grid")
    lo = traj.t0 if interval[0] is None else interval[0]
    hi = traj.t1 if interval[1] is None else interval[1]
    i0, i1 = time_window(traj, (lo, hi))
    if i1 <= i0:
        return 0.0
    run_seed, path_index = int(path.seed_key[0]), int(path.seed_key[1])
    factor = int(round(traj.dt / path.dt_fine))
    aligned = coarsen(path, factor)
    total = 0.0
    scale = 0.0
    A = None
    current_epoch = -1
    for m in range(i0, i1):
        epoch = int(np.floor(m * traj.dt / ell.epoch_dt + 1e-9))
        if epoch != current_epoch:
            A = sample_coefficient(ell, traj.grid, run_seed, path_index, epoch)
            current_epoch = epoch
        u_m = traj.snapshot(m)
        u_next = traj.snapshot(m + 1)
        dW = aligned.increments[:, m]
        incr = inner(u_next, phi) - inner(u_m, phi)
        diffusion = traj.dt * a_grad_pairing(u_next, phi, A)
        drift = traj.dt * inner(eval_drift(nl, u_m), phi)
        g = noise_amplitudes(nl, u_m)
        g_pair = inner(Field(traj.grid, np.tensordot(dW, g, axes=(0, 0))), phi)
        total += incr + diffusion - drift - g_pair
        scale += abs(incr) + abs(diffusion) + abs(drift) + abs(g_pair)
    if scale == 0.0:
        return 0.0
    return abs(total) / scale


@dataclass(frozen=True)
class CompanionSplit:
    """The linear-noise part v and the remainder phi = u - v."""

    v: Trajectory
    phi: Trajectory


def solve_companion(traj: Trajectory, nl: Nonlinearity, path: NoisePath, t_start: float = 0.5) -> CompanionSplit:
    """Split u = phi + v, where v carries the noise through a plain heat flow.

    v starts from zero at t_start and obeys dv = (Laplacian v) dt +
    sum_i g_i(u^m) dW^i_m with the same increments and the same explicit
    evaluation on u that produced the trajectory; phi = u - v is exact at
    every node by construction.  The constant-coefficient operator is
    factorized once and reused for every step.
    """
    grid = traj.grid
    if nl.grid != grid:
        raise ValueError("nonlinearity lives on a different grid")
    if not (traj.t0 <= t_start < traj.t1):
        raise ValueError(f"t_start={t_start} outside trajectory window [{traj.t0}, {traj.t1}]")
    i0 = traj.index_of(t_start)
    factor = int(round(traj.dt / path.dt_fine))
    aligned = coarsen(path, factor)
    steps = traj.n_snapshots - 1 - i0
    v = np.zeros((steps + 1,) + grid.shape)
    identity_A = MatrixField.identity(grid)
    op = _ImplicitSolver(grid, identity_A, traj.dt, "lu")
    kappa_g = nl.kappa[1:]
    lam_g = nl.lam[1:].reshape((nl.m,) + (1,) * grid.n)
    for j in range(steps):
        m = i0 + j
        u_m = traj.values[m]
        dW = aligned.increments[:, m]
        rhs = v[j] + np.tensordot(dW, kappa_g + lam_g * u_m, axes=(0, 0))
        v[j + 1], _, _ = op.solve(rhs, v[j])
    phi = traj.values[i0:] - v
    t0 = traj.t0 + i0 * traj.dt
    v_traj = Trajectory(grid, t0=t0, t1=traj.t1, dt=traj.dt, values=v, copy=False)
    phi_traj = Trajectory(grid, t0=t0, t1=traj.t1, dt=traj.dt, values=phi, copy=False)
    return CompanionSplit(v=v_traj, phi=phi_traj)
