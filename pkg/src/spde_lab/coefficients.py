"""Rough coefficient fields, growth envelopes, and affine nonlinearities.

The diffusion matrix is diagonal, piecewise constant on a space-time
checkerboard: entries are redrawn independently per epoch, per patch, per
axis, uniformly from [lam, 1/lam].  No smoothness in space or time is ever
assumed anywhere downstream; only the two-sided ellipticity bound

    lam <= A_jj(t, x) <= 1/lam

is guaranteed, and `validate_ellipticity` checks it after the fact.

Drift and noise amplitudes are affine in the solution,

    f(t, x, u)   = kappa_0(x) + lambda_0 * u
    g_i(t, x, u) = kappa_i(x) + lambda_i * u,    1 <= i <= m,

with offsets and slopes budgeted pointwise against a growth envelope
(K, Lambda):

    |kappa_0(x)| + (sum_i kappa_i(x)^2)^(1/2) <= K(x)
    |lambda_0|  + (sum_i lambda_i^2)^(1/2)    <= Lambda.

These imply the linear-growth bound |f| + |g|_{l2} <= K + Lambda|u| that
every estimate downstream consumes; `validate_growth` spot-checks it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Field, Grid, MatrixField, lp_norm
from .noise import stream_generator

__all__ = [
    "EllipticitySpec",
    "EllipticityReport",
    "sample_coefficient",
    "validate_ellipticity",
    "GrowthData",
    "bump_profile",
    "make_growth_data",
    "Nonlinearity",
    "zero_nonlinearity",
    "make_nonlinearity",
    "eval_drift",
    "eval_noise",
    "noise_amplitudes",
    "GrowthReport",
    "validate_growth",
    "make_initial_datum",
]


@dataclass(frozen=True)
class EllipticitySpec:
    """How to draw the checkerboard diffusion field.

    lam: ellipticity constant in (0, 1]; entries live in [lam, 1/lam].
    epoch_dt: how long one draw stays in force before resampling.
    cell: patch edge length in grid nodes; must divide N.
    """

    lam: float
    epoch_dt: float
    cell: int = 4

    def __post_init__(self):
        if not (0.0 < self.lam <= 1.0):
            raise ValueError(f"lam must be in (0, 1], got {self.lam}")
        if not (self.epoch_dt > 0):
            raise ValueError(f"epoch_dt must be positive, got {self.epoch_dt}")
        if self.cell < 1:
            raise ValueError(f"cell must be >= 1, got {self.cell}")


def sample_coefficient(
    spec: EllipticitySpec, grid: Grid, run_seed: int, path_index: int, epoch: int
) -> MatrixField:
    """Draw the diagonal diffusion field for one epoch of one path.

    The draw is a pure function of (run_seed, path_index, epoch): the field
    for epoch e never depends on which other epochs have been sampled, so
    the coefficient process is adapted by construction (epoch e is fixed
    before the noise on that epoch is revealed).
    """
    if grid.N % spec.cell != 0:
        raise ValueError(f"cell={spec.cell} does not divide N={grid.N}")
    shape = (grid.n,) + grid.shape
    if spec.lam == 1.0:
        return MatrixField(grid, np.ones(shape))
    rng = stream_generator(run_seed, "coefficient", path_index, extra=(epoch,))
    patches = grid.N // spec.cell
    draws = rng.uniform(spec.lam, 1.0 / spec.lam, size=(grid.n,) + (patches,) * grid.n)
    diag = draws
    for axis in range(1, grid.n + 1):
        diag = np.repeat(diag, spec.cell, axis=axis)
    return MatrixField(grid, diag)


@dataclass(frozen=True)
class EllipticityReport:
    passed: bool
    worst_low: float
    worst_high: float
    lam: float


def validate_ellipticity(A: MatrixField, lam: float, tol: float = 1e-12) -> EllipticityReport:
    """Check lam <= entries <= 1/lam, allowing tol of rounding slack."""
    lo = float(A.diag.min())
    hi = float(A.diag.max())
    ok = (lo >= lam - tol) and (hi <= 1.0 / lam + tol)
    return EllipticityReport(passed=ok, worst_low=lo, worst_high=hi, lam=lam)


class GrowthData:
    """Growth envelope (K, Lambda): K a nonnegative field, Lambda >= 1."""

    __slots__ = ("K", "Lambda", "_norm2", "_norminf")

    def __init__(self, K: Field, Lambda: float):
        if float(Lambda) < 1.0:
            raise ValueError(f"Lambda must be >= 1, got {Lambda}")
        if not K.is_finite():
            raise FloatingPointError("K contains non-finite values")
        if K.values.min() < 0:
            raise ValueError("K must be nonnegative")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "Lambda", float(Lambda))
        object.__setattr__(self, "_norm2", lp_norm(K, 2))
        object.__setattr__(self, "_norminf", lp_norm(K, np.inf))

    def __setattr__(self, name, value):
        raise AttributeError("GrowthData is immutable")

    @property
    def norm_2(self) -> float:
        return self._norm2

    @property
    def norm_inf(self) -> float:
        return self._norminf

    @property
    def data_size(self) -> float:
        """The combined size ||K||_2 + ||K||_inf that scalings refer to."""
        return self._norm2 + self._norminf


def bump_profile(grid: Grid, radius: float | None = None) -> Field:
    """Tent profile max(0, 1 - |x - center| / radius), Euclidean distance.

    Lipschitz but not differentiable at the center and at the rim; default
    radius L/4 keeps the support well inside the periodic cell.
    """
    r = grid.L / 4.0 if radius is None else float(radius)
    if not (0 < r <= grid.L / 2):
        raise ValueError(f"radius must be in (0, L/2], got {r}")
    center = grid.L / 2.0
    d = grid.axis_coords() - center
    dist_sq = np.zeros(grid.shape)
    for axis in range(grid.n):
        shape = [1] * grid.n
        shape[axis] = grid.N
        dist_sq = dist_sq + (d.reshape(shape)) ** 2
    profile = np.maximum(0.0, 1.0 - np.sqrt(dist_sq) / r)
    return Field(grid, profile)


def make_growth_data(
    grid: Grid, Lambda: float = 1.0, budget: float = 1.0, radius: float | None = None
) -> GrowthData:
    """Bump-shaped K scaled so that ||K||_2 + ||K||_inf equals budget."""
    if not (budget > 0):
        raise ValueError(f"budget must be positive, got {budget}")
    bump = bump_profile(grid, radius)
    size = lp_norm(bump, 2) + lp_norm(bump, np.inf)
    return GrowthData(Field(grid, bump.values * (budget / size)), Lambda)


class Nonlinearity:
    """Affine drift and noise amplitudes with m noise modes.

    kappa has shape (m+1,) + grid.shape: row 0 is the drift offset, rows
    1..m the noise offsets.  lam has shape (m+1,): slope 0 for the drift,
    slopes 1..m for the noise.
    """

    __slots__ = ("grid", "m", "kappa", "lam")

    def __init__(self, grid: Grid, kappa: np.ndarray, lam: np.ndarray):
        kappa = np.asarray(kappa, dtype=float)
        lam = np.asarray(lam, dtype=float)
        if kappa.ndim != grid.n + 1 or kappa.shape[1:] != grid.shape or kappa.shape[0] < 2:
            raise ValueError(f"kappa shape {kappa.shape} incompatible with grid {grid.shape}")
        m = kappa.shape[0] - 1
        if lam.shape != (m + 1,):
            raise ValueError(f"lam shape {lam.shape} != ({m + 1},)")
        if not (np.isfinite(kappa).all() and np.isfinite(lam).all()):
            raise FloatingPointError("non-finite nonlinearity data")
        kappa.flags.writeable = False
        lam.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "lam", lam)

    def __setattr__(self, name, value):
        raise AttributeError("Nonlinearity is immutable")

    def offset_size(self) -> np.ndarray:
        """Pointwise |kappa_0| + l2(kappa_1..m), the field K must dominate."""
        return np.abs(self.kappa[0]) + np.sqrt((self.kappa[1:] ** 2).sum(axis=0))

    def slope_size(self) -> float:
        """|lambda_0| + l2(lambda_1..m), the scalar Lambda must dominate."""
        return float(np.abs(self.lam[0]) + np.sqrt((self.lam[1:] ** 2).sum()))


def zero_nonlinearity(grid: Grid, m: int = 1) -> Nonlinearity:
    """f = 0 and g_i = 0: the plain divergence-form equation."""
    return Nonlinearity(grid, np.zeros((m + 1,) + grid.shape), np.zeros(m + 1))


def make_nonlinearity(
    grid: Grid,
    gd: GrowthData,
    m: int,
    run_seed: int,
    offset_frac: float = 0.8,
    slope_frac: float = 0.5,
    cell: int = 4,
) -> Nonlinearity:
    """Random rough nonlinearity using a stated fraction of the budget.

    Offsets are piecewise-constant sign-varying fields (patch size `cell`)
    normalized pointwise so that |kappa_0| + l2(kappa_i) = offset_frac * K
    exactly; slopes likewise use slope_frac * Lambda.  Fractions at most 1
    keep the growth budget satisfied with margin 1 - frac.
    """
    if not (0 <= offset_frac <= 1 and 0 <= slope_frac <= 1):
        raise ValueError("fractions must lie in [0, 1]")
    if m < 1:
        raise ValueError(f"need at least one noise mode, got m={m}")
    if grid.N % cell != 0:
        raise ValueError(f"cell={cell} does not divide N={grid.N}")
    rng = stream_generator(run_seed, "nonlinearity", 0)
    patches = grid.N // cell
    raw = rng.uniform(-1.0, 1.0, size=(m + 1,) + (patches,) * grid.n)
    for axis in range(1, grid.n + 1):
        raw = np.repeat(raw, cell, axis=axis)
    size = np.abs(raw[0]) + np.sqrt((raw[1:] ** 2).sum(axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(size > 0, offset_frac * gd.K.values / size, 0.0)
    kappa = raw * scale

    v = rng.uniform(-1.0, 1.0, size=m + 1)
    t = np.abs(v[0]) + np.sqrt((v[1:] ** 2).sum())
    lam = v * (slope_frac * gd.Lambda / t) if t > 0 else np.zeros(m + 1)
    return Nonlinearity(grid, kappa, lam)


def eval_drift(nl: Nonlinearity, u: Field) -> Field:
    """f(u) = kappa_0 + lambda_0 * u."""
    if u.grid != nl.grid:
        raise ValueError("grid mismatch")
    return Field(nl.grid, nl.kappa[0] + nl.lam[0] * u.values)


def eval_noise(nl: Nonlinearity, u: Field, i: int) -> Field:
    """g_i(u) = kappa_i + lambda_i * u for a mode index 1 <= i <= m."""
    if u.grid != nl.grid:
        raise ValueError("grid mismatch")
    if not (1 <= i <= nl.m):
        raise ValueError(f"mode index {i} outside 1..{nl.m}")
    return Field(nl.grid, nl.kappa[i] + nl.lam[i] * u.values)


def noise_amplitudes(nl: Nonlinearity, u: Field) -> np.ndarray:
    """All g_i(u) stacked, shape (m,) + grid.shape.  Hot path for solvers."""
    slopes = nl.lam[1:].reshape((nl.m,) + (1,) * nl.grid.n)
    return nl.kappa[1:] + slopes * u.values


@dataclass(frozen=True)
class GrowthReport:
    passed: bool
    worst_violation: float
    probes: tuple


def validate_growth(nl: Nonlinearity, gd: GrowthData, probes=(-10.0, -1.0, 0.0, 1.0, 10.0)) -> GrowthReport:
    """Spot-check |f(u)| + |g(u)|_{l2} <= K + Lambda|u| on constant probes.

    For affine data the bound at arbitrary u follows from the budget, so
    constant probes with a rounding tolerance are a genuine certificate.
    """
    worst = -np.inf
    for c in probes:
        u = Field.full(nl.grid, float(c))
        f = eval_drift(nl, u).values
        g2 = sum(eval_noise(nl, u, i).values ** 2 for i in range(1, nl.m + 1))
        lhs = np.abs(f) + np.sqrt(g2)
        rhs = gd.K.values + gd.Lambda * abs(c)
        worst = max(worst, float((lhs - rhs).max()))
    tol = 1e-12 * (1.0 + max(abs(float(c)) for c in probes)) * max(1.0, gd.Lambda)
    return GrowthReport(passed=worst <= tol, worst_violation=worst, probes=tuple(probes))


def make_initial_datum(grid: Grid, kind: str, size: float = 1.0, run_seed: int = 0) -> Field:
    """Initial data scaled to ||u0||_2 = size (except kind="zero").

    kinds: "zero"; "bump" (tent profile); "sine" (lowest mode, sign-changing);
    "rough" (independent +-1 per node, the roughest datum the scheme accepts).
    """
    if kind == "zero":
        return Field.zeros(grid)
    if kind == "bump":
        base = bump_profile(grid).values
    elif kind == "sine":
        wave = np.sin(2 * np.pi * grid.axis_coords() / grid.L)
        base = np.ones(grid.shape)
        for axis in range(grid.n):
            shape = [1] * grid.n
            shape[axis] = grid.N
            base = base * wave.reshape(shape)
    elif kind == "rough":
        rng = stream_generator(run_seed, "u0", 0)
        base = np.where(rng.uniform(size=grid.shape) < 0.5, -1.0, 1.0)
    else:
        raise ValueError(f"unknown initial datum kind {kind!r}")
    f = Field(grid, base)
    nrm = lp_norm(f, 2)
    if nrm == 0:
        raise ValueError(f"degenerate profile for kind {kind!r}")
    return Field(grid, base * (size / nrm))
