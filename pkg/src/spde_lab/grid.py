"""Periodic spatial grids, nodal fields, and the discrete calculus built on them.

Everything downstream (coefficient sampling, time stepping, level-set
diagnostics) works with the four types defined here:

* ``Grid``        - an n-dimensional periodic lattice, n in {1, 2, 3}.
* ``Field``       - one real value per node.
* ``MatrixField`` - a diagonal matrix per node (one entry per axis).
* ``Trajectory``  - a uniformly time-indexed stack of fields.

Spatial integrals use the node rule (each node carries volume dx^n), time
integrals use the trapezoid rule.  Both conventions are relied on by the
exact-identity checks in :mod:`spde_lab.verify`, so they must not change.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Grid",
    "Field",
    "MatrixField",
    "Trajectory",
    "lp_norm",
    "mixed_norm",
    "inner",
    "div_a_grad",
    "a_grad_pairing",
    "time_window",
    "write_snapshot",
    "read_snapshot",
    "write_trajectory",
    "read_trajectory",
]

SNAPSHOT_MAGIC = b"SPDE"
SNAPSHOT_VERSION = 1
# magic, version, n, N, L, t
_HEADER = struct.Struct("<4sBBIdd")


@dataclass(frozen=True)
class Grid:
    """Periodic lattice with N nodes per axis on a box of side L.

    Node j sits at x = j*dx with dx = L/N; index arithmetic wraps modulo N
    on every axis.  The total measure is N^n * dx^n = L^n exactly.
    """

    n: int
    L: float
    N: int

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise ValueError(f"spatial dimension must be 1, 2 or 3, got {self.n}")
        if not (self.L > 0):
            raise ValueError(f"period length must be positive, got {self.L}")
        if not (isinstance(self.N, (int, np.integer)) and self.N >= 2):
            raise ValueError(f"points per axis must be an integer >= 2, got {self.N}")

    @property
    def dx(self) -> float:
        return self.L / self.N

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.n

    @property
    def cell_volume(self) -> float:
        return self.dx**self.n

    @property
    def size(self) -> int:
        return self.N**self.n

    def axis_coords(self) -> np.ndarray:
        """Node coordinates along one axis (all axes are identical)."""
        return np.arange(self.N) * self.dx

    def coords(self) -> list:
        """Meshgrid of node coordinates, one array per axis (ij indexing)."""
        x = self.axis_coords()
        return list(np.meshgrid(*([x] * self.n), indexing="ij"))


def _as_values(grid: Grid, values, copy: bool) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != grid.shape:
        raise ValueError(f"values shape {arr.shape} does not match grid shape {grid.shape}")
    if copy:
        arr = arr.copy()
    arr.flags.writeable = False
    return arr


class Field:
    """Immutable scalar field: one float64 per grid node."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values, copy: bool = True):
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", _as_values(grid, values, copy))

    def __setattr__(self, name, value):
        raise AttributeError("Field is immutable")

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, np.zeros(grid.shape), copy=False)

    @classmethod
    def full(cls, grid: Grid, c: float) -> "Field":
        return cls(grid, np.full(grid.shape, float(c)), copy=False)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def __repr__(self):
        return f"Field(grid={self.grid}, min={self.values.min():.4g}, max={self.values.max():.4g})"


class MatrixField:
    """Immutable diagonal matrix field: one diagonal entry per axis per node.

    ``diag`` has shape (n,) + grid.shape; diag[d] is the coefficient used for
    fluxes along axis d.  Only diagonal matrices are supported; the spectrum
    constraint [lam, 1/lam] is checked by the coefficients module, not here.
    """

    __slots__ = ("grid", "diag")

    def __init__(self, grid: Grid, diag, copy: bool = True):
        arr = np.asarray(diag, dtype=np.float64)
        if arr.shape != (grid.n,) + grid.shape:
            raise ValueError(
                f"diag shape {arr.shape} does not match (n,)+grid shape {(grid.n,) + grid.shape}"
            )
        if copy:
            arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "diag", arr)

    def __setattr__(self, name, value):
        raise AttributeError("MatrixField is immutable")

    @classmethod
    def identity(cls, grid: Grid) -> "MatrixField":
        return cls(grid, np.ones((grid.n,) + grid.shape), copy=False)


class Trajectory:
    """Snapshots of a field on the uniform time grid t0, t0+dt, ..., t1.

    ``values`` has shape (n_snapshots,) + grid.shape and is immutable.  The
    snapshot count is round((t1-t0)/dt) + 1 and (t1-t0)/dt must be an integer
    to 1e-12 relative tolerance.
    """

    __slots__ = ("grid", "t0", "t1", "dt", "values")

    def __init__(self, grid: Grid, t0: float, t1: float, dt: float, values, copy: bool = True):
        if not (dt > 0):
            raise ValueError(f"dt must be positive, got {dt}")
        if not (t1 > t0):
            raise ValueError(f"need t1 > t0, got [{t0}, {t1}]")
        steps = (t1 - t0) / dt
        if abs(steps - round(steps)) > 1e-12 * max(1.0, abs(steps)):
            raise ValueError(f"(t1-t0)/dt = {steps} is not an integer")
        n_snaps = int(round(steps)) + 1
        arr = np.asarray(values, dtype=np.float64)
        if arr.shape != (n_snaps,) + grid.shape:
            raise ValueError(
                f"values shape {arr.shape}, expected {(n_snaps,) + grid.shape} "
                f"for {n_snaps} snapshots"
            )
        if copy:
            arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "t0", float(t0))
        object.__setattr__(self, "t1", float(t1))
        object.__setattr__(self, "dt", float(dt))
        object.__setattr__(self, "values", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Trajectory is immutable")

    @property
    def n_snapshots(self) -> int:
        return self.values.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_snapshots)

    def snapshot(self, i: int) -> Field:
        return Field(self.grid, self.values[i], copy=False)

    def index_of(self, t: float) -> int:
        """Nearest time node index; t must land within dt/2 of a node in span."""
        i = int(round((t - self.t0) / self.dt))
        if i < 0 or i >= self.n_snapshots:
            raise ValueError(f"time {t} outside trajectory span [{self.t0}, {self.t1}]")
        if abs(self.t0 + i * self.dt - t) > self.dt / 2 + 1e-12:
            raise ValueError(f"time {t} does not land on a node within dt/2")
        return i


def time_window(traj: Trajectory, interval) -> tuple:
    """Snap [s, e] to trajectory node indices (i0, i1), inclusive.

    Endpoints snap to the nearest node; an interval whose intersection with
    the trajectory span is empty raises ValueError.
    """
    s, e = float(interval[0]), float(interval[1])
    if e < s:
        raise ValueError(f"interval endpoints out of order: [{s}, {e}]")
    half = traj.dt / 2 + 1e-12
    if e < traj.t0 - half or s > traj.t1 + half:
        raise ValueError(
            f"interval [{s}, {e}] does not intersect trajectory span [{traj.t0}, {traj.t1}]"
        )
    i0 = max(0, int(round((s - traj.t0) / traj.dt)))
    i1 = min(traj.n_snapshots - 1, int(round((e - traj.t0) / traj.dt)))
    if i1 < i0:
        raise ValueError(f"interval [{s}, {e}] contains no time node")
    return i0, i1


def _trapezoid_weights(count: int, dt: float) -> np.ndarray:
    """Trapezoid quadrature weights for `count` uniformly spaced nodes."""
    if count == 1:
        return np.zeros(1)
    w = np.full(count, dt)
    w[0] = w[-1] = dt / 2
    return w


def _check_finite(values: np.ndarray, what: str):
    if not np.all(np.isfinite(values)):
        raise FloatingPointError(f"{what} contains non-finite values (corrupted state)")


def lp_norm(f: Field, p: float) -> float:
    """Discrete L^p norm (dx^n sum |f_j|^p)^(1/p); p = inf gives max |f_j|.

    Raises FloatingPointError on non-finite values and ValueError for p <= 0.
    """
    _check_finite(f.values, "field")
    if p == np.inf:
        return float(np.max(np.abs(f.values)))
    if not (p > 0):
        raise ValueError(f"p must be positive or inf, got {p}")
    av = np.abs(f.values)
    return float((f.grid.cell_volume * np.sum(av**p)) ** (1.0 / p))


def _spatial_norms(values: np.ndarray, grid: Grid, p: float) -> np.ndarray:
    """L^p norm of each snapshot of a (time, *space) stack, vectorized."""
    axes = tuple(range(1, values.ndim))
    if p == np.inf:
        return np.max(np.abs(values), axis=axes)
    return (grid.cell_volume * np.sum(np.abs(values) ** p, axis=axes)) ** (1.0 / p)


def mixed_norm(u: Trajectory, p1: float, p2: float, interval) -> float:
    """Space-time norm: L^{p1} in time over `interval` of the spatial L^{p2} norm.

    Time integration is trapezoid over the snapshots inside the interval
    (endpoints snapped to nodes); p1 = inf takes the max over snapshots.
    For constant-in-time data this reduces exactly to |I|^{1/p1} * lp_norm.
    """
    if not (p1 > 0 or p1 == np.inf):
        raise ValueError(f"p1 must be positive or inf, got {p1}")
    if not (p2 > 0 or p2 == np.inf):
        raise ValueError(f"p2 must be positive or inf, got {p2}")
    i0, i1 = time_window(u, interval)
    block = u.values[i0 : i1 + 1]
    _check_finite(block, "trajectory window")
    s = _spatial_norms(block, u.grid, p2)
    if p1 == np.inf:
        return float(np.max(s))
    w = _trapezoid_weights(len(s), u.dt)
    return float(np.dot(w, s**p1) ** (1.0 / p1))


def inner(f: Field, g: Field) -> float:
    """Quadrature inner product dx^n sum f_j g_j."""
    if f.grid != g.grid:
        raise ValueError("inner: fields live on different grids")
    return float(f.grid.cell_volume * np.dot(f.values.ravel(), g.values.ravel()))


def _face_coefficients(diag: np.ndarray, axis: int) -> np.ndarray:
    """Harmonic mean of adjacent diagonal entries along `axis`.

    Entry j is the coefficient on the face between nodes j and j+1 (wrapping).
    The harmonic mean keeps faces inside [lam, 1/lam] whenever nodes are.
    """
    a = diag
    b = np.roll(diag, -1, axis=axis)
    return 2.0 * a * b / (a + b)


def _div_a_grad_values(f: np.ndarray, diag: np.ndarray, dx: float) -> np.ndarray:
    """Conservative flux-form divergence on raw arrays (hot path)."""
    out = np.zeros_like(f)
    for axis in range(diag.shape[0]):
        face = _face_coefficients(diag[axis], axis)
        flux = face * (np.roll(f, -1, axis=axis) - f) / dx
        out += (flux - np.roll(flux, 1, axis=axis)) / dx
    return out


def div_a_grad(f: Field, A: MatrixField) -> Field:
    """Discrete div(A grad f): per-axis face fluxes with harmonic-mean averaging.

    Satisfies the summation-by-parts identity
    inner(div_a_grad(f, A), f) = -a_grad_pairing(f, f, A) exactly, which is
    what makes the energy identities downstream exact rather than approximate.
    """
    if f.grid != A.grid:
        raise ValueError("div_a_grad: field and coefficient live on different grids")
    out = _div_a_grad_values(f.values, A.diag, f.grid.dx)
    _check_finite(out, "div_a_grad output")
    return Field(f.grid, out, copy=False)


def _a_grad_pairing_values(f: np.ndarray, g: np.ndarray, diag: np.ndarray, dx: float, vol: float) -> float:
    total = 0.0
    for axis in range(diag.shape[0]):
        face = _face_coefficients(diag[axis], axis)
        df = (np.roll(f, -1, axis=axis) - f) / dx
        dg = (np.roll(g, -1, axis=axis) - g) / dx
        total += float(np.sum(face * df * dg)) * vol
    return total


def a_grad_pairing(f: Field, g: Field, A: MatrixField) -> float:
    """Face-quadrature form of <A grad f, grad g>: sum over axes and faces of
    A_face * (df/dx) * (dg/dx) * dx^n.  Nonnegative for f = g and elliptic A."""
    if not (f.grid == g.grid == A.grid):
        raise ValueError("a_grad_pairing: grid mismatch")
    return _a_grad_pairing_values(f.values, g.values, A.diag, f.grid.dx, f.grid.cell_volume)


# ---------------------------------------------------------------------------
# Binary snapshot format:
#   magic "SPDE" | version u8 | n u8 | N u32 | L f64 | t f64 | N^n f64 values
# little-endian throughout, values row-major with axis 0 slowest.
# ---------------------------------------------------------------------------


def write_snapshot(stream, field: Field, t: float):
    """Write one field snapshot in the binary interchange format."""
    g = field.grid
    stream.write(_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, g.n, g.N, g.L, float(t)))
    stream.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def read_snapshot(stream):
    """Read one snapshot; returns (Field, t).  Raises ValueError on bad header."""
    raw = stream.read(_HEADER.size)
    if len(raw) == 0:
        raise EOFError("no snapshot record")
    if len(raw) < _HEADER.size:
        raise ValueError("truncated snapshot header")
    magic, version, n, N, L, t = _HEADER.unpack(raw)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    grid = Grid(n=n, L=L, N=N)
    count = grid.size
    payload = stream.read(count * 8)
    if len(payload) < count * 8:
        raise ValueError("truncated snapshot payload")
    values = np.frombuffer(payload, dtype="<f8", count=count).reshape(grid.shape)
    return Field(grid, values), float(t)


def write_trajectory(stream, traj: Trajectory, stride: int = 1):
    """Write every stride-th snapshot as consecutive binary records."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    times = traj.times
    for i in range(0, traj.n_snapshots, stride):
        write_snapshot(stream, traj.snapshot(i), times[i])


def read_trajectory(stream) -> Trajectory:
    """Read consecutive snapshot records back into a Trajectory.

    All records must share a grid and be uniformly spaced in time.
    """
    fields = []
    times = []
    while True:
        try:
            f, t = read_snapshot(stream)
        except EOFError:
            break
        fields.append(f)
        times.append(t)
    if len(fields) < 2:
        raise ValueError("need at least two snapshots to form a trajectory")
    grid = fields[0].grid
    if any(f.grid != grid for f in fields):
        raise ValueError("snapshot records disagree on grid")
    dts = np.diff(times)
    dt = dts[0]
    if not np.allclose(dts, dt, rtol=1e-9, atol=0):
        raise ValueError("snapshot records are not uniformly spaced")
    values = np.stack([f.values for f in fields])
    return Trajectory(grid, times[0], times[-1], dt, values, copy=False)
