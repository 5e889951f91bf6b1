"""Grid, field, norm, and divergence-stencil tests.

Oracle values are frozen here, computed independently of the implementation:
half-indicator L2 norm sqrt(0.5), constant mixed norm c*2^(1/4), the
linear-in-time trapezoid quadrature, and the discrete Fourier eigenvalue of
the flux-form Laplacian.
"""

import io
import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spde_lab.grid import (
    Field,
    Grid,
    MatrixField,
    Trajectory,
    a_grad_pairing,
    div_a_grad,
    inner,
    lp_norm,
    mixed_norm,
    read_snapshot,
    read_trajectory,
    time_window,
    write_snapshot,
    write_trajectory,
)

# frozen oracles
SQRT_HALF = 0.7071067811865476  # sqrt(1/2)
CONST_MIXED_42 = 3.5676213450081633  # 3 * 2^(1/4)
FIFTH_ROOT = 0.6687403049764221  # 5^(-1/4) = (integral of t^4 on [0,1])^(1/4)


def const_traj(grid, c, t0=0.0, t1=2.0, dt=0.01):
    n = int(round((t1 - t0) / dt)) + 1
    vals = np.full((n,) + grid.shape, float(c))
    return Trajectory(grid, t0, t1, dt, vals, copy=False)


class TestGrid:
    def test_measure_exact(self):
        g = Grid(n=2, L=2.0, N=16)
        assert g.N**g.n * g.cell_volume == pytest.approx(g.L**g.n, rel=0, abs=1e-14)

    def test_bad_dimension(self):
        with pytest.raises(ValueError):
            Grid(n=4, L=1.0, N=8)

    def test_bad_sizes(self):
        with pytest.raises(ValueError):
            Grid(n=1, L=-1.0, N=8)
        with pytest.raises(ValueError):
            Grid(n=1, L=1.0, N=1)


class TestField:
    def test_shape_mismatch(self):
        g = Grid(n=2, L=1.0, N=4)
        with pytest.raises(ValueError):
            Field(g, np.zeros(4))

    def test_immutable(self):
        g = Grid(n=1, L=1.0, N=4)
        f = Field(g, np.arange(4.0))
        with pytest.raises(AttributeError):
            f.values = np.zeros(4)
        with pytest.raises(ValueError):
            f.values[0] = 7.0


class TestLpNorm:
    def test_constant_all_p(self):
        g = Grid(n=1, L=1.0, N=32)
        f = Field.full(g, -2.5)
        for p in (0.5, 1.0, 2.0, 4.0, np.inf):
            assert lp_norm(f, p) == pytest.approx(2.5, rel=1e-14)

    def test_zero(self):
        g = Grid(n=2, L=3.0, N=8)
        assert lp_norm(Field.zeros(g), 2.0) == 0.0
        assert lp_norm(Field.zeros(g), np.inf) == 0.0

    def test_half_indicator(self):
        # N even, half the nodes set to 1: (dx * N/2)^(1/2) = sqrt(0.5)
        g = Grid(n=1, L=1.0, N=64)
        v = np.zeros(64)
        v[::2] = 1.0
        assert lp_norm(Field(g, v), 2.0) == pytest.approx(SQRT_HALF, rel=1e-15)

    def test_nonfinite_rejected(self):
        g = Grid(n=1, L=1.0, N=4)
        f = Field(g, [0.0, 1.0, np.nan, 0.0])
        with pytest.raises(FloatingPointError):
            lp_norm(f, 2.0)

    def test_bad_p(self):
        g = Grid(n=1, L=1.0, N=4)
        with pytest.raises(ValueError):
            lp_norm(Field.zeros(g), 0.0)

    @given(c=st.floats(-1e3, 1e3), p=st.sampled_from([0.5, 1.0, 2.0, 3.0, np.inf]))
    @settings(max_examples=40, deadline=None)
    def test_homogeneous(self, c, p):
        g = Grid(n=1, L=1.0, N=16)
        rng = np.random.default_rng(7)
        base = rng.normal(size=16)
        n1 = lp_norm(Field(g, c * base), p)
        n0 = lp_norm(Field(g, base), p)
        assert n1 == pytest.approx(abs(c) * n0, rel=1e-12, abs=1e-12)

    def test_monotone_in_domination(self):
        g = Grid(n=1, L=1.0, N=32)
        rng = np.random.default_rng(3)
        f = np.abs(rng.normal(size=32))
        h = f * rng.uniform(0.0, 1.0, size=32)
        for p in (1.0, 2.0, np.inf):
            assert lp_norm(Field(g, f), p) >= lp_norm(Field(g, h), p)


class TestMixedNorm:
    def test_constant(self):
        g = Grid(n=1, L=1.0, N=8)
        u = const_traj(g, 3.0, 0.0, 2.0, 0.01)
        assert mixed_norm(u, 4.0, 2.0, (0.0, 2.0)) == pytest.approx(CONST_MIXED_42, rel=1e-13)

    def test_zero(self):
        g = Grid(n=1, L=1.0, N=8)
        u = const_traj(g, 0.0)
        assert mixed_norm(u, 4.0, 2.0, (0.0, 2.0)) == 0.0

    def test_linear_in_time_quadrature(self):
        # u(t,x) = t: spatial L2 norm is t, trapezoid of t^4 on [0,1].
        g = Grid(n=1, L=1.0, N=8)
        dt = 0.01
        times = np.arange(0.0, 1.0 + dt / 2, dt)
        vals = np.tile(times[:, None], (1, 8))
        u = Trajectory(g, 0.0, 1.0, dt, vals, copy=False)
        got = mixed_norm(u, 4.0, 2.0, (0.0, 1.0))
        # independent trapezoid oracle
        w = np.full(len(times), dt)
        w[0] = w[-1] = dt / 2
        oracle = float(np.dot(w, times**4) ** 0.25)
        assert got == pytest.approx(oracle, rel=1e-14)
        assert abs(got - FIFTH_ROOT) <= dt**2  # O(dt^2) from the exact integral

    def test_sup_sup(self):
        g = Grid(n=1, L=1.0, N=8)
        vals = np.zeros((101, 8))
        vals[37, 5] = -9.0
        u = Trajectory(g, 0.0, 1.0, 0.01, vals, copy=False)
        assert mixed_norm(u, np.inf, np.inf, (0.0, 1.0)) == 9.0

    def test_constant_in_time_reduction(self):
        g = Grid(n=1, L=1.0, N=16)
        rng = np.random.default_rng(11)
        snap = rng.normal(size=16)
        dt = 0.01
        n = 201
        u = Trajectory(g, 0.0, 2.0, dt, np.tile(snap, (n, 1)), copy=False)
        i0, i1 = time_window(u, (0.5, 2.0))
        length = (i1 - i0) * dt
        expect = length ** (1 / 4.0) * lp_norm(Field(g, snap), 2.0)
        assert mixed_norm(u, 4.0, 2.0, (0.5, 2.0)) == pytest.approx(expect, rel=1e-14)

    def test_empty_interval_errors(self):
        g = Grid(n=1, L=1.0, N=8)
        u = const_traj(g, 1.0, 0.0, 1.0, 0.01)
        with pytest.raises(ValueError):
            mixed_norm(u, 4.0, 2.0, (2.0, 3.0))

    def test_endpoint_snapping(self):
        g = Grid(n=1, L=1.0, N=8)
        u = const_traj(g, 1.0, 0.0, 1.0, 0.01)
        # endpoints within dt/2 of nodes snap rather than raise
        v1 = mixed_norm(u, 4.0, 2.0, (0.0, 1.0))
        v2 = mixed_norm(u, 4.0, 2.0, (0.004, 0.996))
        assert v1 == pytest.approx(v2, rel=1e-12)


class TestDivAGrad:
    def test_constant_is_zero(self):
        g = Grid(n=2, L=1.0, N=16)
        A = MatrixField.identity(g)
        out = div_a_grad(Field.full(g, 4.0), A)
        assert np.all(out.values == 0.0)

    def test_sine_laplacian(self):
        g = Grid(n=1, L=1.0, N=64)
        x = g.axis_coords()
        f = Field(g, np.sin(2 * np.pi * x))
        out = div_a_grad(f, MatrixField.identity(g))
        # exact discrete eigenvalue of the flux/difference stencil
        lam_disc = (2.0 / g.dx) ** 2 * math.sin(math.pi * g.dx) ** 2
        assert np.allclose(out.values, -lam_disc * f.values, rtol=1e-12, atol=1e-12)
        # consistency with the continuum eigenvalue
        rel = lp_norm(Field(g, out.values + (2 * np.pi) ** 2 * f.values), 2.0) / lp_norm(
            Field(g, (2 * np.pi) ** 2 * f.values), 2.0
        )
        assert rel <= (2 * np.pi * g.dx) ** 2

    @pytest.mark.parametrize("n,N", [(1, 64), (2, 16), (3, 8)])
    def test_summation_by_parts(self, n, N):
        rng = np.random.default_rng(5 + n)
        g = Grid(n=n, L=1.0, N=N)
        lam = 0.25
        diag = rng.uniform(lam, 1 / lam, size=(n,) + g.shape)
        A = MatrixField(g, diag)
        f = Field(g, rng.normal(size=g.shape))
        lhs = inner(div_a_grad(f, A), f)
        rhs = -a_grad_pairing(f, f, A)
        assert abs(lhs - rhs) <= 1e-12 * abs(rhs)

    def test_ellipticity_sandwich(self):
        # -<div(A grad f), f> between lam and 1/lam times the plain Dirichlet form
        rng = np.random.default_rng(17)
        g = Grid(n=1, L=1.0, N=64)
        lam = 0.25
        A = MatrixField(g, rng.uniform(lam, 1 / lam, size=(1,) + g.shape))
        f = Field(g, rng.normal(size=g.shape))
        dirichlet = a_grad_pairing(f, f, MatrixField.identity(g))
        energy = -inner(div_a_grad(f, A), f)
        assert lam * dirichlet * (1 - 1e-12) <= energy <= (1 / lam) * dirichlet * (1 + 1e-12)

    def test_grid_mismatch(self):
        g1 = Grid(n=1, L=1.0, N=8)
        g2 = Grid(n=1, L=1.0, N=16)
        with pytest.raises(ValueError):
            div_a_grad(Field.zeros(g1), MatrixField.identity(g2))


class TestInner:
    def test_zero(self):
        g = Grid(n=1, L=1.0, N=8)
        f = Field(g, np.arange(8.0))
        assert inner(f, Field.zeros(g)) == 0.0

    def test_unit_measure(self):
        g = Grid(n=1, L=1.0, N=32)
        one = Field.full(g, 1.0)
        assert inner(one, one) == pytest.approx(1.0, rel=1e-14)

    def test_orthogonal_modes(self):
        g = Grid(n=1, L=1.0, N=64)
        x = g.axis_coords()
        f = Field(g, np.sin(2 * np.pi * x))
        h = Field(g, np.sin(4 * np.pi * x))
        assert abs(inner(f, h)) <= 1e-12

    def test_norm_consistency(self):
        g = Grid(n=2, L=2.0, N=8)
        rng = np.random.default_rng(23)
        f = Field(g, rng.normal(size=g.shape))
        assert inner(f, f) == pytest.approx(lp_norm(f, 2.0) ** 2, rel=1e-13)

    def test_bilinear(self):
        g = Grid(n=1, L=1.0, N=16)
        rng = np.random.default_rng(29)
        f, h, k = (Field(g, rng.normal(size=16)) for _ in range(3))
        lhs = inner(Field(g, 2.0 * f.values + h.values), k)
        assert lhs == pytest.approx(2 * inner(f, k) + inner(h, k), rel=1e-12, abs=1e-14)


class TestShiftInvariance:
    def test_exact_on_dyadic_values(self):
        # integer-valued fields sum exactly in any order, so equality is bitwise
        g = Grid(n=2, L=1.0, N=8)
        rng = np.random.default_rng(31)
        v = rng.integers(-8, 9, size=g.shape).astype(float)
        for shift in ((1, 0), (0, 3), (5, 2)):
            w = np.roll(v, shift, axis=(0, 1))
            for p in (1.0, 2.0, np.inf):
                assert lp_norm(Field(g, v), p) == lp_norm(Field(g, w), p)

    def test_close_on_general_values(self):
        g = Grid(n=1, L=1.0, N=64)
        rng = np.random.default_rng(37)
        v = rng.normal(size=64)
        a = lp_norm(Field(g, v), 2.0)
        b = lp_norm(Field(g, np.roll(v, 11)), 2.0)
        assert a == pytest.approx(b, rel=1e-14)


class TestTrajectory:
    def test_snapshot_count_validation(self):
        g = Grid(n=1, L=1.0, N=4)
        with pytest.raises(ValueError):
            Trajectory(g, 0.0, 1.0, 0.1, np.zeros((5, 4)))

    def test_non_integer_steps(self):
        g = Grid(n=1, L=1.0, N=4)
        with pytest.raises(ValueError):
            Trajectory(g, 0.0, 1.0, 0.3, np.zeros((4, 4)))

    def test_time_window_snaps(self):
        g = Grid(n=1, L=1.0, N=4)
        u = const_traj(g, 1.0, 0.0, 2.0, 0.1)
        assert time_window(u, (0.5, 2.0)) == (5, 20)
        assert time_window(u, (0.5004, 1.9996)) == (5, 20)

    def test_index_of_off_node(self):
        g = Grid(n=1, L=1.0, N=4)
        u = const_traj(g, 1.0, 0.0, 2.0, 0.1)
        with pytest.raises(ValueError):
            u.index_of(2.5)


class TestSnapshotIO:
    def test_header_layout_frozen(self):
        g = Grid(n=1, L=1.0, N=4)
        f = Field(g, np.arange(4.0))
        buf = io.BytesIO()
        write_snapshot(buf, f, 0.5)
        expect = (
            b"SPDE"
            + bytes([1, 1])
            + (4).to_bytes(4, "little")
            + struct.pack("<d", 1.0)
            + struct.pack("<d", 0.5)
            + np.arange(4.0).astype("<f8").tobytes()
        )
        assert buf.getvalue() == expect

    def test_round_trip(self):
        g = Grid(n=2, L=2.5, N=8)
        rng = np.random.default_rng(41)
        f = Field(g, rng.normal(size=g.shape))
        buf = io.BytesIO()
        write_snapshot(buf, f, 1.25)
        buf.seek(0)
        f2, t = read_snapshot(buf)
        assert t == 1.25
        assert f2.grid == g
        assert np.array_equal(f2.values, f.values)

    def test_trajectory_round_trip(self):
        g = Grid(n=1, L=1.0, N=8)
        rng = np.random.default_rng(43)
        vals = rng.normal(size=(11, 8))
        u = Trajectory(g, 0.0, 1.0, 0.1, vals)
        buf = io.BytesIO()
        write_trajectory(buf, u)
        buf.seek(0)
        u2 = read_trajectory(buf)
        assert np.array_equal(u2.values, u.values)
        assert u2.dt == pytest.approx(u.dt, rel=1e-12)

    def test_bad_magic(self):
        buf = io.BytesIO(b"XXXX" + bytes(30))
        with pytest.raises(ValueError):
            read_snapshot(buf)

    def test_truncated_payload(self):
        g = Grid(n=1, L=1.0, N=8)
        buf = io.BytesIO()
        write_snapshot(buf, Field.zeros(g), 0.0)
        raw = buf.getvalue()[:-8]
        with pytest.raises(ValueError):
            read_snapshot(io.BytesIO(raw))
