"""Truncation energies, Ito sums, level sets, and regularity fits."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spde_lab.coefficients import (
    EllipticitySpec,
    Nonlinearity,
    make_growth_data,
    make_initial_datum,
    make_nonlinearity,
    zero_nonlinearity,
)
from spde_lab.degiorgi import (
    AlphaFit,
    build_level_diagnostics,
    estimate_alpha,
    holder_seminorm,
    level_energy,
    level_interval,
    levelset_measure,
    martingale_stats,
    sup_norm,
    truncate,
    truncate_trajectory,
)
from spde_lab.grid import Field, Grid, Trajectory, lp_norm, mixed_norm
from spde_lab.noise import generate
from spde_lab.solver import ProblemSpec, solve

SQRT_24 = 4.898979485566356


def constant_trajectory(grid, value, dt=1.0 / 64, t_end=2.0):
    steps = int(round(t_end / dt))
    vals = np.full((steps + 1,) + grid.shape, float(value))
    return Trajectory(grid, 0.0, t_end, dt, vals)


def solved_run(N=64, run_seed=13, dt=2e-3, m=4):
    grid = Grid(n=1, L=1.0, N=N)
    ell = EllipticitySpec(lam=0.25, epoch_dt=0.25, cell=4)
    gd = make_growth_data(grid, Lambda=1.0)
    nl = make_nonlinearity(grid, gd, m=m, run_seed=run_seed)
    u0 = make_initial_datum(grid, "rough", run_seed=run_seed)
    ps = ProblemSpec(grid=grid, ell=ell, gd=gd, nl=nl, u0=u0, t_end=2.0, dt=dt)
    path = generate(m, 0.0, 2.0, dt, (run_seed, 0))
    return solve(ps, path).trajectory, path, nl


class TestLevelInterval:
    def test_values(self):
        assert level_interval(0) == (0.0, 2.0)
        assert level_interval(1) == (0.5, 2.0)
        assert level_interval(3) == (0.875, 2.0)

    def test_negative_k(self):
        with pytest.raises(ValueError, match="level index"):
            level_interval(-1)


class TestTruncate:
    def test_constant_arithmetic(self):
        grid = Grid(n=1, L=1.0, N=8)
        out = truncate(Field.full(grid, 3.0), k=1, a=2.0)
        assert np.all(out.values == 2.0)

    def test_k_zero_is_positive_part(self):
        grid = Grid(n=1, L=1.0, N=16)
        f = Field(grid, np.linspace(-1.0, 1.0, 16))
        out = truncate(f, k=0, a=5.0)
        assert np.array_equal(out.values, np.maximum(f.values, 0.0))

    def test_nonpositive_nodes_go_to_zero(self):
        grid = Grid(n=1, L=1.0, N=4)
        f = Field(grid, np.array([-2.0, 0.0, 0.5, 3.0]))
        out = truncate(f, k=2, a=1.0)
        assert out.values[0] == 0.0 and out.values[1] == 0.0

    def test_a_below_one_rejected(self):
        grid = Grid(n=1, L=1.0, N=4)
        with pytest.raises(ValueError, match="level base"):
            truncate(Field.zeros(grid), k=1, a=0.5)

    @settings(max_examples=50, deadline=None)
    @given(
        vals=arrays(np.float64, 8, elements=st.floats(-10, 10)),
        k=st.integers(1, 10),
        a=st.floats(1.0, 5.0),
    )
    def test_domination_in_k(self, vals, k, a):
        grid = Grid(n=1, L=1.0, N=8)
        f = Field(grid, vals)
        hi = truncate(f, k, a).values
        lo = truncate(f, k - 1, a).values
        assert np.all(hi <= lo)


class TestLevelEnergy:
    def test_constant_closed_form(self):
        # u = 3, a = 2, k = 1: truncation is 2, spatial L2 norm 2 on the
        # unit torus, so U = sqrt(2^4 * |I_1|) = sqrt(24)
        grid = Grid(n=1, L=1.0, N=8)
        traj = constant_trajectory(grid, 3.0)
        assert abs(level_energy(traj, 1, 2.0) - SQRT_24) < 1e-13

    def test_below_shift_vanishes(self):
        grid = Grid(n=1, L=1.0, N=8)
        traj = constant_trajectory(grid, 0.9)
        assert level_energy(traj, 1, 2.0) == 0.0

    def test_compositional_oracle(self):
        traj, _, _ = solved_run(N=32)
        for k, a in ((0, 1.0), (1, 1.0), (3, 1.5)):
            direct = level_energy(traj, k, a)
            trunc = truncate_trajectory(traj, k, a)
            ref = mixed_norm(trunc, 4, 2, level_interval(k)) ** 2
            assert abs(direct - ref) <= 1e-12 * max(1.0, ref)

    def test_level_zero_ignores_a(self):
        traj, _, _ = solved_run(N=32)
        u_plus = truncate_trajectory(traj, 0, 1.0)
        ref = mixed_norm(u_plus, 4, 2, (0.0, 2.0)) ** 2
        for a in (1.0, 2.0, 7.0):
            assert abs(level_energy(traj, 0, a) - ref) <= 1e-12 * max(1.0, ref)

    def test_monotone_in_k_and_a(self):
        traj, _, _ = solved_run(N=32)
        prev = None
        for k in range(6):
            u = level_energy(traj, k, 1.0)
            if prev is not None:
                assert u <= prev
            prev = u
        assert level_energy(traj, 2, 1.5) <= level_energy(traj, 2, 1.0)

    def test_span_too_short(self):
        grid = Grid(n=1, L=1.0, N=8)
        traj = constant_trajectory(grid, 1.0, t_end=1.0)
        with pytest.raises(ValueError, match="spans"):
            level_energy(traj, 1, 1.0)


class TestMartingaleStats:
    def test_zero_noise(self):
        traj, path, _ = solved_run(N=32)
        nl0 = zero_nonlinearity(traj.grid, m=path.m)
        stats = martingale_stats(traj, path, nl0, k=1, a=1.0)
        assert np.all(stats.X == 0.0)
        assert stats.X_star == 0.0 and stats.qv == 0.0

    def constant_pairing_setup(self):
        # u = 3, a = 2, k = 1: truncation 2; g_1 = 1 gives <g_1, u_{1,2}> = 2
        grid = Grid(n=1, L=1.0, N=8)
        traj = constant_trajectory(grid, 3.0, dt=1.0 / 64)
        kappa = np.stack([np.zeros(8), np.ones(8)])
        nl = Nonlinearity(grid, kappa, np.zeros(2))
        path = generate(1, 0.0, 2.0, 1.0 / 64, (5, 0))
        return traj, nl, path

    def test_constant_pairing_quadratic_variation(self):
        traj, nl, path = self.constant_pairing_setup()
        stats = martingale_stats(traj, path, nl, k=1, a=2.0)
        # qv = c^2 |I_1| with c = 2: 4 * 1.5, exact in dyadic arithmetic
        assert stats.qv == 6.0

    def test_constant_pairing_is_scaled_brownian(self):
        traj, nl, path = self.constant_pairing_setup()
        stats = martingale_stats(traj, path, nl, k=1, a=2.0)
        i0 = 32  # t = 0.5 at dt = 1/64
        expected_end = 2.0 * path.increments[0, i0:].sum()
        assert abs(stats.X[-1] - expected_end) < 1e-12

    def test_ito_isometry_monte_carlo(self):
        # frozen integrand c = 2 on I_1: Var(X_end) should match qv = 6
        traj, nl, _ = self.constant_pairing_setup()
        ends = np.empty(1000)
        qv = None
        for j in range(1000):
            path = generate(1, 0.0, 2.0, 1.0 / 64, (400, j))
            stats = martingale_stats(traj, path, nl, k=1, a=2.0)
            ends[j] = stats.X[-1]
            qv = stats.qv
        ratio = ends.var() / qv
        assert 0.9 <= ratio <= 1.1, ratio

    def test_drawup_matches_pair_scan(self):
        traj, path, nl = solved_run(N=32, dt=1e-2)
        stats = martingale_stats(traj, path, nl, k=1, a=1.0)
        X = stats.X
        brute = max(
            float(X[t] - X[s]) for t in range(len(X)) for s in range(t + 1)
        )
        assert abs(stats.X_star - max(brute, 0.0)) < 1e-15

    def test_window_override(self):
        traj, path, nl = solved_run(N=32)
        own = martingale_stats(traj, path, nl, k=2, a=1.0)
        assert own.window == level_interval(2)
        moved = martingale_stats(traj, path, nl, k=2, a=1.0, window=(1.0, 2.0))
        assert moved.window == (1.0, 2.0)

    def test_qv_additive_over_windows(self):
        traj, path, nl = solved_run(N=32)
        whole = martingale_stats(traj, path, nl, k=1, a=1.0, window=(0.5, 2.0)).qv
        left = martingale_stats(traj, path, nl, k=1, a=1.0, window=(0.5, 1.25)).qv
        right = martingale_stats(traj, path, nl, k=1, a=1.0, window=(1.25, 2.0)).qv
        assert abs(whole - (left + right)) <= 1e-13 * max(1.0, whole)

    def test_resolution_mismatch(self):
        traj, _, nl = solved_run(N=32, dt=2e-3)
        bad = generate(4, 0.0, 2.0, 2e-3 / 2.5, (1, 0))
        with pytest.raises(ValueError, match="incompatible"):
            martingale_stats(traj, bad, nl, k=1, a=1.0)


class TestLevelsetMeasure:
    def test_zero_field_strict(self):
        grid = Grid(n=1, L=1.0, N=8)
        assert levelset_measure(Field.zeros(grid), 0.0) == 0.0

    def test_ones(self):
        grid = Grid(n=2, L=1.0, N=8)
        assert levelset_measure(Field.full(grid, 1.0), 0.0) == 1.0

    def test_half_indicator(self):
        grid = Grid(n=1, L=2.0, N=16)
        vals = np.zeros(16)
        vals[:8] = 1.0
        assert levelset_measure(Field(grid, vals), 0.0) == 1.0

    def test_threshold_at_value_excluded(self):
        grid = Grid(n=1, L=1.0, N=8)
        assert levelset_measure(Field.full(grid, 2.0), 2.0) == 0.0

    def test_chebyshev_chain_exact(self):
        # |{u_{k,a}(t) > 0}| <= (2^k / a)^2 ||u_{k-1,a}(t)||_2^2, snapshotwise
        traj, _, _ = solved_run(N=64)
        for a in (1.0, 1.5):
            for k in (1, 2, 4):
                shift = a * (1.0 - 2.0 ** (-k))
                for i in range(0, traj.n_snapshots, 100):
                    snap = traj.snapshot(i)
                    meas = levelset_measure(snap, shift)
                    prev = truncate(snap, k - 1, a)
                    bound = (2.0**k / a) ** 2 * lp_norm(prev, 2) ** 2
                    assert meas <= bound + 1e-15 * max(1.0, bound)


class TestSupNorm:
    def test_zero(self):
        grid = Grid(n=1, L=1.0, N=8)
        traj = constant_trajectory(grid, 0.0)
        assert sup_norm(traj, (1.0, 2.0), "plus") == 0.0

    def test_negative_constant_plus(self):
        grid = Grid(n=1, L=1.0, N=8)
        traj = constant_trajectory(grid, -3.0)
        assert sup_norm(traj, (1.0, 2.0), "plus") == 0.0
        assert sup_norm(traj, (1.0, 2.0), "abs") == 3.0

    def test_compositional_oracle(self):
        traj, _, _ = solved_run(N=32)
        plus = truncate_trajectory(traj, 0, 1.0)
        ref = mixed_norm(plus, np.inf, np.inf, (1.0, 2.0))
        assert abs(sup_norm(traj, (1.0, 2.0), "plus") - ref) <= 1e-12 * max(1.0, ref)

    def test_bad_mode(self):
        traj, _, _ = solved_run(N=32)
        with pytest.raises(ValueError, match="signed"):
            sup_norm(traj, (1.0, 2.0), "square")


class TestHolder:
    def hat_trajectory(self, N=128):
        # distance to the nearest lattice point: 1-Lipschitz, periodic
        grid = Grid(n=1, L=1.0, N=N)
        x = grid.axis_coords()
        hat = np.minimum(x, grid.L - x)
        vals = np.broadcast_to(hat, (41,) + grid.shape).copy()
        return Trajectory(grid, 0.0, 2.0, 0.05, vals)

    def test_lipschitz_hat_seminorm(self):
        traj = self.hat_trajectory()
        semi = holder_seminorm(traj, 1.0, (1.0, 2.0))
        assert abs(semi - 1.0) < 1e-12

    def test_lipschitz_hat_alpha(self):
        fit = estimate_alpha(self.hat_trajectory(), (1.0, 2.0))
        assert not fit.degenerate
        assert abs(fit.alpha_hat - 1.0) < 1e-10
        assert fit.stderr < 1e-10

    def test_constant_is_degenerate(self):
        grid = Grid(n=1, L=1.0, N=64)
        traj = constant_trajectory(grid, 5.0)
        fit = estimate_alpha(traj, (1.0, 2.0))
        assert fit.degenerate
        assert np.isnan(fit.alpha_hat)
        assert holder_seminorm(traj, 0.5, (1.0, 2.0)) == 0.0

    def test_too_few_scales(self):
        grid = Grid(n=1, L=1.0, N=16)
        traj = constant_trajectory(grid, 1.0)
        with pytest.raises(ValueError, match="dyadic scales"):
            estimate_alpha(traj, (1.0, 2.0))

    def test_heat_from_rough_data_is_stable_under_refinement(self):
        alphas = {}
        for N in (128, 256):
            grid = Grid(n=1, L=1.0, N=N)
            ell = EllipticitySpec(lam=1.0, epoch_dt=10.0, cell=1)
            gd = make_growth_data(grid)
            ps = ProblemSpec(
                grid=grid, ell=ell, gd=gd, nl=zero_nonlinearity(grid),
                u0=make_initial_datum(grid, "rough", run_seed=3),
                t_end=2.0, dt=1e-3,
            )
            path = generate(1, 0.0, 2.0, 1e-3, (3, 0))
            traj = solve(ps, path).trajectory
            fit = estimate_alpha(traj, (1.0, 2.0))
            alphas[N] = fit.alpha_hat
        assert alphas[128] > 0 and alphas[256] > 0
        assert abs(alphas[128] - alphas[256]) <= 0.1


class TestBuildLevelDiagnostics:
    def test_rows_consistent_with_primitives(self):
        traj, path, nl = solved_run(N=32)
        rows = build_level_diagnostics(traj, path, nl, a=1.0, k_max=4)
        assert len(rows) == 5
        for row in rows:
            assert row.window == level_interval(row.k)
            assert abs(row.U - level_energy(traj, row.k, 1.0)) < 1e-14
            own = martingale_stats(traj, path, nl, row.k, 1.0)
            assert row.X_star == own.X_star
            ahead = martingale_stats(traj, path, nl, row.k + 1, 1.0, window=row.window)
            assert row.qv == ahead.qv

    def test_energy_monotone_across_rows(self):
        traj, path, nl = solved_run(N=32)
        rows = build_level_diagnostics(traj, path, nl, a=1.0, k_max=6)
        for lo, hi in zip(rows[1:], rows[:-1]):
            assert lo.U <= hi.U

    def test_levelset_sampling(self):
        traj, path, nl = solved_run(N=32)
        rows = build_level_diagnostics(traj, path, nl, a=1.0, k_max=2, levelset_stride=100)
        grid_measure = traj.grid.L ** traj.grid.n
        for row in rows:
            assert len(row.levelset) == len(row.levelset_times)
            assert len(row.levelset) >= 2
            for t, m in zip(row.levelset_times, row.levelset):
                assert row.window[0] - 1e-12 <= t <= row.window[1] + 1e-12
                assert 0.0 <= m <= grid_measure

    def test_stride_validation(self):
        traj, path, nl = solved_run(N=32)
        with pytest.raises(ValueError, match="levelset_stride"):
            build_level_diagnostics(traj, path, nl, a=1.0, k_max=1, levelset_stride=0)

    def test_large_a_rows_vanish(self):
        traj, path, nl = solved_run(N=32)
        rows = build_level_diagnostics(traj, path, nl, a=50.0, k_max=3)
        for row in rows[1:]:
            assert row.U == 0.0
            assert row.X_star == 0.0
