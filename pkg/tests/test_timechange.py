import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from mvsde import simulate
from mvsde.distances import ks_statistic, ks_threshold
from mvsde.errors import ConfigurationError, DomainError
from mvsde.timechange import (build_time_change, comparison_test, constant_sigma_constants,
                              radial_comparison, radial_decompose, reflect_simulate,
                              sign_sde_reduce, sup_wiener_exp_moment, sup_wiener_exp_moment_mc)

from conftest import make_config, se


def gauss(n, shape=(), seed=0, scale=1.0):
    return np.random.default_rng(seed).normal(scale=scale, size=(n,) + shape)


class TestRadial:
    def test_identity_d2(self):
        parts = radial_decompose(np.array([[2.0, 0.0]]), np.eye(2)[None])
        assert parts.B[0] == pytest.approx(0.5)
        assert parts.radius[0] == 2.0

    def test_ray_row_norm(self):
        path = np.outer(np.linspace(1, 3, 7), [0.6, 0.8])
        parts = radial_decompose(path, np.broadcast_to(np.eye(2), (7, 2, 2)))
        np.testing.assert_allclose(np.linalg.norm(parts.rows, axis=1), 1.0, rtol=1e-14)

    def test_scaled_identity_d3(self):
        parts = radial_decompose(np.array([[0.0, 1.0, 0.0]]), 2 * np.eye(3)[None])
        assert parts.B[0] == pytest.approx(8.0)

    def test_origin_guard(self):
        path = np.array([[1.0, 0.0], [0.0, 0.0], [1.0, 1.0]])
        with pytest.raises(DomainError) as err:
            radial_decompose(path, np.broadcast_to(np.eye(2), (3, 2, 2)))
        assert err.value.step == 1

    def test_d1_rejected(self):
        with pytest.raises(ConfigurationError):
            radial_decompose(np.ones((3, 1)), np.ones((3, 1, 1)))

    def test_uses_left_endpoints(self):
        path = np.array([[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
        parts = radial_decompose(path, np.broadcast_to(np.eye(2), (2, 2, 2)))
        np.testing.assert_allclose(parts.radius, [1.0, 2.0])


class TestTimeChange:
    def test_constant_reciprocal_clock(self):
        c, dt = 2.0, 0.01
        tc = build_time_change(np.full(100, c), dt, power=-2.0)
        np.testing.assert_allclose(tc.tau_grid, tc.t_grid / c ** 2, rtol=1e-12)
        s = np.linspace(0, tc.tau_grid[-1], 9)
        np.testing.assert_allclose(tc.chi(s), c ** 2 * s, rtol=1e-12, atol=1e-15)

    def test_constant_default_clock(self):
        tc = build_time_change(np.full(10, 3.0), 0.1)
        np.testing.assert_allclose(tc.tau_grid, 9 * tc.t_grid, rtol=1e-12)
        assert tc.bounds == (1 / 9, 9)

    def test_slope_bounds(self):
        norms = 1 + 0.5 * (1 + np.sin(np.linspace(0, 10, 500)))
        rows = norms[:, None] * np.array([0.6, 0.8])
        tc = build_time_change(rows, 0.002, power=-2.0)
        slope = np.diff(tc.tau_grid) / 0.002
        assert slope.min() >= 0.25 - 1e-12 and slope.max() <= 1 + 1e-12
        lo, hi = tc.bounds
        assert np.all((tc.slope >= lo) & (tc.slope <= hi))

    @pytest.mark.parametrize("power", [2.0, -2.0])
    def test_quadratic_variation(self, power):
        k, dt = 100_000, 1e-5
        t = np.arange(k) * dt
        norms = 1 + 0.5 * (1 + np.sin(20 * t))
        rows = norms[:, None] * np.stack([np.cos(t), np.sin(t)], axis=1)
        dW = gauss(k, (2,), seed=3, scale=math.sqrt(dt))
        tc = build_time_change(rows, dt, dW, power=power)
        qv = np.cumsum(tc.w_hat_increments ** 2)
        assert abs(qv[-1] / tc.tau_grid[-1] - 1) < 0.05
        assert tc.qv_slope() == pytest.approx(1.0, abs=0.05)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0.2, 5.0), min_size=2, max_size=50), st.floats(1e-3, 1.0))
    def test_roundtrip_and_monotone(self, norms, dt):
        tc = build_time_change(np.array(norms), dt)
        assert np.all(np.diff(tc.tau_grid) > 0)
        assert tc.roundtrip_error() <= dt

    def test_vanishing_row(self):
        with pytest.raises(DomainError):
            build_time_change(np.array([1.0, 0.0, 1.0]), 0.1)

    def test_qv_requires_increments(self):
        with pytest.raises(ConfigurationError):
            build_time_change(np.ones(3), 0.1).qv_slope()


class TestReflect:
    def test_zero_noise_positive_drift(self):
        ref = reflect_simulate(np.zeros(10), 2.0, 1.0, dt=0.1)
        np.testing.assert_allclose(ref.z, 1 + 0.2 * np.arange(11))
        np.testing.assert_array_equal(ref.local_time_increments, 0.0)

    def test_zero_noise_at_barrier(self):
        ref = reflect_simulate(np.zeros(5), 0.0, 1.0, dt=0.1)
        np.testing.assert_array_equal(ref.z, 1.0)
        np.testing.assert_array_equal(ref.local_time_increments, 0.0)

    def test_overshoot(self):
        ref = reflect_simulate(np.array([-3.0]), 0.0, 1.5, dt=0.1)
        assert ref.z[1] == 1.0
        assert ref.local_time_increments[0] == pytest.approx(2.5)

    def test_start_below_barrier(self):
        with pytest.raises(ConfigurationError):
            reflect_simulate(np.zeros(3), 0.0, 0.5, dt=0.1)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31), st.floats(0.0, 3.0), st.floats(1.0, 3.0))
    def test_skorokhod_invariants(self, seed, c1, z0):
        w = gauss(200, seed=seed, scale=0.1)
        ref = reflect_simulate(w, c1, z0, dt=0.01)
        assert np.all(ref.z >= 1.0)
        phi = ref.local_time_increments
        assert np.all(phi >= 0)
        assert np.all(phi[ref.z[1:] > 1.0 + 1e-12] == 0)

    def test_many_paths(self):
        w = gauss(50, (4,), seed=1, scale=0.3)
        ref = reflect_simulate(w, 0.5, np.ones(4), dt=np.full(50, 0.01))
        for j in range(4):
            one = reflect_simulate(w[:, j], 0.5, 1.0, dt=0.01)
            np.testing.assert_array_equal(ref.z[:, j], one.z)


class TestComparison:
    def test_barrier_path(self):
        ref = reflect_simulate(gauss(30, seed=2), 0.0, 1.0, dt=0.1)
        assert comparison_test(np.ones(31), ref) == 0.0

    def test_shape_mismatch(self):
        ref = reflect_simulate(np.zeros(3), 0.0, 1.0, dt=0.1)
        with pytest.raises(ConfigurationError):
            comparison_test(np.ones(3), ref)

    def test_constants(self):
        assert constant_sigma_constants(np.eye(2)) == (1.0, 1.0)
        assert constant_sigma_constants(np.diag([1.0, 2.0])) == (4.0, 4.0)
        K, C0 = constant_sigma_constants(np.diag([0.5, 1.0]))
        assert K == pytest.approx(1.0) and C0 == pytest.approx(4.0)

    def test_brownian_coupling(self):
        cfg = make_config(d=2, d1=2, N=200, steps=400, dt=1 / 400, record=200,
                          initial_law={"kind": "point", "mean": [1.0, 0.0]})
        bundle = simulate(cfg, record_diffusion=True)
        K, C0 = constant_sigma_constants(np.eye(2))
        rep = radial_comparison(bundle, K, C0)
        assert rep.violation_fraction <= 1e-3
        assert rep.domination_violation <= 1e-3
        assert rep.roundtrip_error <= rep.max_grid_cell
        assert rep.qv_slope == pytest.approx(1.0, abs=0.05)

    def test_needs_recorded_diffusion(self):
        bundle = simulate(make_config(d=2, d1=2, initial_law={"kind": "point",
                                                              "mean": [1.0, 0.0]}))
        with pytest.raises(ConfigurationError):
            radial_comparison(bundle, 1.0, 1.0)


class TestSignSDE:
    def test_no_crossing(self):
        w = np.abs(gauss(100, seed=4, scale=0.01))
        red = sign_sde_reduce(w, 1.0)
        np.testing.assert_array_equal(red.abs_v, red.v)
        np.testing.assert_array_equal(red.local_time_increments, 0.0)

    def test_tanaka_identity(self):
        w = gauss(500, seed=5, scale=0.1)
        red = sign_sde_reduce(w, 0.1, drift=0.3, dt=0.01)
        np.testing.assert_allclose(np.diff(red.abs_v),
                                   red.w_bar_increments + 0.3 * 0.01 + red.local_time_increments,
                                   atol=1e-14)
        assert np.all(red.local_time_increments >= 0)

    def test_driftless_law(self):
        n, k, T, v0 = 20_000, 200, 1.0, 0.5
        w = gauss(k, (n,), seed=6, scale=math.sqrt(T / k))
        final = sign_sde_reduce(w, v0).abs_v[-1]
        oracle = np.abs(v0 + np.random.default_rng(7).normal(scale=math.sqrt(T), size=n))
        assert ks_statistic(final, oracle) < ks_threshold(n, n, 0.01)

    def test_matches_reflection_at_zero(self):
        # the projected walk ends at its discrete running maximum, which lags
        # the continuous one by about 0.58 sqrt(dt); 10^4 steps keep that
        # bias well inside the KS threshold
        n, k, T = 5000, 10_000, 1.0
        w = gauss(k, (n,), seed=8, scale=math.sqrt(T / k))
        a = sign_sde_reduce(w, 0.0).abs_v[-1]
        w2 = gauss(k, (n,), seed=9, scale=math.sqrt(T / k))
        b = reflect_simulate(w2, 0.0, np.zeros(n), barrier=0.0, dt=T / k).z[-1]
        assert ks_statistic(a, b) < ks_threshold(n, n, 0.01)


class TestSupMoment:
    def test_closed_form(self):
        assert sup_wiener_exp_moment(0.0, 1.0) == 1.0
        assert sup_wiener_exp_moment(0.25, 1.0) == pytest.approx(math.sqrt(2), rel=1e-15)
        assert sup_wiener_exp_moment(0.5, 1.0) == math.inf
        with pytest.raises(ConfigurationError):
            sup_wiener_exp_moment(0.1, 0.0)

    def test_matches_density_integral(self):
        from scipy import integrate
        r, T = 0.15, 2.0
        f = lambda x: 2 * math.exp((r - 1 / (2 * T)) * x * x) / math.sqrt(2 * math.pi * T)
        val = integrate.quad(f, 0, math.inf)[0]
        assert sup_wiener_exp_moment(r, T) == pytest.approx(val, rel=1e-10)

    def test_mc_oracle(self):
        # r = 0.1 keeps the second moment finite so the standard error is meaningful
        exact = sup_wiener_exp_moment(0.1, 1.0)
        mean, err = sup_wiener_exp_moment_mc(0.1, 1.0, paths=20_000, steps=2000, seed=1)
        # the discrete maximum sits below the continuous one by O(sqrt(dt))
        assert mean <= exact + 3 * err
        assert mean == pytest.approx(exact, rel=0.02)

    def test_mc_deterministic(self):
        a = sup_wiener_exp_moment_mc(0.1, 1.0, paths=100, steps=50, seed=3, chunk=7)
        b = sup_wiener_exp_moment_mc(0.1, 1.0, paths=100, steps=50, seed=3, chunk=100)
        assert a == pytest.approx(b, rel=1e-12)
