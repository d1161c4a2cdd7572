import csv
import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from mvsde import (ParticleEnsemble, apply_stopping, builtin, euler_step, moment_report,
                   simulate, spawn_independent_copy)
from mvsde.errors import ConfigurationError, NumericError, StreamCollisionError
from mvsde.rng import StreamLineage
from mvsde.simulate import chebyshev_check

from conftest import kernel_coeffs, make_config, se


def zero_coeffs(d=1):
    return builtin("constant", d, d, c=0.0, s=0.0)


class TestEulerStep:
    def test_zero_coefficients_only_advance_time(self):
        ens = ParticleEnsemble(np.array([[1.0], [2.0]]), time=0.3)
        new = euler_step(ens, zero_coeffs(), 0.1, np.ones((2, 1)))
        np.testing.assert_array_equal(new.states, ens.states)
        assert new.time == pytest.approx(0.4)

    def test_constant_drift_shift(self):
        c = builtin("constant", 2, 2, c=[1.0, -2.0], s=0.0)
        ens = ParticleEnsemble(np.zeros((3, 2)))
        new = euler_step(ens, c, 0.25, np.zeros((3, 2)))
        np.testing.assert_array_equal(new.states, np.tile([0.25, -0.5], (3, 1)))

    def test_hand_step_two_particles(self):
        c = kernel_coeffs(lambda t, x, y: -(x - y), lambda t, x, y: 0 * (x + y)[..., None])
        ens = ParticleEnsemble(np.array([[0.0], [2.0]]))
        new = euler_step(ens, c, 0.5, np.zeros((2, 1)))
        np.testing.assert_allclose(new.states, [[0.5], [1.5]])

    def test_stopped_particles_frozen_but_counted(self):
        c = kernel_coeffs(lambda t, x, y: -(x - y), lambda t, x, y: 0 * (x + y)[..., None])
        alive = np.array([True, False])
        ens = ParticleEnsemble(np.array([[0.0], [2.0]]), alive=alive)
        new = euler_step(ens, c, 0.5, np.zeros((2, 1)))
        # particle 0 still feels the frozen particle 1
        np.testing.assert_allclose(new.states, [[0.5], [2.0]])

    def test_nonfinite_state_reports_particle(self):
        c = kernel_coeffs(lambda t, x, y: np.where(y > 1, np.inf, 0.0) + 0 * x,
                          lambda t, x, y: 0 * (x + y)[..., None])
        ens = ParticleEnsemble(np.array([[0.0], [2.0], [0.5]]), step=7)
        with pytest.raises(NumericError) as err:
            euler_step(ens, c, 0.1, np.zeros((3, 1)))
        assert err.value.particle == 1 and err.value.step == 7

    def test_bad_noise_shape(self):
        ens = ParticleEnsemble(np.zeros((2, 1)))
        with pytest.raises(ConfigurationError):
            euler_step(ens, zero_coeffs(), 0.1, np.zeros((3, 1)))

    def test_workers_do_not_change_result(self):
        c = builtin("mean_reverting", 2, 2)
        rng = np.random.default_rng(0)
        ens = ParticleEnsemble(rng.normal(size=(101, 2)))
        noise = rng.normal(size=(101, 2)) * 0.1
        a = euler_step(ens, c, 0.01, noise, workers=1)
        b = euler_step(ens, c, 0.01, noise, workers=4)
        np.testing.assert_array_equal(a.states, b.states)


class TestSimulate:
    def test_zero_steps(self):
        cfg = make_config(steps=0, dt=0.1, horizon=0.0)
        b = simulate(cfg)
        assert b.trajectories.shape == (1, 200, 1)
        assert b.noise_increments.shape == (0, 200, 1)
        np.testing.assert_array_equal(b.time_grid, [0.0])

    def test_time_grid(self):
        b = simulate(make_config())
        np.testing.assert_array_equal(b.time_grid, np.arange(11) * 0.1)
        assert b.terminal.time == b.time_grid[-1]

    def test_brownian_terminal_variance(self):
        # pooled over five fixed seeds so a single 3-SE excursion cannot decide it
        xs = [simulate(make_config(N=100_000, steps=4, dt=0.25, record=0, seed=s))
              .terminal.states[:, 0] for s in range(5)]
        x = np.concatenate(xs)
        # Var W_T = T; SE of the sample variance for Gaussian data is T sqrt(2/(n-1))
        assert abs(x.var(ddof=1) - 1.0) <= 3 * math.sqrt(2 / (x.size - 1))
        assert abs(x.mean()) <= 3 * se(x)

    def test_noise_increments_match_trajectories(self):
        cfg = make_config(N=5)
        b = simulate(cfg)
        np.testing.assert_allclose(np.diff(b.trajectories, axis=0), b.noise_increments,
                                   atol=1e-15)

    def test_deterministic_across_workers(self):
        cfg = make_config(coefficients={"name": "mean_reverting", "params": {}}, d=2, d1=2,
                          N=333, initial_law={"kind": "gaussian", "mean": [0, 1],
                                              "cov": [[1, 0], [0, 1]]})
        a, b = simulate(cfg, workers=1), simulate(cfg, workers=4)
        np.testing.assert_array_equal(a.trajectories, b.trajectories)
        np.testing.assert_array_equal(a.terminal.states, b.terminal.states)

    def test_gaussian_initial_law(self):
        cfg = make_config(N=50_000, steps=0, horizon=0.0, d=2, d1=2,
                          initial_law={"kind": "gaussian", "mean": [1.0, -1.0],
                                       "cov": [[2.0, 0.5], [0.5, 1.0]]})
        x = simulate(cfg).terminal.states
        np.testing.assert_allclose(x.mean(axis=0), [1, -1], atol=4 * math.sqrt(2 / 50_000))
        np.testing.assert_allclose(np.cov(x.T), [[2, 0.5], [0.5, 1]], atol=0.05)

    def test_single_particle_is_legal(self):
        b = simulate(make_config(N=1, coefficients={"name": "mean_reverting", "params": {}}))
        assert b.terminal.states.shape == (1, 1)

    def test_csv_layout(self, tmp_path):
        cfg = make_config(N=3, d=2, d1=2, steps=2, dt=0.5,
                          initial_law={"kind": "point", "mean": [0.0, 1.0]})
        b = simulate(cfg)
        path = tmp_path / "t.csv"
        b.to_csv(path)
        rows = list(csv.reader(open(path)))
        assert rows[0] == ["step", "time", "particle_id", "x_0", "x_1"]
        assert len(rows) == 1 + 3 * 3
        assert float(rows[-1][3]) == b.trajectories[2, 2, 0]


def test_zero_noise_first_order():
    """sigma = 0: Euler error against a tight ODE reference shrinks like dt."""
    kappa, theta = 1.0, 0.5
    sol = solve_ivp(lambda t, x: -kappa * x + theta * np.tanh(x), (0, 1), [1.0],
                    rtol=1e-12, atol=1e-14)
    ref = sol.y[0, -1]
    errs = []
    dts = [0.1, 0.05, 0.025, 0.0125]
    for dt in dts:
        cfg = make_config(coefficients={"name": "mean_reverting",
                                        "params": {"kappa": kappa, "theta": theta, "s": 0.0}},
                          N=3, steps=round(1 / dt), dt=dt, initial_law={"kind": "point",
                                                                         "mean": [1.0]})
        errs.append(abs(simulate(cfg).terminal.states[0, 0] - ref))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 0.9), orders


class TestIndependentCopy:
    def test_same_lineage_rejected(self):
        with pytest.raises(StreamCollisionError):
            spawn_independent_copy(make_config(), offset=0)
        with pytest.raises(StreamCollisionError):
            spawn_independent_copy(make_config(), offset=100)

    def test_copy_statistics(self):
        cfg = make_config(N=20_000, steps=5, dt=0.2, record=0)
        a = simulate(cfg).terminal.states[:, 0]
        b = spawn_independent_copy(cfg).terminal.states[:, 0]
        assert abs(a.mean() - b.mean()) <= 3 * math.hypot(se(a), se(b))
        assert abs(np.corrcoef(a, b)[0, 1]) <= 3 / math.sqrt(a.size)

    def test_copy_uses_shifted_streams(self):
        cfg = make_config(N=10)
        big = simulate(make_config(N=20))
        copy = spawn_independent_copy(cfg)
        # particle i of the copy is stream N + i of the primary seed
        np.testing.assert_array_equal(copy.noise_increments, big.noise_increments[:, 10:])


class TestStopping:
    def test_infinite_radius(self):
        res = apply_stopping(simulate(make_config()), math.inf)
        assert res.exit_fraction == 0.0

    def test_deterministic_exit(self):
        cfg = make_config(coefficients={"name": "constant", "params": {"c": 1.0, "s": 0.0}},
                          N=4, steps=100, dt=0.01)
        res = apply_stopping(simulate(cfg), 0.5)
        assert res.exit_fraction == 1.0
        np.testing.assert_allclose(res.exit_times, 0.5, atol=0.01 + 1e-12)
        assert np.all(res.trajectories[-1] == res.trajectories[res.exit_steps[0]])

    def test_alive_history_monotone(self):
        res = apply_stopping(simulate(make_config(N=300, steps=50, dt=0.02)), 0.8)
        assert np.all(np.diff(res.alive_history.astype(int), axis=0) <= 0)

    def test_exit_fraction_nonincreasing_in_radius(self):
        b = simulate(make_config(N=500, steps=50, dt=0.02))
        fr = [apply_stopping(b, r).exit_fraction for r in (0.25, 0.5, 1.0, 1.5, 2.0, 3.0)]
        assert all(y <= x for x, y in zip(fr, fr[1:]))

    def test_in_simulation_stopping(self):
        cfg = make_config(N=400, steps=50, dt=0.02, stopping_radius=0.7)
        b = simulate(cfg)
        exited = b.exit_steps >= 0
        assert exited.any() and not exited.all()
        # frozen particles sit at their exit states
        post = apply_stopping(b, 0.7)
        np.testing.assert_array_equal(post.exit_steps, b.exit_steps[: b.record_ids.size])
        np.testing.assert_array_equal(b.trajectories[-1], post.trajectories[-1])

    def test_chebyshev_bound(self):
        b = simulate(make_config(N=5000, steps=100, dt=0.01,
                                 initial_law={"kind": "point", "mean": [0.5]}))
        for radius in (1.5, 2.0, 3.0):
            rep = chebyshev_check(b, radius)
            assert rep["holds"], rep


class TestMoments:
    def test_brownian_exponent(self):
        b = simulate(make_config(N=20_000, steps=64, dt=1 / 64, record=20_000))
        rep = moment_report(b)
        assert 1.9 <= rep.increment_exponent <= 2.1
        for p in rep.ladder:
            assert abs(p["ratio"] / 3 - 1) < 0.1

    def test_frozen_ensemble_sentinel(self):
        cfg = make_config(coefficients={"name": "constant", "params": {"c": 0.0, "s": 0.0}})
        rep = moment_report(simulate(cfg))
        assert rep.increment_exponent is None
        assert rep.to_dict()["increment_exponent"] is None

    def test_json_keys(self):
        d = moment_report(simulate(make_config())).to_dict()
        assert {"sup_m2", "sup_m4", "increment_exponent", "constants_witness"} <= set(d)


# C_T = sup_t E|X_t|^2 / (1 + E|x0|^2), measured once (N=2000, K=100, dt=0.01,
# x0 ~ N(0.5, 0.25 I), seed 1234) and frozen.
FROZEN_C2 = {
    ("brownian", 1, 1): 0.9731368232121561,
    ("constant", 2, 2): 2.178577320006415,
    ("mean_reverting", 2, 2): 0.5371656350592919,
    ("step_drift", 1, 1): 2.5112096179784174,
    ("sine_step", 1, 1): 1.113200591546777,
    ("rectangular", 2, 3): 0.6940213579996362,
}
PARAMS = {"constant": {"c": 0.5, "s": 1.0}}


@pytest.mark.parametrize("key", sorted(FROZEN_C2))
def test_moment_bounds_regression(key):
    name, d, d1 = key
    cfg = make_config(coefficients={"name": name, "params": PARAMS.get(name, {})}, d=d, d1=d1,
                      N=2000, steps=100, dt=0.01,
                      initial_law={"kind": "gaussian", "mean": [0.5] * d,
                                   "cov": (0.25 * np.eye(d)).tolist()})
    b = simulate(cfg)
    rep = moment_report(b)
    assert rep.constants_witness["C2"] == pytest.approx(FROZEN_C2[key], rel=1e-9)
    e2 = cfg.initial_law.moment(2)
    assert rep.sup_second_moment <= FROZEN_C2[key] * (1 + e2) * (1 + 1e-9)
    assert math.isfinite(rep.sup_fourth_moment)
    assert 1.9 <= rep.increment_exponent <= 2.1


def test_simulate_numeric_error_has_step():
    cfg = make_config(coefficients={"name": "linear", "params": {"a": 1e3, "beta": 0.0, "s": 0.0}},
                      N=4, steps=200, dt=1.0, horizon=200.0,
                      initial_law={"kind": "point", "mean": [1.0]})
    with pytest.raises(NumericError) as err:
        simulate(cfg)
    # 1001^k overflows a double after about 103 steps
    assert 90 <= err.value.step <= 110
