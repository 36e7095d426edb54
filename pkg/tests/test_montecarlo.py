import math

import numpy as np
import pytest

from delaygbm.conditions import ReducedParams
from delaygbm.fundamental import dde_solve
from delaygbm.montecarlo import (
    CHUNK_PATHS,
    LyapCoeffs,
    MeanSquareSeries,
    SimConfig,
    check_lyapunov_descent,
    check_monotone,
    ensemble_mean_square,
    estimate_lyapunov,
    fit_decay,
    forward_backward_check,
    lyapunov_coeffs,
    lyapunov_paths,
    path_generator,
    simulate_path,
)
from oracles import euler_mean_square_rate


def series(times, y, stderr=None, tau=0.1, sigma=0.5):
    times = np.asarray(times, dtype=float)
    y = np.asarray(y, dtype=float)
    se = np.zeros_like(y) if stderr is None else np.asarray(stderr, dtype=float)
    return MeanSquareSeries(times, y, se, 1, tau, sigma)


class TestConfig:
    def test_dt_must_divide_tau(self):
        with pytest.raises(ValueError):
            SimConfig(0.3, 0.5, 0.07, 1.0, 10)

    def test_any_dt_without_delay(self):
        assert SimConfig(0.0, 0.5, 0.07, 1.0, 10).m == 0

    def test_steps(self):
        cfg = SimConfig(0.1, 0.5, 0.01, 1.0, 10, record_every=5)
        assert cfg.m == 10 and cfg.n_steps == 100
        np.testing.assert_allclose(cfg.times(), np.arange(21) * 0.05)

    @pytest.mark.parametrize("kw", [dict(n_paths=0), dict(T=0.001), dict(record_every=0), dict(seed=-1)])
    def test_invalid(self, kw):
        args = dict(tau=0.1, sigma=0.5, dt=0.01, T=1.0, n_paths=10)
        args.update(kw)
        with pytest.raises(ValueError):
            SimConfig(**args)


class TestPaths:
    def test_bit_reproducible(self):
        cfg = SimConfig(0.2, 0.7, 0.02, 2.0, 5, seed=99)
        np.testing.assert_array_equal(simulate_path(cfg, 3), simulate_path(cfg, 3))
        assert not np.array_equal(simulate_path(cfg, 3), simulate_path(cfg, 4))

    def test_recursion_by_hand(self):
        cfg = SimConfig(0.2, 0.7, 0.05, 1.0, 1, seed=5)
        xi = path_generator(5, 0).standard_normal(cfg.n_steps)
        w = {j: 1.0 for j in range(-cfg.m, 1)}
        for k in range(cfg.n_steps):
            d = w[k - cfg.m]
            w[k + 1] = w[k] - d * cfg.dt + cfg.sigma * d * math.sqrt(cfg.dt) * xi[k]
        expected = np.array([w[k] for k in range(cfg.n_steps + 1)])
        np.testing.assert_allclose(simulate_path(cfg, 0), expected, rtol=1e-13)

    def test_no_delay_is_gbm_step(self):
        cfg = SimConfig(0.0, 0.8, 0.01, 0.5, 1, seed=11)
        xi = path_generator(11, 0).standard_normal(cfg.n_steps)
        factors = 1 - cfg.dt + cfg.sigma * math.sqrt(cfg.dt) * xi
        expected = np.concatenate([[1.0], np.cumprod(factors)])
        np.testing.assert_allclose(simulate_path(cfg, 0), expected, rtol=1e-12)

    def test_zero_history(self):
        cfg = SimConfig(0.3, 1.0, 0.03, 2.0, 1, history=0.0)
        assert np.all(simulate_path(cfg, 0) == 0)

    def test_deterministic_limit(self):
        tau = 0.3
        cfg = SimConfig(tau, 0.0, tau / 300, 6.0, 1)
        w = simulate_path(cfg, 0)
        u = dde_solve(tau, 1.0, 6.0, tau / 300).values
        assert np.max(np.abs(w - u)) < 2 * cfg.dt
        assert np.all(np.diff(w) <= 0)

    def test_sampled_history(self):
        cfg = SimConfig(0.5, 0.0, 0.05, 0.05, 1, history=lambda t: 1 + t)
        # first step reads w(-tau) = 0.5
        assert simulate_path(cfg, 0)[1] == pytest.approx(1 - 0.5 * 0.05)


class TestEnsemble:
    def test_initial_value(self):
        ser = ensemble_mean_square(SimConfig(0.1, 0.5, 0.01, 1.0, 500, history=1.0))
        assert ser.y[0] == 0.5 and ser.stderr[0] == 0.0
        assert np.all(ser.y >= 0) and np.all(ser.stderr >= 0)

    def test_order_independent(self):
        cfg = SimConfig(0.1, 0.9, 0.02, 1.0, 2 * CHUNK_PATHS + 17, seed=3, record_every=5)
        a = ensemble_mean_square(cfg, n_workers=1)
        b = ensemble_mean_square(cfg, n_workers=4)
        np.testing.assert_array_equal(a.y, b.y)
        np.testing.assert_array_equal(a.stderr, b.stderr)

    def test_matches_single_paths(self):
        cfg = SimConfig(0.1, 0.9, 0.02, 0.6, 40, seed=8)
        ser = ensemble_mean_square(cfg)
        paths = np.array([simulate_path(cfg, i) for i in range(40)])
        np.testing.assert_allclose(ser.y, np.mean(paths ** 2 / 2, axis=0), rtol=1e-12)
        np.testing.assert_allclose(ser.stderr, np.std(paths ** 2 / 2, axis=0, ddof=1) / math.sqrt(40),
                                   rtol=1e-9, atol=1e-15)

    def test_linear_in_history(self):
        base = SimConfig(0.2, 0.6, 0.02, 1.0, 300, seed=4)
        scaled = SimConfig(0.2, 0.6, 0.02, 1.0, 300, seed=4, history=2.0)
        a, b = ensemble_mean_square(base), ensemble_mean_square(scaled)
        np.testing.assert_array_equal(4 * a.y, b.y)
        c = ensemble_mean_square(SimConfig(0.2, 0.6, 0.02, 1.0, 300, seed=4, history=3.0))
        np.testing.assert_allclose(9 * a.y, c.y, rtol=1e-12)

    def test_no_noise_no_delay(self):
        dt = 1e-3
        ser = ensemble_mean_square(SimConfig(0.0, 0.0, dt, 5.0, 10))
        assert np.all(ser.stderr == 0)
        exact = np.exp(-2 * ser.times) / 2
        assert np.max(np.abs(ser.y - exact)) < dt

    def test_deterministic_equals_dde_squared(self):
        tau = 0.4
        ser = ensemble_mean_square(SimConfig(tau, 0.0, tau / 400, 4.0, 3))
        u = dde_solve(tau, 1.0, 4.0, tau / 400).values
        assert np.all(ser.stderr == 0)
        assert np.max(np.abs(ser.y - u * u / 2)) < 1e-3

    def test_statistical_calibration(self):
        # tau = 0, sigma = 1: the Euler scheme has E[w_k^2] = ((1 - dt)^2 + dt)^k exactly
        dt, n = 0.01, 10_000
        hits = total = 0
        for seed in range(50):
            ser = ensemble_mean_square(SimConfig(0.0, 1.0, dt, 1.0, n, seed=seed, record_every=5))
            k = np.rint(ser.times / dt)
            truth = 0.5 * ((1 - dt) ** 2 + dt) ** k
            inside = np.abs(ser.y - truth) <= 2 * ser.stderr
            hits += int(inside[1:].sum())
            total += inside.size - 1
        assert hits / total >= 0.93

    @pytest.mark.parametrize("sigma", [0.0, 0.5, 1.0, 1.3])
    def test_no_delay_rate(self, sigma):
        dt = 2e-3
        ser = ensemble_mean_square(SimConfig(0.0, sigma, dt, 1.0, 20_000, seed=12, record_every=10))
        fit = fit_decay(ser, (0.0, 1.0))
        bias = abs(euler_mean_square_rate(sigma, dt) - (sigma ** 2 - 2))
        assert abs(fit.rate - (sigma ** 2 - 2)) <= 3 * fit.stderr + bias + 1e-9


class TestFit:
    def test_exact_exponential(self):
        t = np.linspace(0, 3, 31)
        fit = fit_decay(series(t, 2.5 * np.exp(-0.7 * t)))
        assert fit.rate == pytest.approx(-0.7, abs=1e-12)
        assert fit.goodness == pytest.approx(1.0)
        assert fit.window == (0.0, 3.0)

    def test_flat(self):
        t = np.linspace(0, 1, 11)
        assert fit_decay(series(t, np.full(11, 0.3))).rate == pytest.approx(0.0, abs=1e-14)

    def test_window(self):
        t = np.linspace(0, 2, 21)
        y = np.where(t < 1, np.exp(-t), np.exp(-1 - 3 * (t - 1)))
        assert fit_decay(series(t, y), (1.0, 2.0)).rate == pytest.approx(-3.0, abs=1e-10)

    def test_nonpositive(self):
        with pytest.raises(ValueError):
            fit_decay(series([0, 1, 2], [1.0, 0.0, 0.5]))


class TestMonotone:
    def test_deterministic(self):
        assert check_monotone(series([0, 1, 2], [3.0, 2.0, 2.0]), 0.0)
        assert not check_monotone(series([0, 1, 2], [3.0, 2.0, 2.1]), 0.0)

    def test_slack(self):
        s = series([0, 1], [1.0, 1.05], [0.01, 0.01])
        assert check_monotone(s, 3.0) and not check_monotone(s, 2.0)

    def test_oscillatory_regime_fails(self):
        ser = ensemble_mean_square(SimConfig(0.5, 0.0, 0.5 / 50, 10.0, 1))
        assert not check_monotone(ser, 3.0)


class TestLyapunov:
    def test_coefficients(self):
        c = lyapunov_coeffs(ReducedParams(0.25, 0.5))
        assert (c.delta, c.p, c.q) == pytest.approx((2.0, 2.0, 1.5))

    @pytest.mark.parametrize("tau, sigma", [(0.1, 0.3), (0.25, 0.5), (0.6, 0.1), (0.05, 1.2)])
    def test_identities(self, tau, sigma):
        c = lyapunov_coeffs(ReducedParams(tau, sigma))
        assert c.p * tau == pytest.approx(1 / c.delta)
        assert (c.q > 0) == (c.delta > 0.5)

    def test_needs_delay(self):
        with pytest.raises(ValueError):
            lyapunov_coeffs(ReducedParams(0.0, 0.5))

    def test_constant_path(self):
        m, dt, c = 10, 0.025, 1.7
        coeffs = LyapCoeffs(2.0, 2.0, 1.5)
        w = np.full((2, 5 * m + 1), c)
        L = lyapunov_paths(w, m, dt, coeffs)
        tau = m * dt
        np.testing.assert_allclose(L, c * c * (1 + coeffs.q * tau + coeffs.p * tau ** 2 / 2), rtol=1e-13)

    def test_linear_path_quadrature(self):
        # w(t) = t on the grid (history included): check against exact integrals
        m, dt = 8, 0.05
        tau = m * dt
        coeffs = LyapCoeffs(1.0, 0.7, 0.3)
        grid = (np.arange(6 * m + 1) - m) * dt
        L = lyapunov_paths(grid[None, :], m, dt, coeffs)[0]
        t = grid[m:][: L.size] + tau
        t = (np.arange(L.size) + m) * dt
        cur = (t ** 3 - (t - tau) ** 3) / 3
        # int_{t-tau}^t (s - t + tau) (s - tau)^2 ds with a = t - tau
        a = t - tau
        lag = np.array([_lag_exact(ai, tau) for ai in a])
        expected = t ** 2 + coeffs.q * cur + coeffs.p * lag
        # trapezoid error is O(dt^2)
        np.testing.assert_allclose(L, expected, atol=5 * dt ** 2)

    def test_deterministic_descent(self):
        p = ReducedParams(0.25, 0.0)
        cfg = SimConfig(0.25, 0.0, 0.25 / 50, 6.0, 1)
        ls = estimate_lyapunov(cfg, lyapunov_coeffs(p))
        assert np.all(np.diff(ls.L) <= 1e-12)

    def test_rejects_early_times(self):
        cfg = SimConfig(0.25, 0.5, 0.025, 1.0, 10)
        with pytest.raises(ValueError):
            estimate_lyapunov(cfg, lyapunov_coeffs(ReducedParams(0.25, 0.5)), t_min=0.1)

    def test_descent_small_ensemble(self):
        p = ReducedParams(0.25, 0.5)
        cfg = SimConfig(0.25, 0.5, 0.25 / 25, 2.0, 4000, seed=2, record_every=5)
        ls = estimate_lyapunov(cfg, lyapunov_coeffs(p), kappa=0.75)
        assert ls.times[0] == pytest.approx(0.25)
        assert check_lyapunov_descent(ls, 3.0)
        with pytest.raises(ValueError):
            check_lyapunov_descent(estimate_lyapunov(cfg, lyapunov_coeffs(p)))


def _lag_exact(a, tau):
    # int_a^{a+tau} (s - a) (s - tau)^2 ds
    def F(s):
        # antiderivative of (s - a)(s - tau)^2
        return (s ** 4 / 4 - (2 * tau + a) * s ** 3 / 3 + (tau ** 2 + 2 * a * tau) * s ** 2 / 2
                - a * tau ** 2 * s)
    return F(a + tau) - F(a)


class TestForwardBackward:
    def test_trivial_s_zero(self):
        s = series([0, 1], [0.5, 0.2], tau=0.1, sigma=0.5)
        assert forward_backward_check(s, 2.0, [(1.0, 0.0)], 0.0)

    def test_constant_extension(self):
        # y(t - s) for t - s < 0 is y(0); a drop by factor e^4 > e^(2 mu s) must fail
        s = series([0, 0.5], [0.5, 0.5 * math.exp(-4)], tau=0.1, sigma=0.5)
        assert not forward_backward_check(s, 2.0, [(0.5, 0.9)], 0.0)
        assert forward_backward_check(s, 2.0, [(0.5, 1.2)], 0.0)

    def test_violating_mu(self):
        s = series([0, 1], [0.5, 0.2], tau=0.3, sigma=1.0)
        with pytest.raises(ValueError):
            forward_backward_check(s, 1.5, [(1.0, 0.5)])

    def test_small_ensemble(self):
        cfg = SimConfig(0.1, 0.5, 0.01, 3.0, 3000, seed=21, record_every=5)
        ser = ensemble_mean_square(cfg)
        rng = np.random.default_rng(1)
        t = rng.uniform(0, 3, 50)
        s = rng.uniform(0, 1, 50)
        assert forward_backward_check(ser, 2.0, zip(t, s), 3.0)
