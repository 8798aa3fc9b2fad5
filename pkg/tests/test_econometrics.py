"""Tests for GARCH/DCC estimation, forecasting, and seeded simulation."""

import math

import numpy as np
import pytest

from covaropt.econometrics import (
    DccSpec,
    GarchSpec,
    WEEK_DT,
    advance_state,
    dcc_correlation_path,
    discretion_signal,
    fit_dcc,
    fit_gjr,
    forecast_variance,
    gjr_filter,
    simulate_gjr_univariate,
    simulate_physical,
    simulate_risk_neutral,
)
from covaropt.errors import DomainError

TRUE_SPEC = GarchSpec(alpha0=9e-5, alpha1=0.06, alpha2=0.10, alpha3=0.80,
                      kappa=0.05, rate=0.05)


def simulate_series(spec, n, seed):
    z = np.random.default_rng(seed).standard_normal((1, n))
    returns = simulate_gjr_univariate(spec, spec.unconditional_variance, z,
                                      risk_neutral=False)
    return returns[0]


class TestGarchSpec:
    def test_validation(self):
        with pytest.raises(DomainError):
            GarchSpec(0.0, 0.1, 0.1, 0.5, 0.0, 0.05)
        with pytest.raises(DomainError):
            GarchSpec(1e-4, 0.5, 0.2, 0.5, 0.0, 0.05)
        with pytest.raises(DomainError):
            GarchSpec(1e-4, -0.1, 0.0, 0.5, 0.0, 0.05)

    def test_unconditional_variance(self):
        assert TRUE_SPEC.unconditional_variance == pytest.approx(
            9e-5 / (1 - 0.06 - 0.05 - 0.80)
        )


class TestFitGjr:
    def test_recovery_within_three_stderr(self):
        returns = simulate_series(TRUE_SPEC, 5000, seed=7)
        fit = fit_gjr(returns, rate=0.05)
        truth = np.array([TRUE_SPEC.alpha0, TRUE_SPEC.alpha1, TRUE_SPEC.alpha2,
                          TRUE_SPEC.alpha3, TRUE_SPEC.kappa])
        estimate = np.array([fit.spec.alpha0, fit.spec.alpha1, fit.spec.alpha2,
                             fit.spec.alpha3, fit.spec.kappa])
        assert np.all(np.isfinite(fit.stderr))
        for est, tru, se in zip(estimate, truth, fit.stderr):
            assert abs(est - tru) < 3 * se, (est, tru, se)

    def test_constant_variance_limit(self):
        # with zero shock coefficients the likelihood is flat along the
        # alpha0/(1-alpha3) ridge, so only the shock terms and the variance
        # level are identified
        spec = GarchSpec(alpha0=4e-4, alpha1=0.0, alpha2=0.0, alpha3=0.0,
                         kappa=0.0, rate=0.05)
        returns = simulate_series(spec, 4000, seed=11)
        fit = fit_gjr(returns, rate=0.05)
        assert fit.spec.alpha1 < 0.05
        assert fit.spec.alpha2 < 0.08
        assert fit.spec.unconditional_variance == pytest.approx(
            np.var(returns), rel=0.1
        )

    def test_optimum_beats_truth(self):
        returns = simulate_series(TRUE_SPEC, 3000, seed=13)
        fit = fit_gjr(returns, rate=0.05)
        _, _, nll_true = gjr_filter(returns, TRUE_SPEC)
        assert fit.loglik >= -nll_true - 1e-6

    def test_short_series_rejected(self):
        with pytest.raises(DomainError):
            fit_gjr(np.zeros(100), rate=0.05)


def simulate_dcc_panel(specs, dcc, n, seed, standardized=False):
    m = len(specs)
    sigma1 = np.array([s.unconditional_variance for s in specs])
    returns = simulate_physical(specs, dcc, sigma1, np.array(dcc.c_bar),
                                steps=n, paths=1, seed=seed,
                                standardized=standardized)[0]
    return returns


class TestFitDcc:
    def test_static_correlation_recovered(self):
        specs = [GarchSpec(4e-4, 0.0, 0.0, 0.0, 0.0, 0.05) for _ in range(3)]
        c_bar = np.array([[1.0, 0.5, 0.3], [0.5, 1.0, 0.2], [0.3, 0.2, 1.0]])
        dcc = DccSpec(beta1=0.0, beta2=0.0, c_bar=c_bar)
        returns = simulate_dcc_panel(specs, dcc, 3000, seed=3)
        eps = returns - returns.mean(axis=0)
        sigma = np.broadcast_to(returns.var(axis=0), eps.shape)
        fit = fit_dcc(eps, sigma)
        np.testing.assert_allclose(fit.spec.c_bar, c_bar, atol=0.06)
        assert fit.spec.beta1 < 0.05

    def test_dynamic_recovery_within_three_stderr(self):
        specs = [GarchSpec(9e-5, 0.05, 0.08, 0.82, 0.0, 0.05) for _ in range(3)]
        c_bar = np.array([[1.0, 0.45, 0.35], [0.45, 1.0, 0.25], [0.35, 0.25, 1.0]])
        dcc = DccSpec(beta1=0.05, beta2=0.90, c_bar=c_bar)
        returns = simulate_dcc_panel(specs, dcc, 5000, seed=5, standardized=True)
        fits = [fit_gjr(returns[:, i], rate=0.05) for i in range(3)]
        eps = np.column_stack([gjr_filter(returns[:, i], fits[i].spec)[1]
                               for i in range(3)])
        sigma = np.column_stack([gjr_filter(returns[:, i], fits[i].spec)[0]
                                 for i in range(3)])
        fit = fit_dcc(eps, sigma, standardized=True)
        assert abs(fit.spec.beta1 - 0.05) < 3 * max(fit.stderr[0], 1e-3)
        assert abs(fit.spec.beta2 - 0.90) < 3 * max(fit.stderr[1], 1e-3)

    def test_correlation_path_well_formed(self):
        specs = [GarchSpec(9e-5, 0.05, 0.08, 0.82, 0.0, 0.05) for _ in range(3)]
        c_bar = np.array([[1.0, 0.45, 0.35], [0.45, 1.0, 0.25], [0.35, 0.25, 1.0]])
        dcc = DccSpec(beta1=0.1, beta2=0.85, c_bar=c_bar)
        returns = simulate_dcc_panel(specs, dcc, 500, seed=9)
        eps = returns - returns.mean(axis=0)
        sigma = np.column_stack([gjr_filter(returns[:, i], specs[i])[0]
                                 for i in range(3)])
        for standardized in (False, True):
            path = dcc_correlation_path(eps, sigma, dcc, standardized)
            diags = np.einsum("tii->ti", path)
            np.testing.assert_allclose(diags, 1.0, atol=1e-12)
            for t in range(0, 500, 50):
                assert np.linalg.eigvalsh(path[t]).min() >= -1e-10


class TestForecastVariance:
    def test_fixed_point_of_persistence_only_spec(self):
        spec = GarchSpec(alpha0=1e-4, alpha1=0.0, alpha2=0.0, alpha3=0.6,
                         kappa=0.0, rate=0.05)
        stationary = 1e-4 / (1 - 0.6)
        path = forecast_variance(spec, eps_last=0.0, sigma_last=stationary, steps=5)
        np.testing.assert_allclose(path, stationary, rtol=1e-12)

    def test_leverage_asymmetry(self):
        up = forecast_variance(TRUE_SPEC, eps_last=0.03, sigma_last=9e-4, steps=1)
        down = forecast_variance(TRUE_SPEC, eps_last=-0.03, sigma_last=9e-4, steps=1)
        assert down[0] > up[0]

    def test_long_horizon_converges_to_unconditional(self):
        path = forecast_variance(TRUE_SPEC, eps_last=-0.08, sigma_last=5e-3,
                                 steps=400)
        assert path[-1] == pytest.approx(TRUE_SPEC.unconditional_variance, rel=1e-6)
        gaps = np.abs(path - TRUE_SPEC.unconditional_variance)
        assert np.all(np.diff(gaps[:50]) <= 0)


class TestSimulation:
    def setup_joint(self, kappa):
        specs = [GarchSpec(9e-5, 0.05, 0.08, 0.82, kappa, 0.05),
                 GarchSpec(1.2e-4, 0.07, 0.05, 0.80, kappa, 0.05)]
        c_bar = np.array([[1.0, 0.4], [0.4, 1.0]])
        dcc = DccSpec(beta1=0.05, beta2=0.9, c_bar=c_bar)
        sigma1 = np.array([s.unconditional_variance for s in specs])
        return specs, dcc, sigma1

    def test_zero_premium_measures_coincide(self):
        specs, dcc, sigma1 = self.setup_joint(kappa=0.0)
        phys = simulate_physical(specs, dcc, sigma1, np.array(dcc.c_bar),
                                 steps=30, paths=50, seed=17)
        rn = simulate_risk_neutral(specs, dcc, sigma1, np.array(dcc.c_bar),
                                   steps=30, paths=50, seed=17)
        np.testing.assert_array_equal(phys, rn)

    def test_discounted_price_martingale(self):
        specs, dcc, sigma1 = self.setup_joint(kappa=0.08)
        steps, paths = 26, 60000
        rn = simulate_risk_neutral(specs, dcc, sigma1, np.array(dcc.c_bar),
                                   steps=steps, paths=paths, seed=23)
        horizon = steps * WEEK_DT
        gross = np.exp(rn.sum(axis=1))
        for i in range(2):
            ratio = math.exp(-0.05 * horizon) * gross[:, i]
            se = ratio.std() / math.sqrt(paths)
            assert abs(ratio.mean() - 1.0) < 3 * se

    def test_constant_variance_terminal_matches_lognormal(self):
        weekly_var = 0.2**2 / 52
        spec = GarchSpec(weekly_var, 0.0, 0.0, 0.0, 0.0, 0.05)
        z = np.random.default_rng(29).standard_normal((120000, 52))
        returns = simulate_gjr_univariate(spec, weekly_var, z, risk_neutral=True)
        log_terminal = returns.sum(axis=1)
        assert log_terminal.mean() == pytest.approx(
            0.05 - 0.5 * 0.2**2, abs=4 * 0.2 / math.sqrt(120000)
        )
        assert log_terminal.std() == pytest.approx(0.2, rel=0.02)

    def test_seed_determinism(self):
        specs, dcc, sigma1 = self.setup_joint(kappa=0.03)
        a = simulate_physical(specs, dcc, sigma1, np.array(dcc.c_bar),
                              steps=10, paths=20, seed=31)
        b = simulate_physical(specs, dcc, sigma1, np.array(dcc.c_bar),
                              steps=10, paths=20, seed=31)
        np.testing.assert_array_equal(a, b)

    def test_simulated_variances_positive(self):
        specs, dcc, sigma1 = self.setup_joint(kappa=0.05)
        rn = simulate_risk_neutral(specs, dcc, sigma1, np.array(dcc.c_bar),
                                   steps=100, paths=200, seed=37)
        assert np.all(np.isfinite(rn))


class TestDiscretionSignal:
    def test_all_lower(self):
        specs = [GarchSpec(1e-4, 0.05, 0.05, 0.7, 0.0, 0.05) for _ in range(4)]
        # tiny shocks, variance far above stationary level: forecasts fall
        sigma = np.full(4, 0.01)
        eps = np.zeros(4)
        assert discretion_signal(specs, eps, sigma) is False

    def test_exact_half_is_false(self):
        specs = [GarchSpec(1e-4, 0.05, 0.05, 0.7, 0.0, 0.05) for _ in range(4)]
        sigma = np.array([0.01, 0.01, 1e-5, 1e-5])
        eps = np.zeros(4)
        higher = [forecast_variance(s, e, v, 1)[0] > v
                  for s, e, v in zip(specs, eps, sigma)]
        assert sum(higher) == 2
        assert discretion_signal(specs, eps, sigma) is False

    def test_post_crash_true(self):
        spec = GarchSpec(9e-5, 0.05, 0.25, 0.70, 0.0, 0.05)
        specs = [spec] * 5
        stationary = spec.unconditional_variance
        eps = np.full(5, -6 * math.sqrt(stationary))
        sigma = np.full(5, stationary)
        assert discretion_signal(specs, eps, sigma) is True


class TestAdvanceState:
    def test_one_step_consistency(self):
        specs, dcc, _ = TestSimulation().setup_joint(kappa=0.0), None, None
        specs, dcc, sigma_last = TestSimulation().setup_joint(kappa=0.0)
        eps_last = np.array([0.01, -0.02])
        sigma1, d1 = advance_state(specs, dcc, eps_last, sigma_last)
        for i, spec in enumerate(specs):
            assert sigma1[i] == pytest.approx(
                forecast_variance(spec, eps_last[i], sigma_last[i], 1)[0]
            )
        expected_d1 = dcc.c_bar * (1 - 0.05 - 0.9) \
            + 0.05 * np.outer(eps_last, eps_last) + 0.9 * dcc.c_bar
        np.testing.assert_allclose(d1, expected_d1, atol=1e-15)
