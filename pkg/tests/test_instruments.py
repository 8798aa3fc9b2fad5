"""Tests for option pricing, Greeks, and optioned-asset construction."""

import math

import numpy as np
import pytest

from covaropt.econometrics import GarchSpec
from covaropt.errors import DomainError, InfeasibleSystemError
from covaropt.instruments import (
    GbmDynamics,
    GreekSet,
    OptionContract,
    OptionQuote,
    aggregate_greeks,
    bs_price_and_greeks,
    finite_diff_greeks,
    garch_mc_price,
    generate_instance,
    lsmc_american,
    make_optioned_asset,
    zero_correlation_weights,
)
from covaropt.market import MarketModel

# Frozen oracle: quadrature of the discounted lognormal payoff (mpmath,
# 40 digits) for spot=strike=1, vol=0.2, rate=0.05, T=1.
BS_ATM_CALL_ORACLE = 0.1045058357218557


class TestBlackScholes:
    def test_atm_call_against_quadrature_oracle(self):
        price, *_ = bs_price_and_greeks(1.0, 1.0, 0.2, 0.05, 1.0, "call")
        assert price == pytest.approx(BS_ATM_CALL_ORACLE, abs=1e-12)
        assert price == pytest.approx(0.1045, abs=1e-3)

    def test_deep_itm_limit(self):
        price, delta, *_ = bs_price_and_greeks(1.0, 1e-10, 0.2, 0.05, 1.0, "call")
        assert price == pytest.approx(1.0, abs=1e-9)
        assert delta == pytest.approx(1.0, abs=1e-12)

    def test_put_call_parity(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            s = rng.uniform(0.5, 2.0)
            k = rng.uniform(0.5, 2.0)
            vol = rng.uniform(0.05, 0.6)
            r = rng.uniform(0.0, 0.1)
            t = rng.uniform(0.1, 3.0)
            call, *_ = bs_price_and_greeks(s, k, vol, r, t, "call")
            put, *_ = bs_price_and_greeks(s, k, vol, r, t, "put")
            assert call - put == pytest.approx(s - k * math.exp(-r * t), abs=1e-12)

    def test_domain_errors(self):
        for bad in [(0, 1, 0.2, 0.0, 1), (1, -1, 0.2, 0.0, 1),
                    (1, 1, 0.0, 0.0, 1), (1, 1, 0.2, 0.0, 0)]:
            with pytest.raises(DomainError):
                bs_price_and_greeks(*bad, "call")


class TestLsmc:
    def test_american_call_equals_european(self):
        contract = OptionContract(0, "call", "american", strike=1.0, expiry=1.0)
        dyn = GbmDynamics(spot=1.0, rate=0.05, vol=0.2)
        price, se = lsmc_american(20000, 5, dyn, contract, seed=42, with_stderr=True)
        european = bs_price_and_greeks(1.0, 1.0, 0.2, 0.05, 1.0, "call")[0]
        assert abs(price - european) < 2 * se + 1e-12

    def test_american_put_premium_nonnegative(self):
        contract = OptionContract(0, "put", "american", strike=1.0, expiry=1.0)
        dyn = GbmDynamics(spot=1.0, rate=0.05, vol=0.2)
        price = lsmc_american(20000, 5, dyn, contract, seed=7)
        european = bs_price_and_greeks(1.0, 1.0, 0.2, 0.05, 1.0, "put")[0]
        assert price >= european - 1e-4

    def test_zero_vol_immediate_exercise(self):
        contract = OptionContract(0, "put", "american", strike=1.0, expiry=1.0)
        dyn = GbmDynamics(spot=0.8, rate=0.05, vol=0.0)
        price = lsmc_american(2000, 5, dyn, contract, seed=1)
        assert price == pytest.approx(0.2, abs=1e-12)

    def test_low_path_warning(self):
        contract = OptionContract(0, "put", "american", strike=1.0, expiry=1.0)
        dyn = GbmDynamics(spot=1.0, rate=0.05, vol=0.2)
        with pytest.warns(UserWarning):
            lsmc_american(500, 5, dyn, contract, seed=1)


class TestFiniteDiffGreeks:
    def test_matches_analytic_bs(self):
        contract = OptionContract(2, "call", "european", strike=1.1, expiry=0.75)

        def pricer(spot, expiry):
            return bs_price_and_greeks(spot, 1.1, 0.25, 0.03, expiry, "call")[0]

        gset = finite_diff_greeks(pricer, contract, n_stocks=4, spot=1.0, bump=0.01)
        _, delta, gamma, theta = bs_price_and_greeks(1.0, 1.1, 0.25, 0.03, 0.75, "call")
        assert gset.delta[2] == pytest.approx(delta, abs=5e-4)
        assert gset.gamma[2, 2] == pytest.approx(gamma, abs=5e-3)
        assert gset.theta == pytest.approx(theta, rel=0.05)
        assert np.count_nonzero(gset.delta) == 1

    def test_quadratic_convergence(self):
        def pricer(spot, expiry):
            return bs_price_and_greeks(spot, 1.0, 0.2, 0.05, expiry, "call")[0]

        contract = OptionContract(0, "call", "european", strike=1.0, expiry=1.0)
        _, delta, *_ = bs_price_and_greeks(1.0, 1.0, 0.2, 0.05, 1.0, "call")
        errs = []
        for bump in (0.08, 0.04, 0.02):
            gset = finite_diff_greeks(pricer, contract, 1, 1.0, bump=bump)
            errs.append(abs(gset.delta[0] - delta))
        assert errs[1] < errs[0] / 3.0
        assert errs[2] < errs[1] / 3.0

    def test_forward_delta_and_stock_gamma(self):
        contract = OptionContract(0, "call", "european", strike=1e-9, expiry=1.0)

        def forward_pricer(spot, expiry):
            return bs_price_and_greeks(spot, 1e-9, 0.2, 0.0, expiry, "call")[0]

        gset = finite_diff_greeks(forward_pricer, contract, 1, 1.0)
        assert gset.delta[0] == pytest.approx(1.0, abs=1e-9)

        stock = finite_diff_greeks(lambda s, t: s, contract, 1, 1.0)
        assert stock.gamma[0, 0] == pytest.approx(0.0, abs=1e-9)


class TestGarchMcPrice:
    def test_constant_variance_matches_bs(self):
        weekly_var = 0.2**2 / 52
        spec = GarchSpec(alpha0=weekly_var, alpha1=0.0, alpha2=0.0, alpha3=0.0,
                         kappa=0.3, rate=0.05)
        contract = OptionContract(0, "call", "european", strike=1.0, expiry=1.0)
        price, se = garch_mc_price(contract, spec, spot=1.0, sigma1=weekly_var,
                                   paths=40000, seed=5, with_stderr=True)
        bs = bs_price_and_greeks(1.0, 1.0, 0.2, 0.05, 1.0, "call")[0]
        assert abs(price - bs) < 3 * se

    def test_zero_variance_limit(self):
        spec = GarchSpec(alpha0=1e-30, alpha1=0.0, alpha2=0.0, alpha3=0.0,
                         kappa=0.0, rate=0.05)
        contract = OptionContract(0, "call", "european", strike=0.9, expiry=1.0)
        price = garch_mc_price(contract, spec, spot=1.0, sigma1=1e-30,
                               paths=11000, seed=2)
        forward = 1.0 * math.exp(0.05)
        assert price == pytest.approx(math.exp(-0.05) * (forward - 0.9), abs=1e-9)

    def test_seed_determinism(self):
        spec = GarchSpec(alpha0=1e-4, alpha1=0.05, alpha2=0.05, alpha3=0.85,
                         kappa=0.1, rate=0.05)
        contract = OptionContract(0, "put", "european", strike=1.0, expiry=0.5)
        a = garch_mc_price(contract, spec, 1.0, 2e-4, paths=12000, seed=9)
        b = garch_mc_price(contract, spec, 1.0, 2e-4, paths=12000, seed=9)
        assert a == b


@pytest.fixture
def three_stock_model():
    corr = np.array([[1.0, 0.5, 0.4], [0.5, 1.0, 0.3], [0.4, 0.3, 1.0]])
    vol = np.array([0.02, 0.03, 0.025])
    return MarketModel(
        prices=np.ones(3),
        mu=np.array([0.002, 0.001, 0.0015]),
        sigma=np.outer(vol, vol) * corr,
        dt=1 / 52,
    )


def _bs_quote(vol, strike, kind, rate=0.05):
    price, delta, gamma, theta = bs_price_and_greeks(1.0, strike, vol, rate, 1.0, kind)
    return OptionQuote(price=price, delta=delta, gamma=gamma, theta=theta)


class TestOptionedAsset:
    def test_pure_stock_identity(self, three_stock_model):
        asset = make_optioned_asset(three_stock_model, 0, [], delta=1.0, gamma=0.0)
        assert asset.stock_amount == pytest.approx(1.0, abs=1e-12)
        assert asset.delta == pytest.approx(1.0)
        assert asset.gamma == 0.0

    def test_delta_gamma_neutral_kills_covariance(self, three_stock_model):
        from covaropt.risk import optioned_asset_covariance

        quotes = [_bs_quote(0.2, 0.9, "call"), _bs_quote(0.2, 1.0, "put"),
                  _bs_quote(0.2, 1.15, "call")]
        neutral = make_optioned_asset(three_stock_model, 0, quotes,
                                      delta=0.0, gamma=0.0)
        assert neutral.delta == pytest.approx(0.0, abs=1e-10)
        assert neutral.gamma == pytest.approx(0.0, abs=1e-10)
        other = make_optioned_asset(three_stock_model, 1, [], delta=1.0, gamma=0.0)
        cov = optioned_asset_covariance(neutral, other, three_stock_model)
        assert abs(cov) < 1e-12

    def test_targets_recombine(self, three_stock_model):
        # different implied vols per quote: otherwise the pricing PDE ties
        # theta to (price, delta, gamma) and the theta row is redundant
        quotes = [_bs_quote(0.2, 0.95, "call"), _bs_quote(0.25, 1.05, "put"),
                  _bs_quote(0.3, 1.1, "call"), _bs_quote(0.35, 0.9, "put")]
        asset = make_optioned_asset(three_stock_model, 1, quotes,
                                    delta=0.4, gamma=-1.2, theta=0.02)
        assert asset.delta == pytest.approx(0.4, abs=1e-9)
        assert asset.gamma == pytest.approx(-1.2, abs=1e-9)
        assert asset.theta == pytest.approx(0.02, abs=1e-9)
        value = asset.stock_amount * asset.price + sum(
            a * q.price for a, q in zip(asset.option_amounts, asset.quotes)
        )
        assert value == pytest.approx(asset.price, rel=1e-9)

    def test_infeasible_menu(self, three_stock_model):
        with pytest.raises(InfeasibleSystemError):
            make_optioned_asset(three_stock_model, 0, [], delta=0.0, gamma=1.0)

    def test_long_stock_guard(self, three_stock_model):
        quotes = [_bs_quote(0.2, 0.9, "call"), _bs_quote(0.2, 1.0, "put"),
                  _bs_quote(0.2, 1.15, "call")]
        asset = make_optioned_asset(three_stock_model, 0, quotes, delta=0.0,
                                    gamma=0.0, long_stock_only=True)
        assert asset.stock_amount >= -1e-12


class TestZeroCorrelationWeights:
    def test_independent_stocks_trivial(self):
        model = MarketModel(np.ones(2), np.zeros(2), np.diag([4e-4, 9e-4]), 1 / 52)
        result = zero_correlation_weights(model, [[], []])
        assert result.residual_norm < 1e-12
        assert result.avg_abs_corr < 1e-12
        np.testing.assert_allclose(result.weights[0], [1.0], atol=1e-10)

    def test_residual_reproduced_by_closed_form(self, three_stock_model):
        from covaropt.risk import optioned_asset_covariance

        menus = [
            [_bs_quote(0.2, 0.9, "call"), _bs_quote(0.2, 1.1, "put")],
            [_bs_quote(0.3, 1.0, "call"), _bs_quote(0.3, 0.95, "put")],
            [_bs_quote(0.25, 1.05, "call"), _bs_quote(0.25, 0.9, "put")],
        ]
        result = zero_correlation_weights(three_stock_model, menus)
        vols = np.sqrt(np.diag(three_stock_model.sigma))
        recomputed = []
        for i in range(3):
            for j in range(i + 1, 3):
                cov = optioned_asset_covariance(result.assets[i], result.assets[j],
                                                three_stock_model)
                recomputed.append(cov / (vols[i] * vols[j]))
        assert np.linalg.norm(recomputed) == pytest.approx(
            result.residual_norm, abs=1e-8
        )

    def test_more_options_reduce_correlation(self, three_stock_model):
        menus0 = [[], [], []]
        base = zero_correlation_weights(three_stock_model, menus0)
        menus1 = [
            [_bs_quote(0.2, 0.9, "call")],
            [_bs_quote(0.3, 1.0, "put")],
            [_bs_quote(0.25, 1.05, "call")],
        ]
        one = zero_correlation_weights(three_stock_model, menus1)
        menus2 = [m + [_bs_quote(0.22, 1.1, "put"), _bs_quote(0.21, 0.95, "call")]
                  for m in menus1]
        two = zero_correlation_weights(three_stock_model, menus2)
        assert one.avg_abs_corr <= base.avg_abs_corr + 1e-9
        assert two.avg_abs_corr <= one.avg_abs_corr + 1e-9


class TestGenerateInstance:
    def test_reproducible_and_in_range(self):
        inst1 = generate_instance(10, 25, seed=7)
        inst2 = generate_instance(10, 25, seed=7)
        np.testing.assert_array_equal(inst1.model.sigma, inst2.model.sigma)
        assert [c.strike for c in inst1.contracts] == [c.strike for c in inst2.contracts]
        assert np.all(inst1.model.prices == 1.0)
        assert np.all((inst1.annual_vols >= 0.1) & (inst1.annual_vols <= 0.3))
        for c in inst1.contracts:
            assert 0.8 <= c.strike <= 1.2
            assert c.expiry == 1.0
        # correlation factor is row-normalized: unit diagonal of corr
        corr = inst1.model.correlation
        np.testing.assert_allclose(np.diag(corr), 1.0, atol=1e-12)
        assert np.linalg.eigvalsh(corr).min() > 0

    def test_mean_follows_vol(self):
        inst = generate_instance(6, 0, seed=3)
        ann_mu = inst.model.mu / inst.model.dt
        np.testing.assert_allclose(ann_mu, 0.15 + 0.5 * inst.annual_vols, atol=1e-12)


class TestAggregateGreeks:
    def test_linearity(self):
        g1 = GreekSet.single(0, 2, 0.5, 2.0, -0.1)
        g2 = GreekSet.single(1, 2, -0.4, 1.0, -0.05)
        delta, gamma, theta = aggregate_greeks([g1, g2], np.array([2.0, 3.0]),
                                               np.array([1.0, 1.0]))
        np.testing.assert_allclose(delta, [1.0 + 1.0, 1.0 - 1.2])
        np.testing.assert_allclose(np.diag(gamma), [4.0, 3.0])
        assert theta == pytest.approx(-0.35)
