"""Tests for the cone-program solver and the portfolio program builders."""

import math

import numpy as np
import pytest
from scipy.optimize import linprog

from covaropt.instruments import generate_instance
from covaropt.market import DistressEvent, MarketModel, normal_quantile
from covaropt.risk import (
    Portfolio,
    conditional_moments,
    covar_normal_approx,
    unconditional_moments,
)
from covaropt.socp import (
    ConeProgram,
    OmegaBounds,
    SocBlock,
    assemble_program,
    build_p1,
    frontier,
    p1_matrices,
    solve,
    split_solution,
)

TOL = 1e-8


def make_soc(head_coef, head_const, tail_coef, tail_const=None):
    tail_coef = np.atleast_2d(tail_coef)
    if tail_const is None:
        tail_const = np.zeros(tail_coef.shape[0])
    return SocBlock(head_coef=np.asarray(head_coef, dtype=float),
                    head_const=float(head_const),
                    tail_coef=tail_coef.astype(float),
                    tail_const=np.asarray(tail_const, dtype=float))


class TestSolverToys:
    def test_norm_epigraph_with_equality(self):
        # minimize ||x|| subject to x = 1
        prog = ConeProgram.empty(2)
        prog.maximize[1] = -1.0
        prog.add_eq(np.array([1.0, 0.0]), 1.0)
        prog.cones.append(make_soc([0.0, 1.0], 0.0, [[1.0, 0.0]]))
        sol = solve(prog)
        assert sol.optimal
        assert sol.x[0] == pytest.approx(1.0, abs=1e-7)
        assert -sol.objective == pytest.approx(1.0, abs=1e-7)

    def test_soc_projection(self):
        prog = ConeProgram.empty(2)
        prog.maximize[:] = 1.0
        prog.cones.append(make_soc(np.zeros(2), 1.0, np.eye(2)))
        sol = solve(prog)
        assert sol.optimal
        np.testing.assert_allclose(sol.x, math.sqrt(0.5), atol=1e-7)

    def test_unbounded(self):
        prog = ConeProgram.empty(1)
        prog.maximize[:] = 1.0
        prog.lower[:] = 0.0
        assert solve(prog).status == "unbounded"

    def test_infeasible_linear(self):
        prog = ConeProgram.empty(1)
        prog.maximize[:] = 1.0
        prog.add_ub(np.array([-1.0]), -2.0)
        prog.add_ub(np.array([1.0]), 1.0)
        assert solve(prog).status == "infeasible"

    def test_infeasible_conic(self):
        # ||x|| <= 1 and x >= 3
        prog = ConeProgram.empty(1)
        prog.maximize[:] = 0.0
        prog.cones.append(make_soc(np.zeros(1), 1.0, [[1.0]]))
        prog.add_ub(np.array([-1.0]), -3.0)
        assert solve(prog).status == "infeasible"


class TestSolverAgainstSimplexOracle:
    @pytest.mark.parametrize("seed", range(12))
    def test_random_feasible_lp(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(3, 9))
        k = int(rng.integers(2, 7))
        a_ub = rng.normal(size=(k, n))
        x_feas = rng.uniform(0.2, 1.0, size=n)
        b_ub = a_ub @ x_feas + rng.uniform(0.1, 1.0, size=k)
        cost = rng.normal(size=n)

        prog = ConeProgram.empty(n)
        prog.maximize[:] = -cost
        prog.a_ub, prog.b_ub = a_ub, b_ub
        prog.lower[:] = 0.0
        prog.upper[:] = 10.0
        sol = solve(prog)
        assert sol.optimal
        ref = linprog(cost, A_ub=a_ub, b_ub=b_ub, bounds=[(0, 10)] * n,
                      method="highs")
        assert ref.status == 0
        assert -sol.objective == pytest.approx(ref.fun, abs=1e-6)
        assert max(sol.pres, sol.dres, sol.relgap) < TOL

    def test_equality_lp(self):
        rng = np.random.default_rng(99)
        n = 6
        a_eq = rng.normal(size=(2, n))
        x_feas = rng.uniform(0.5, 1.0, size=n)
        b_eq = a_eq @ x_feas
        cost = rng.normal(size=n)
        prog = ConeProgram.empty(n)
        prog.maximize[:] = -cost
        prog.a_eq, prog.b_eq = a_eq, b_eq
        prog.lower[:] = 0.0
        prog.upper[:] = 5.0
        sol = solve(prog)
        ref = linprog(cost, A_eq=a_eq, b_eq=b_eq, bounds=[(0, 5)] * n,
                      method="highs")
        assert sol.optimal and ref.status == 0
        assert -sol.objective == pytest.approx(ref.fun, abs=1e-6)


class TestSolverInvariants:
    def test_weak_duality_along_iterates(self):
        rng = np.random.default_rng(5)
        prog = ConeProgram.empty(4)
        prog.maximize[:] = rng.normal(size=4)
        prog.add_ub(rng.normal(size=4), 2.0)
        prog.cones.append(make_soc(np.zeros(4), 3.0, np.eye(4)))
        sol = solve(prog)
        assert sol.optimal
        # the cone inner product is nonnegative at every iterate; once the
        # embedding residuals vanish it coincides with pcost - dcost
        for _, _, gap in sol.trace:
            assert gap >= -1e-9
        pcost, dcost, gap = sol.trace[-1]
        assert pcost - dcost == pytest.approx(gap, rel=1e-4, abs=1e-7)
        assert dcost <= pcost + 1e-7

    def test_kkt_residuals_reported_below_tol(self):
        rng = np.random.default_rng(8)
        for _ in range(5):
            n = 5
            prog = ConeProgram.empty(n)
            prog.maximize[:] = rng.normal(size=n)
            prog.add_ub(rng.uniform(0.5, 1.5, size=n), 4.0)
            prog.lower[:] = 0.0
            prog.cones.append(make_soc(np.zeros(n), 2.0,
                                       rng.normal(size=(3, n))))
            sol = solve(prog)
            assert sol.optimal
            assert sol.pres < TOL and sol.dres < TOL and sol.relgap < TOL


@pytest.fixture
def small_universe():
    inst = generate_instance(3, 5, seed=11)
    event = DistressEvent.at_var(inst.model, [0], 0.95)
    omega = OmegaBounds.fresh(
        d_ask=inst.option_prices, d_bid=inst.option_prices,
        l_d=0.0, u_d=0.15, l_p=np.zeros(3), u_p=np.full(3, 0.6), k0=1.0,
    )
    return inst, event, omega


class TestBuildP1:
    def test_locked_options_reduce_to_stock_program(self, small_universe):
        inst, event, omega = small_universe
        locked = OmegaBounds.fresh(
            d_ask=omega.d_ask, d_bid=omega.d_bid, l_d=0.0, u_d=0.0,
            l_p=omega.l_p, u_p=omega.u_p, k0=1.0,
        )
        prog = build_p1(inst.model, [event], inst.greeks, locked,
                        q_conf=0.95, sigma_bar=0.03, rho_bars=[0.1])
        sol = solve(prog)
        assert sol.optimal
        pf = split_solution(sol, len(inst.greeks), 3)
        np.testing.assert_allclose(pf.x, 0.0, atol=1e-8)

        stock_prog = build_p1(inst.model, [event], [], OmegaBounds.fresh(
            d_ask=np.zeros(0), d_bid=np.zeros(0), l_d=np.zeros(0),
            u_d=np.zeros(0), l_p=omega.l_p, u_p=omega.u_p, k0=1.0,
        ), q_conf=0.95, sigma_bar=0.03, rho_bars=[0.1])
        stock_sol = solve(stock_prog)
        assert stock_sol.optimal
        assert sol.objective == pytest.approx(stock_sol.objective, abs=1e-6)

    def test_mean_variance_matches_markowitz(self):
        # no risk cone, no budget pressure: max mu'y s.t. ||L y|| <= sigma_bar
        model = MarketModel(
            prices=np.ones(2), mu=np.array([0.004, 0.002]),
            sigma=np.array([[4e-4, 1e-4], [1e-4, 2.25e-4]]), dt=1 / 52,
        )
        sigma_bar = 0.015
        omega = OmegaBounds.fresh(
            d_ask=np.zeros(0), d_bid=np.zeros(0), l_d=np.zeros(0),
            u_d=np.zeros(0), l_p=np.full(2, -np.inf), u_p=np.full(2, np.inf),
            k0=1e6,
        )
        mats = p1_matrices(model, [], [])
        prog = assemble_program(mats, omega, 0.95, sigma_bar, [],
                                objective="return")
        sol = solve(prog, tol=1e-11)
        assert sol.optimal
        inv = np.linalg.inv(model.sigma)
        expected = sigma_bar * math.sqrt(model.mu @ inv @ model.mu)
        assert sol.objective == pytest.approx(expected, rel=1e-6)
        y_closed = sigma_bar * (inv @ model.mu) / math.sqrt(model.mu @ inv @ model.mu)
        np.testing.assert_allclose(sol.x[:2], y_closed, rtol=1e-5)

    def test_zero_spread_theta_equals_linear_budget(self, small_universe):
        inst, event, omega = small_universe
        prog = build_p1(inst.model, [event], inst.greeks, omega,
                        q_conf=0.95, sigma_bar=0.03, rho_bars=[0.05])
        sol = solve(prog)
        assert sol.optimal
        n, m = len(inst.greeks), 3
        pf = split_solution(sol, n, m)
        # direct linear-budget variant: d'x + p'y <= k0
        mats = p1_matrices(inst.model, [event], inst.greeks)
        direct = assemble_program(mats, omega, 0.95, 0.03, [0.05],
                                  objective="return")
        # replace theta rows by pinning theta to d*x via equalities
        for i in range(n):
            row = np.zeros(direct.n_vars)
            row[i] = -omega.d_ask[i]
            row[n + m + i] = 1.0
            direct.add_eq(row, 0.0)
        dsol = solve(direct)
        assert dsol.optimal
        assert sol.objective == pytest.approx(dsol.objective, abs=1e-6)

    def test_worst_case_differs_only_by_multiplier(self, small_universe):
        inst, event, omega = small_universe
        normal = build_p1(inst.model, [event], inst.greeks, omega,
                          q_conf=0.95, sigma_bar=0.03, rho_bars=[0.05],
                          risk_mode="normal")
        worst = build_p1(inst.model, [event], inst.greeks, omega,
                         q_conf=0.95, sigma_bar=0.03, rho_bars=[0.05],
                         risk_mode="worst_case")
        np.testing.assert_array_equal(normal.a_ub, worst.a_ub)
        np.testing.assert_array_equal(normal.b_ub, worst.b_ub)
        assert len(normal.cones) == len(worst.cones) == 2
        # variance cone identical
        np.testing.assert_array_equal(normal.cones[0].tail_coef,
                                      worst.cones[0].tail_coef)
        assert normal.cones[0].head_const == worst.cones[0].head_const
        # risk cone: same tail, heads scaled by alpha_q / kappa_q
        np.testing.assert_array_equal(normal.cones[1].tail_coef,
                                      worst.cones[1].tail_coef)
        alpha = normal_quantile(0.95)
        kappa = math.sqrt(0.95 / 0.05)
        np.testing.assert_allclose(normal.cones[1].head_coef * alpha,
                                   worst.cones[1].head_coef * kappa, atol=1e-14)
        assert normal.cones[1].head_const * alpha == pytest.approx(
            worst.cones[1].head_const * kappa
        )

    def test_worst_case_is_more_conservative(self, small_universe):
        inst, event, omega = small_universe
        sols = {}
        for mode in ("normal", "worst_case"):
            prog = build_p1(inst.model, [event], inst.greeks, omega,
                            q_conf=0.95, sigma_bar=0.03, rho_bars=[0.08],
                            risk_mode=mode)
            sols[mode] = solve(prog)
        assert sols["normal"].optimal and sols["worst_case"].optimal
        assert sols["worst_case"].objective <= sols["normal"].objective + 1e-8


def grid_search_two_stock(model, event, q_conf, sigma_bar, rho_bar, u_p, step=1e-3):
    """Brute-force oracle: scan the weight box at the given resolution."""
    from covaropt.market import conditional_law

    law = conditional_law(model, event)
    jj = list(event.complement)
    ii = list(event.distressed)
    y1 = np.arange(0.0, u_p[0] + step / 2, step)
    y2 = np.arange(0.0, u_p[1] + step / 2, step)
    g1, g2 = np.meshgrid(y1, y2, indexing="ij")
    budget = model.prices[0] * g1 + model.prices[1] * g2 <= 1.0 + 1e-12
    var = (model.sigma[0, 0] * g1**2 + 2 * model.sigma[0, 1] * g1 * g2
           + model.sigma[1, 1] * g2**2)
    ok_var = var <= sigma_bar**2 + 1e-12
    y_j = g1 if jj == [0] else g2
    y_i = g2 if jj == [0] else g1
    covar = (normal_quantile(q_conf) * np.sqrt(law.cond_cov[0, 0]) * np.abs(y_j)
             - law.cond_mean[0] * y_j + event.k[0] * y_i)
    ok_risk = covar <= rho_bar + 1e-12
    ret = model.mu[0] * g1 + model.mu[1] * g2
    feasible = budget & ok_var & ok_risk
    if not feasible.any():
        return None
    return float(ret[feasible].max())


class TestAgainstGridOracle:
    @pytest.mark.parametrize("seed", range(4))
    def test_two_stock_program(self, seed):
        rng = np.random.default_rng(100 + seed)
        vols = rng.uniform(0.015, 0.05, size=2)
        rho = rng.uniform(-0.3, 0.8)
        sigma = np.array([
            [vols[0]**2, rho * vols[0] * vols[1]],
            [rho * vols[0] * vols[1], vols[1]**2],
        ])
        model = MarketModel(np.ones(2), rng.uniform(0.001, 0.006, size=2),
                            sigma, 1 / 52)
        event = DistressEvent.at_var(model, [int(rng.integers(2))], 0.95)
        u_p = np.array([0.8, 0.8])
        sigma_bar = float(rng.uniform(0.015, 0.04))
        rho_bar = float(rng.uniform(0.01, 0.08))
        oracle = grid_search_two_stock(model, event, 0.95, sigma_bar, rho_bar, u_p)
        omega = OmegaBounds.fresh(
            d_ask=np.zeros(0), d_bid=np.zeros(0), l_d=np.zeros(0),
            u_d=np.zeros(0), l_p=np.zeros(2), u_p=u_p, k0=1.0,
        )
        prog = build_p1(model, [event], [], omega, 0.95, sigma_bar, [rho_bar])
        sol = solve(prog)
        if oracle is None:
            assert sol.status in ("infeasible", "optimal")
            if sol.status == "optimal":
                # oracle grid may just miss a thin feasible sliver
                assert sol.objective <= 0.01
            return
        assert sol.optimal
        # grid resolution bounds the upper gap; the oracle's feasibility
        # slack and the solver gap bound the lower one
        step_gap = 2e-3 * float(np.abs(model.mu).max())
        assert sol.objective >= oracle - 1e-7
        assert sol.objective <= oracle + step_gap


class TestFrontier:
    def test_small_grid_properties(self):
        inst = generate_instance(3, 6, seed=21)
        event = DistressEvent.at_var(inst.model, [0], 0.95)
        omega = OmegaBounds.fresh(
            d_ask=inst.option_prices, d_bid=inst.option_prices,
            l_d=0.0, u_d=0.1, l_p=np.zeros(3), u_p=np.full(3, 0.4), k0=1.0,
        )
        result = frontier(inst.model, [event], inst.greeks, omega,
                          q_conf=0.95, grid=5)
        assert len(result.cells) == 25
        assert result.min_covar <= result.max_covar + 1e-9
        by_rho = {}
        for cell in result.cells:
            by_rho.setdefault(cell.rho_bar, []).append(cell)
        # along each risk bound, return is nondecreasing in the vol bound
        for cells in by_rho.values():
            rets = [c.expected_return for c in cells if c.status == "optimal"]
            for a, b in zip(rets, rets[1:]):
                assert b >= a - 1e-6
        # the best return per risk bound is nondecreasing as the bound loosens
        best = [max((c.expected_return for c in cells if c.status == "optimal"),
                    default=-np.inf)
                for _, cells in sorted(by_rho.items())]
        for a, b in zip(best, best[1:]):
            assert b >= a - 1e-6

    def test_optioned_dominates_stock_on_common_grid(self):
        inst = generate_instance(3, 9, seed=31)
        event = DistressEvent.at_var(inst.model, [1], 0.95)
        stock_omega = OmegaBounds.fresh(
            d_ask=np.zeros(0), d_bid=np.zeros(0), l_d=np.zeros(0),
            u_d=np.zeros(0), l_p=np.zeros(3), u_p=np.full(3, 0.4), k0=1.0,
        )
        stock = frontier(inst.model, [event], [], stock_omega, 0.95, grid=4)
        opt_omega = OmegaBounds.fresh(
            d_ask=inst.option_prices, d_bid=inst.option_prices,
            l_d=0.0, u_d=0.1, l_p=np.zeros(3), u_p=np.full(3, 0.4), k0=1.0,
        )
        optioned = frontier(inst.model, [event], inst.greeks, opt_omega, 0.95,
                            grid=4, rho_grid=stock.rho_grid,
                            sigma_grids=stock.sigma_rows)
        assert optioned.min_covar <= stock.min_covar + 1e-7
        for s_cell, o_cell in zip(stock.cells, optioned.cells):
            if s_cell.status == "optimal" and o_cell.status == "optimal":
                assert o_cell.expected_return >= s_cell.expected_return - 1e-6
