"""Scenario analysis, important-asset selection, and weekly strategy backtests.

The weekly loop follows the rebalance accounting: the portfolio is marked
with longs at ask and shorts at bid (so a zero-turnover week books no
phantom spread P&L), cash accrues at the risk-free rate, parameters are
re-estimated from expanding history, systemically important assets are
re-selected, and the cone program is re-solved with bounds scaled to
current wealth.  An infeasible week holds the previous portfolio and is
logged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform

from . import econometrics
from .econometrics import DccSpec, GarchSpec, WEEK_DT, advance_state, fit_dcc, fit_gjr
from .errors import DomainError, FactorizationError, SingularSubmatrixError
from .instruments import (
    GreekSet,
    OptionContract,
    aggregate_greeks,
    garch_mc_price,
)
from .market import DistressEvent, MarketModel
from .risk import Portfolio
from .socp import OmegaBounds, assemble_program, p1_matrices, solve, split_solution


# ---------------------------------------------------------------------------
# Systemically important assets
# ---------------------------------------------------------------------------

def identify_sia(correlation: np.ndarray, n_cohorts: int) -> tuple[int, ...]:
    """Cluster stocks on correlation distance and pick one leader per cohort.

    Average-linkage agglomerative clustering on distance ``1 - rho``; within
    each cohort the stock with the largest total correlation to all other
    stocks is selected.
    """
    corr = np.asarray(correlation, dtype=float)
    m = corr.shape[0]
    if n_cohorts > m:
        raise DomainError("cannot form more cohorts than stocks")
    if n_cohorts == m:
        return tuple(range(m))
    dist = 1.0 - corr
    np.fill_diagonal(dist, 0.0)
    dist = np.clip(0.5 * (dist + dist.T), 0.0, None)
    labels = fcluster(linkage(squareform(dist, checks=False), method="average"),
                      n_cohorts, criterion="maxclust")
    importance = corr.sum(axis=1) - 1.0
    picks = []
    for cohort in np.unique(labels):
        members = np.flatnonzero(labels == cohort)
        picks.append(int(members[np.argmax(importance[members])]))
    return tuple(sorted(picks))


def select_control_targets(
    correlation: np.ndarray,
    prior_weights: np.ndarray | None,
    n_cohorts: int,
    n_targets: int | None = None,
) -> tuple[int, ...]:
    """Event set for control strategies: cluster leaders ranked by weight.

    Clustering proposes one candidate per cohort; when prior portfolio
    weights are supplied the candidates are re-ranked by weight and the top
    ``n_targets`` kept, otherwise all candidates are used.
    """
    candidates = identify_sia(correlation, n_cohorts)
    if prior_weights is None or n_targets is None or n_targets >= len(candidates):
        return candidates
    ranked = sorted(candidates, key=lambda i: -float(prior_weights[i]))
    return tuple(sorted(ranked[:n_targets]))


# ---------------------------------------------------------------------------
# Scenario sweep
# ---------------------------------------------------------------------------

def scenario_sweep(
    model: MarketModel,
    event: DistressEvent,
    greeks: Sequence[GreekSet],
    portfolios: Sequence[tuple[str, Portfolio]],
    lambdas: np.ndarray | None = None,
) -> list[tuple[float, str, float]]:
    """Portfolio values across depression-to-boom scenarios.

    The distressed stocks move linearly from minus to plus their loss
    levels as lambda runs 0 to 1; the survivors sit at their regression
    (conditional-mean) fill.  Values revalue options by the quadratic
    delta-gamma-theta expansion from initial wealth 1.
    """
    if lambdas is None:
        lambdas = np.linspace(0.0, 1.0, 51)
    ii = list(event.distressed)
    jj = list(event.complement)
    sig = model.sigma
    sig_ii = sig[np.ix_(ii, ii)]
    rows = []
    aggregates = [
        (name, aggregate_greeks(greeks, pf.x, pf.y)) for name, pf in portfolios
    ]
    for lam in lambdas:
        dp = np.empty(model.n_stocks)
        dp_i = (2.0 * lam - 1.0) * event.k
        dp[ii] = dp_i
        if jj:
            shift = np.linalg.solve(sig_ii, dp_i - model.mu[ii])
            dp[jj] = model.mu[jj] + sig[np.ix_(jj, ii)] @ shift
        for name, (delta, gamma, theta) in aggregates:
            change = float(delta @ dp + 0.5 * dp @ gamma @ dp + theta * model.dt)
            rows.append((float(lam), name, 1.0 + change))
    return rows


# ---------------------------------------------------------------------------
# Performance metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PerformanceMetrics:
    """Weekly-return summary; ratio fields are None when undefined."""

    mean: float
    std: float
    minimum: float
    avg_drawdown: float
    up_ratio: float | None
    ds_ratio: float | None

    def as_dict(self) -> dict:
        def mark(v):
            return "undefined" if v is None else v
        return {
            "Mean": self.mean, "Std": self.std, "Min": self.minimum,
            "ADD": self.avg_drawdown, "UP_ratio": mark(self.up_ratio),
            "DS_ratio": mark(self.ds_ratio),
        }


def performance_metrics(returns: np.ndarray, rate_per_period: float) -> PerformanceMetrics:
    """Mean, dispersion, minimum, average drawdown, and the two tail ratios.

    Average drawdown is the mean shortfall of the unit-initial value path
    from its running peak; the upside potential ratio divides expected
    excess gains by the downside root-mean-square; the downside Sharpe
    ratio uses twice the below-mean semivariance as its denominator.
    Degenerate (zero-dispersion) denominators yield None.
    """
    returns = np.asarray(returns, dtype=float)
    if returns.shape[0] < 2:
        raise DomainError("need at least two return observations")
    values = np.concatenate([[1.0], np.cumprod(1.0 + returns)])
    peaks = np.maximum.accumulate(values)
    drawdowns = (peaks - values) / peaks
    excess = returns - rate_per_period
    # zero-dispersion guard, relative so that round-off on a constant
    # series still reads as degenerate
    floor = (1e-12 * max(1.0, float(np.abs(returns).max()))) ** 2
    up = np.mean(np.maximum(excess, 0.0))
    down_sq = np.mean(np.minimum(excess, 0.0) ** 2)
    up_ratio = None if down_sq < floor else float(up / math.sqrt(down_sq))
    semivar = np.mean(np.minimum(returns - returns.mean(), 0.0) ** 2)
    ds_ratio = None if semivar < floor else \
        float((returns.mean() - rate_per_period) / math.sqrt(2.0 * semivar))
    return PerformanceMetrics(
        mean=float(returns.mean()),
        std=float(returns.std(ddof=1)),
        minimum=float(returns.min()),
        avg_drawdown=float(drawdowns[1:].mean()),
        up_ratio=up_ratio,
        ds_ratio=ds_ratio,
    )


# ---------------------------------------------------------------------------
# Strategies and data feeds
# ---------------------------------------------------------------------------

STRATEGY_KINDS = ("stock", "stock_control", "optioned", "optioned_control",
                  "discretion_stock", "discretion_optioned")


@dataclass(frozen=True)
class Strategy:
    """Weekly-rebalanced strategy configuration.

    ``rho_bar`` may be a float or "minimal" (solve the week's minimum
    systemic risk and bind there).  Control strategies need cohort/event
    sizing; discretion strategies switch between a risk-on and a risk-off
    leg on the variance-forecast majority signal.
    """

    kind: str
    sigma_bar: float = 0.1
    rho_bar: float | str | None = None
    risk_mode: str = "normal"
    bound_fraction: float = 0.1          # per-name cap as a share of wealth
    option_budget_fraction: float | None = 0.3
    n_cohorts: int = 2
    n_targets: int | None = None
    risk_off_sigma_bar: float = 0.02     # discretion_stock tight leg

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise DomainError(f"unknown strategy kind {self.kind!r}")
        if self.kind.endswith("control") and self.rho_bar is None:
            raise DomainError("control strategies need a systemic risk bound")

    @property
    def uses_options(self) -> bool:
        return self.kind in ("optioned", "optioned_control", "discretion_optioned")

    @property
    def controlled(self) -> bool:
        return self.kind in ("stock_control", "optioned_control")


@dataclass(frozen=True)
class WeekData:
    """Everything the loop needs at one rebalance date."""

    week: int
    prices: np.ndarray                       # stock prices
    returns_history: np.ndarray              # all weekly log returns up to now
    contracts: tuple[OptionContract, ...]    # current tradable menu
    greeks: tuple[GreekSet, ...]
    menu_epoch: int                          # bumps when the menu is replaced
    prev_menu_ask: np.ndarray | None = None  # liquidation prices at a roll
    prev_menu_bid: np.ndarray | None = None


class SimulatedFeed:
    """Self-contained market: one multivariate GARCH path plus priced options.

    Generates a burn-in history followed by the backtest window, optionally
    shifting the shock innovations over a window of weeks (a stress
    scenario).  Each week the menu holds ATM and 20% OTM calls and puts per
    stock, struck at the latest roll date with 1.5-year expiry and replaced
    yearly; prices and finite-difference Greeks come from the risk-neutral
    Monte Carlo pricer under the generating dynamics.
    """

    def __init__(
        self,
        specs: Sequence[GarchSpec],
        dcc: DccSpec,
        history_weeks: int,
        backtest_weeks: int,
        seed: int,
        shock_window: tuple[int, int] | None = None,
        shock_shift: float = 0.0,
        spread: float = 0.0,
        pricing_paths: int = 2000,
        initial_prices: np.ndarray | None = None,
    ):
        self.specs = list(specs)
        self.dcc = dcc
        self.m = len(specs)
        self.history_weeks = history_weeks
        self.backtest_weeks = backtest_weeks
        self.spread = spread
        self.pricing_paths = pricing_paths
        self.seed = seed
        total = history_weeks + backtest_weeks + 1
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((1, total, self.m))
        if shock_window is not None and shock_shift:
            lo = history_weeks + shock_window[0]
            hi = history_weeks + shock_window[1]
            z[0, lo:hi, :] -= shock_shift
        sigma1 = np.array([s.unconditional_variance for s in self.specs])
        self.returns = econometrics.simulate_physical(
            self.specs, dcc, sigma1, np.array(dcc.c_bar),
            steps=total, paths=1, seed=seed, z=z,
        )[0]
        p0 = np.ones(self.m) if initial_prices is None else np.asarray(initial_prices)
        self.prices = p0 * np.exp(np.cumsum(self.returns, axis=0))
        # state paths consistent with generation, one filter per stock
        self.sigma_path = np.empty((total, self.m))
        self.eps_path = np.empty((total, self.m))
        for i, spec in enumerate(self.specs):
            sig, eps, _ = econometrics.gjr_filter(
                self.returns[:, i], spec, sigma0=float(sigma1[i])
            )
            self.sigma_path[:, i] = sig
            self.eps_path[:, i] = eps
        self._menu_cache: dict[int, tuple] = {}

    # menu layout: per stock (atm call, atm put, otm call, otm put)
    MENU = (("call", 1.0), ("put", 1.0), ("call", 1.2), ("put", 0.8))

    def _epoch(self, week: int) -> int:
        return week // 52

    def _strikes(self, epoch: int) -> np.ndarray:
        t_idx = self.history_weeks + epoch * 52
        ref = self.prices[t_idx]
        return np.array([[ref[i] * mny for _, mny in self.MENU]
                         for i in range(self.m)])

    def _price_menu(self, week: int, epoch: int):
        """Price the epoch's contracts as seen at the given week."""
        t_idx = self.history_weeks + week
        expiry_week = epoch * 52 + 78          # struck with 1.5 years of life
        weeks_left = expiry_week - week
        strikes = self._strikes(epoch)
        contracts, greeks, asks, bids = [], [], [], []
        for i in range(self.m):
            spot = float(self.prices[t_idx, i])
            sigma1 = econometrics.forecast_variance(
                self.specs[i], float(self.eps_path[t_idx, i]),
                float(self.sigma_path[t_idx, i]), 1,
            )[0]
            seed = self.seed + 7919 * week + 631 * i
            rng = np.random.default_rng(seed)
            z = rng.standard_normal((self.pricing_paths, weeks_left))
            gross = np.exp(np.cumsum(econometrics.simulate_gjr_univariate(
                self.specs[i], float(sigma1), z, risk_neutral=True), axis=1))
            horizon = weeks_left * WEEK_DT
            disc = math.exp(-self.specs[i].rate * horizon)
            disc_short = math.exp(-self.specs[i].rate * (horizon - WEEK_DT))
            bump = 0.01 * spot
            for slot, (kind, _) in enumerate(self.MENU):
                strike = float(strikes[i, slot])
                contract = OptionContract(
                    underlying=i, kind=kind, exercise_style="european",
                    strike=strike, expiry=horizon,
                )
                def value(s, g=gross[:, -1], c=contract, d=disc):
                    return float(d * c.payoff(s * g).mean())
                p0 = value(spot)
                p_up = value(spot + bump)
                p_dn = value(spot - bump)
                p_short = float(disc_short * contract.payoff(
                    spot * gross[:, -2] if weeks_left > 1 else spot * gross[:, -1]
                ).mean())
                delta = (p_up - p_dn) / (2 * bump)
                gamma = (p_up - 2 * p0 + p_dn) / bump**2
                theta = (p_short - p0) / WEEK_DT
                half = 0.5 * self.spread * p0
                contracts.append(OptionContract(
                    underlying=i, kind=kind, exercise_style="european",
                    strike=strike, expiry=horizon,
                    bid=max(p0 - half, 0.0), ask=p0 + half,
                ))
                greeks.append(GreekSet.single(i, self.m, delta, gamma, theta))
                asks.append(p0 + half)
                bids.append(max(p0 - half, 0.0))
        return tuple(contracts), tuple(greeks), np.array(asks), np.array(bids)

    def week(self, week: int) -> WeekData:
        t_idx = self.history_weeks + week
        epoch = self._epoch(week)
        key = (week, epoch)
        if key not in self._menu_cache:
            self._menu_cache[key] = self._price_menu(week, epoch)
        contracts, greeks, _, _ = self._menu_cache[key]
        prev_ask = prev_bid = None
        if week > 0 and self._epoch(week - 1) != epoch:
            old_key = (week, epoch - 1)
            if old_key not in self._menu_cache:
                self._menu_cache[old_key] = self._price_menu(week, epoch - 1)
            _, _, prev_ask, prev_bid = self._menu_cache[old_key]
        return WeekData(
            week=week,
            prices=self.prices[t_idx].copy(),
            returns_history=self.returns[: t_idx + 1].copy(),
            contracts=contracts,
            greeks=greeks,
            menu_epoch=epoch,
            prev_menu_ask=prev_ask,
            prev_menu_bid=prev_bid,
        )

    @property
    def rate(self) -> float:
        return self.specs[0].rate


# ---------------------------------------------------------------------------
# Weekly loop
# ---------------------------------------------------------------------------

@dataclass
class WeekRecord:
    """One row of the loop ledger.

    ``mark_ask``/``mark_bid`` are the prices used to mark the PREVIOUS
    week's option holdings in this week's value (the liquidation prices at
    a menu roll), which makes the accounting identity checkable row by row.
    """

    week: int
    value: float
    cash: float
    x: np.ndarray
    y: np.ndarray
    prices: np.ndarray
    mark_ask: np.ndarray
    mark_bid: np.ndarray
    solved: bool
    risk_off: bool = False


@dataclass(frozen=True)
class BacktestReport:
    """Value path, weekly returns, metric set, and the full ledger of weeks."""

    values: np.ndarray
    returns: np.ndarray
    metrics: PerformanceMetrics
    records: tuple[WeekRecord, ...]
    infeasible_weeks: tuple[int, ...]
    max_drawdown: float

    def self_financing_residual(self, rate: float) -> float:
        """Worst absolute gap in the week-over-week accounting identity."""
        worst = 0.0
        for prev, cur in zip(self.records, self.records[1:]):
            if prev.x.size:
                long_part = float(cur.mark_ask @ np.maximum(prev.x, 0.0))
                short_part = float(cur.mark_bid @ np.minimum(prev.x, 0.0))
            else:
                long_part = short_part = 0.0
            recomputed = long_part + short_part + float(cur.prices @ prev.y) \
                + prev.cash * (1.0 + rate * WEEK_DT)
            worst = max(worst, abs(recomputed - cur.value))
        return worst


def _estimate_model(
    history: np.ndarray, prices: np.ndarray, rate: float
) -> tuple[MarketModel, list[GarchSpec], np.ndarray, np.ndarray, DccSpec, np.ndarray]:
    """Weekly price-change moments from the fitted one-step forecasts."""
    m = history.shape[1]
    fits = [fit_gjr(history[:, i], rate=rate) for i in range(m)]
    specs = [f.spec for f in fits]
    eps = np.column_stack([
        econometrics.gjr_filter(history[:, i], specs[i])[1] for i in range(m)
    ])
    sigma = np.column_stack([
        econometrics.gjr_filter(history[:, i], specs[i])[0] for i in range(m)
    ])
    dcc_fit = fit_dcc(eps, sigma)
    eps_last = eps[-1]
    sigma_last = sigma[-1]
    sigma1, d1 = advance_state(specs, dcc_fit.spec, eps_last, sigma_last,
                               dcc_fit.d_last)
    rootd = np.sqrt(np.diag(d1))
    corr1 = d1 / np.outer(rootd, rootd)
    # the raw-innovation recursion can leave a near-rank-one correlation
    # after large shocks; floor its spectrum so the optimization model and
    # its distressed blocks stay invertible
    eigvals, eigvecs = np.linalg.eigh(corr1)
    if eigvals.min() < 1e-6:
        eigvals = np.clip(eigvals, 1e-6, None)
        corr1 = (eigvecs * eigvals) @ eigvecs.T
        scale = np.sqrt(np.diag(corr1))
        corr1 = corr1 / np.outer(scale, scale)
    vol1 = np.sqrt(sigma1)
    ret_mean = np.array([
        rate * WEEK_DT + s.kappa * v - 0.5 * sv
        for s, v, sv in zip(specs, vol1, sigma1)
    ])
    mu = prices * ret_mean
    cov = np.outer(prices, prices) * (np.outer(vol1, vol1) * corr1)
    cov = 0.5 * (cov + cov.T) + 1e-14 * np.eye(m) * float(np.trace(cov))
    model = MarketModel(prices=prices, mu=mu, sigma=cov, dt=WEEK_DT)
    return model, specs, eps_last, sigma_last, dcc_fit.spec, sigma1


def _solve_week(
    model: MarketModel,
    greeks,
    strategy: Strategy,
    event: DistressEvent | None,
    omega: OmegaBounds,
    rho_bar,
    q_conf: float,
):
    events = [event] if event is not None else []
    try:
        mats = p1_matrices(model, events, list(greeks))
    except (SingularSubmatrixError, FactorizationError):
        return None
    if event is not None and rho_bar == "minimal":
        aux = assemble_program(mats, omega, q_conf, None, [None],
                               risk_mode=strategy.risk_mode, objective="min_covar")
        aux_sol = solve(aux)
        if not aux_sol.optimal:
            return None
        rho_bar = -aux_sol.objective + 1e-7 * (1.0 + abs(aux_sol.objective))
    rho_list = [rho_bar] if event is not None else None
    prog = assemble_program(mats, omega, q_conf, strategy.sigma_bar, rho_list,
                            risk_mode=strategy.risk_mode, objective="return")
    sol = solve(prog)
    if not sol.optimal:
        return None
    return split_solution(sol, len(greeks), model.n_stocks)


def run_backtest(
    strategy: Strategy,
    feed,
    weeks: int,
    costs: bool = False,
    p_conf: float = 0.95,
    q_conf: float = 0.95,
    estimate_every: int = 1,
) -> BacktestReport:
    """Run the weekly rebalance loop and summarize performance.

    ``feed.week(t)`` must provide prices, return history, and the option
    menu; ``costs`` switches between the frictionless mark and the
    ask/bid mark with spread-aware rebalance budgeting.
    """
    rate = feed.rate
    records: list[WeekRecord] = []
    infeasible: list[int] = []
    x = np.zeros(0)
    y = None
    cash = 1.0
    value = 1.0
    est = None
    epoch = -1

    for week in range(weeks + 1):
        data = feed.week(week)
        m = data.prices.shape[0]
        if y is None:
            y = np.zeros(m)
        ask = np.array([c.ask for c in data.contracts])
        bid = np.array([c.bid for c in data.contracts])
        if not costs:
            ask = bid = np.array([c.mid for c in data.contracts])

        carried = cash * (1.0 + rate * WEEK_DT) if week > 0 else cash
        mark_ask, mark_bid = ask, bid
        if week > 0:
            if data.menu_epoch != epoch:
                mark_ask = data.prev_menu_ask
                mark_bid = data.prev_menu_bid
                if not costs:
                    mark_ask = mark_bid = 0.5 * (data.prev_menu_ask
                                                 + data.prev_menu_bid)
            option_mark = float(mark_ask @ np.maximum(x, 0.0)
                                + mark_bid @ np.minimum(x, 0.0)) if x.size else 0.0
            value = option_mark + float(data.prices @ y) + carried
            if data.menu_epoch != epoch and x.size:
                carried += option_mark     # roll: old contracts become cash
                x = np.zeros(0)
        epoch = data.menu_epoch

        if week == weeks:
            records.append(WeekRecord(week, value, carried, x.copy(), y.copy(),
                                      data.prices, mark_ask, mark_bid,
                                      solved=False))
            break

        if est is None or week % estimate_every == 0:
            est = _estimate_model(data.returns_history, data.prices, rate)
        model, specs, eps_last, sigma_last, dcc_spec, _ = est
        if est is not None and not np.array_equal(model.prices, data.prices):
            scale_model = MarketModel(
                prices=data.prices,
                mu=model.mu / model.prices * data.prices,
                sigma=model.sigma / np.outer(model.prices, model.prices)
                * np.outer(data.prices, data.prices),
                dt=WEEK_DT,
            )
            model = scale_model

        risk_off = False
        kind = strategy.kind
        if kind in ("discretion_stock", "discretion_optioned"):
            risk_off = econometrics.discretion_signal(specs, eps_last, sigma_last)

        use_options = strategy.uses_options
        sigma_bar = strategy.sigma_bar
        rho_bar = strategy.rho_bar
        want_event = strategy.controlled
        if kind == "discretion_optioned":
            want_event = risk_off
            use_options = True
            rho_bar = strategy.rho_bar if risk_off else None
        elif kind == "discretion_stock":
            use_options = False
            sigma_bar = strategy.risk_off_sigma_bar if risk_off \
                else strategy.sigma_bar
            want_event = False
        week_strategy = strategy if sigma_bar == strategy.sigma_bar else \
            replace(strategy, sigma_bar=sigma_bar)

        greeks = list(data.greeks) if use_options else []
        contracts = list(data.contracts) if use_options else []
        n = len(greeks)
        ask_u = ask[:n] if use_options else np.zeros(0)
        bid_u = bid[:n] if use_options else np.zeros(0)
        x0 = x if (use_options and x.size == n) else np.zeros(n)

        event = None
        if want_event:
            corr = model.correlation
            prior = None
            if strategy.n_targets is not None:
                stock_omega = OmegaBounds.fresh(
                    d_ask=np.zeros(0), d_bid=np.zeros(0), l_d=np.zeros(0),
                    u_d=np.zeros(0), l_p=np.zeros(m),
                    u_p=np.full(m, strategy.bound_fraction * value),
                    k0=value,
                )
                prior_pf = _solve_week(model, [], week_strategy, None,
                                       stock_omega, None, q_conf)
                prior = prior_pf.y if prior_pf is not None else None
            targets = select_control_targets(corr, prior, strategy.n_cohorts,
                                             strategy.n_targets)
            event = DistressEvent.at_var(model, targets, p_conf)

        cap = strategy.bound_fraction * value
        option_cap = None
        if use_options and strategy.option_budget_fraction is not None:
            option_cap = strategy.option_budget_fraction * value
        budget = carried + float(data.prices @ y)
        omega = OmegaBounds(
            k0=budget, x0=x0, d_ask=ask_u, d_bid=bid_u,
            l_d=np.zeros(n), u_d=np.full(n, cap),
            l_p=np.zeros(m), u_p=np.full(m, cap),
            option_budget=option_cap,
        )
        pf = _solve_week(model, greeks, week_strategy, event,
                         omega, rho_bar, q_conf)
        if pf is None:
            infeasible.append(week)
            new_x, new_y = x0, y
        else:
            new_x, new_y = pf.x, pf.y
        cost = float(ask_u @ np.maximum(new_x - x0, 0.0)
                     + bid_u @ np.minimum(new_x - x0, 0.0)) if n else 0.0
        cash = carried - cost - float(data.prices @ (new_y - y))
        x, y = np.asarray(new_x), np.asarray(new_y)
        records.append(WeekRecord(week, value, cash, x.copy(), y.copy(),
                                  data.prices, mark_ask, mark_bid,
                                  solved=pf is not None, risk_off=risk_off))

    values = np.array([r.value for r in records])
    returns = values[1:] / values[:-1] - 1.0
    peaks = np.maximum.accumulate(values)
    max_dd = float(((peaks - values) / peaks).max())
    return BacktestReport(
        values=values,
        returns=returns,
        metrics=performance_metrics(returns, rate * WEEK_DT),
        records=tuple(records),
        infeasible_weeks=tuple(infeasible),
        max_drawdown=max_dd,
    )
