"""Option contracts, Greeks, pricing engines, and optioned-asset construction.

An *optioned asset* packages one stock with options written on it,
normalized so the package price equals the stock price; its composite
Greeks determine both its return profile and its covariance with every
other asset.  This module builds such assets by solving small linear
replication systems and, at portfolio level, solves for weights that drive
all pairwise optioned-asset correlations to zero.

Pricing engines: analytic Black-Scholes (European), least-squares Monte
Carlo (American), and a GARCH Monte Carlo pricer driven by the
risk-neutral dynamics of :mod:`covaropt.econometrics`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import pandas as pd
from scipy.optimize import least_squares, lsq_linear

from . import econometrics
from .errors import DomainError, InfeasibleSystemError
from .market import MarketModel, normal_cdf, normal_pdf


@dataclass(frozen=True)
class OptionContract:
    """Terms of a single listed option."""

    underlying: int
    kind: str                 # "call" | "put"
    exercise_style: str       # "european" | "american"
    strike: float
    expiry: float             # years
    bid: float = 0.0
    ask: float = 0.0

    def __post_init__(self):
        if self.kind not in ("call", "put"):
            raise DomainError(f"unknown option kind {self.kind!r}")
        if self.exercise_style not in ("european", "american"):
            raise DomainError(f"unknown exercise style {self.exercise_style!r}")
        if self.strike <= 0 or self.expiry <= 0:
            raise DomainError("strike and expiry must be positive")
        if not 0 <= self.bid <= self.ask:
            raise DomainError("prices must satisfy ask >= bid >= 0")

    @property
    def mid(self) -> float:
        return 0.5 * (self.bid + self.ask)

    def payoff(self, spot):
        spot = np.asarray(spot, dtype=float)
        if self.kind == "call":
            return np.maximum(spot - self.strike, 0.0)
        return np.maximum(self.strike - spot, 0.0)


@dataclass(frozen=True)
class GreekSet:
    """First/second-order price sensitivities of one option over the universe.

    ``delta`` is a length-m vector and ``gamma`` an m-by-m symmetric matrix;
    for single-underlying options both are zero except in the underlying's
    entry.  ``theta`` is the calendar decay per year.
    """

    delta: np.ndarray
    gamma: np.ndarray
    theta: float

    def __post_init__(self):
        delta = np.array(self.delta, dtype=float)
        gamma = np.array(self.gamma, dtype=float)
        if gamma.shape != (delta.shape[0], delta.shape[0]):
            raise DomainError("gamma must be square and match delta's length")
        if np.abs(gamma - gamma.T).max(initial=0.0) > 1e-10 * max(
            1.0, np.abs(gamma).max(initial=0.0)
        ):
            raise DomainError("gamma must be symmetric")
        delta.setflags(write=False)
        gamma.setflags(write=False)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "gamma", gamma)

    @classmethod
    def single(
        cls, underlying: int, n_stocks: int, delta: float, gamma: float, theta: float
    ) -> "GreekSet":
        dvec = np.zeros(n_stocks)
        gmat = np.zeros((n_stocks, n_stocks))
        dvec[underlying] = delta
        gmat[underlying, underlying] = gamma
        return cls(delta=dvec, gamma=gmat, theta=float(theta))


def aggregate_greeks(
    greeks: Sequence[GreekSet], x: np.ndarray, y: np.ndarray
) -> tuple[np.ndarray, np.ndarray, float]:
    """Portfolio-level (delta, gamma, theta): option exposures plus stock holdings."""
    y = np.asarray(y, dtype=float)
    m = y.shape[0]
    delta = y.copy()
    gamma = np.zeros((m, m))
    theta = 0.0
    for xi, g in zip(np.asarray(x, dtype=float), greeks):
        if xi == 0.0:
            continue
        delta = delta + xi * g.delta
        gamma = gamma + xi * g.gamma
        theta += xi * g.theta
    return delta, gamma, theta


# ---------------------------------------------------------------------------
# Pricing engines
# ---------------------------------------------------------------------------

def bs_price_and_greeks(
    spot: float, strike: float, vol: float, rate: float, expiry: float, kind: str
) -> tuple[float, float, float, float]:
    """Black-Scholes European price with analytic delta, gamma, and theta.

    Theta is the calendar decay ``d(price)/dt`` per year (usually negative
    for long options).
    """
    if spot <= 0 or strike <= 0 or vol <= 0 or expiry <= 0:
        raise DomainError("spot, strike, vol, and expiry must be positive")
    if kind not in ("call", "put"):
        raise DomainError(f"unknown option kind {kind!r}")
    sqt = vol * math.sqrt(expiry)
    d1 = (math.log(spot / strike) + (rate + 0.5 * vol * vol) * expiry) / sqt
    d2 = d1 - sqt
    disc = math.exp(-rate * expiry)
    gamma = normal_pdf(d1) / (spot * sqt)
    decay = -spot * normal_pdf(d1) * vol / (2.0 * math.sqrt(expiry))
    if kind == "call":
        price = spot * normal_cdf(d1) - strike * disc * normal_cdf(d2)
        delta = normal_cdf(d1)
        theta = decay - rate * strike * disc * normal_cdf(d2)
    else:
        price = strike * disc * normal_cdf(-d2) - spot * normal_cdf(-d1)
        delta = normal_cdf(d1) - 1.0
        theta = decay + rate * strike * disc * normal_cdf(-d2)
    return price, delta, gamma, theta


@dataclass(frozen=True)
class GbmDynamics:
    """Lognormal risk-neutral dynamics for the Monte Carlo pricers."""

    spot: float
    rate: float
    vol: float

    def sample_paths(
        self, rng: np.random.Generator, n_paths: int, n_steps: int, horizon: float
    ) -> np.ndarray:
        dt = horizon / n_steps
        z = rng.standard_normal((n_paths, n_steps))
        increments = (self.rate - 0.5 * self.vol**2) * dt + self.vol * math.sqrt(dt) * z
        log_paths = np.cumsum(increments, axis=1)
        paths = np.empty((n_paths, n_steps + 1))
        paths[:, 0] = self.spot
        paths[:, 1:] = self.spot * np.exp(log_paths)
        return paths


def _poly_fit_eval(x: np.ndarray, y: np.ndarray, degree: int) -> np.ndarray:
    basis = np.vander(x, degree + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
    return basis @ coef


def lsmc_american(
    paths: int,
    steps: int,
    dynamics,
    contract: OptionContract,
    seed: int | None = 0,
    degree: int = 2,
    with_stderr: bool = False,
):
    """Longstaff-Schwartz price of an American option.

    Continuation values are regressed on in-the-money paths with a
    polynomial basis (default degree 2 in spot).  Immediate exercise at
    time zero is included via a final max with intrinsic value.
    """
    if paths < 1000:
        warnings.warn("fewer than 1000 paths: LSMC estimate will be noisy", stacklevel=2)
    if steps < 2:
        raise DomainError("LSMC needs at least 2 exercise periods")
    rng = np.random.default_rng(seed)
    s = dynamics.sample_paths(rng, paths, steps, contract.expiry)
    dt = contract.expiry / steps
    disc = math.exp(-dynamics.rate * dt)

    cashflow = contract.payoff(s[:, -1])
    for t in range(steps - 1, 0, -1):
        cashflow = cashflow * disc
        immediate = contract.payoff(s[:, t])
        itm = immediate > 0.0
        if not np.any(itm):
            continue
        continuation = _poly_fit_eval(s[itm, t], cashflow[itm], degree)
        exercise = immediate[itm] > continuation
        idx = np.flatnonzero(itm)[exercise]
        cashflow[idx] = immediate[idx]
    cashflow = cashflow * disc
    price = float(np.mean(cashflow))
    stderr = float(np.std(cashflow) / math.sqrt(paths))
    intrinsic = float(contract.payoff(dynamics.spot))
    if intrinsic > price:
        price = intrinsic
    if with_stderr:
        return price, stderr
    return price


def finite_diff_greeks(
    pricer: Callable[[float, float], float],
    contract: OptionContract,
    n_stocks: int,
    spot: float,
    bump: float | None = None,
    time_bump: float = 1.0 / 52.0,
) -> GreekSet:
    """Central-difference Greeks of a deterministic pricer.

    ``pricer(spot, expiry)`` must be deterministic (reuse a fixed seed) so
    the bumps share common random numbers.  The spot bump defaults to 1% of
    spot; theta uses a calendar bump of ``time_bump`` years.
    """
    if bump is None:
        bump = 0.01 * spot
    if bump <= 0:
        raise DomainError("bump must be positive")
    p0 = pricer(spot, contract.expiry)
    p_up = pricer(spot + bump, contract.expiry)
    p_dn = pricer(spot - bump, contract.expiry)
    delta = (p_up - p_dn) / (2.0 * bump)
    gamma = (p_up - 2.0 * p0 + p_dn) / (bump * bump)
    tb = min(time_bump, 0.5 * contract.expiry)
    theta = (pricer(spot, contract.expiry - tb) - p0) / tb
    return GreekSet.single(contract.underlying, n_stocks, delta, gamma, theta)


def garch_mc_price(
    contract: OptionContract,
    garch: "econometrics.GarchSpec",
    spot: float,
    sigma1: float,
    paths: int = 20000,
    seed: int = 0,
    dt: float = 1.0 / 52.0,
    with_stderr: bool = False,
):
    """Monte Carlo price under the risk-neutral GARCH dynamics.

    Simulates per-period log returns to the expiration date, discounts the
    payoff at the risk-free rate, and averages across paths.  ``sigma1`` is
    the per-period return variance of the first simulated period.
    Deterministic for a fixed seed.
    """
    steps = max(1, round(contract.expiry / dt))
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((paths, steps))
    log_returns = econometrics.simulate_gjr_univariate(
        garch, sigma1, z, risk_neutral=True, dt=dt
    )
    terminal = spot * np.exp(log_returns.sum(axis=1))
    horizon = steps * dt
    discounted = math.exp(-garch.rate * horizon) * contract.payoff(terminal)
    price = float(discounted.mean())
    if with_stderr:
        return price, float(discounted.std() / math.sqrt(paths))
    return price


# ---------------------------------------------------------------------------
# Optioned assets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OptionQuote:
    """Scalar price and sensitivities of one option on a single stock."""

    price: float
    delta: float
    gamma: float
    theta: float


def _pair_covariance(
    delta_i: float, gamma_i: float, mu_i: float,
    delta_j: float, gamma_j: float, mu_j: float,
    sigma_ij: float,
) -> float:
    """Closed-form covariance of two quadratic single-stock exposures."""
    return (
        (delta_i + gamma_i * mu_i) * (delta_j + gamma_j * mu_j) * sigma_ij
        + 0.5 * gamma_i * gamma_j * sigma_ij * sigma_ij
    )


@dataclass(frozen=True)
class OptionedAsset:
    """One stock plus options on it, normalized to the stock's price.

    The budget identity ``b*p + sum(a_j d_j) = p`` must hold to 1e-9
    relative, and the composite Greeks must match the recombination of the
    stored amounts.
    """

    index: int
    price: float
    stock_amount: float
    option_amounts: np.ndarray
    quotes: tuple[OptionQuote, ...]
    delta: float
    gamma: float
    theta: float

    def __post_init__(self):
        amounts = np.array(self.option_amounts, dtype=float)
        amounts.setflags(write=False)
        object.__setattr__(self, "option_amounts", amounts)
        value = self.stock_amount * self.price + sum(
            a * q.price for a, q in zip(amounts, self.quotes)
        )
        if abs(value - self.price) > 1e-9 * max(1.0, abs(self.price)):
            raise DomainError("optioned asset violates the unit-price budget identity")

    @classmethod
    def build(
        cls,
        index: int,
        price: float,
        stock_amount: float,
        option_amounts: np.ndarray,
        quotes: Sequence[OptionQuote],
    ) -> "OptionedAsset":
        a = np.asarray(option_amounts, dtype=float)
        return cls(
            index=index,
            price=price,
            stock_amount=float(stock_amount),
            option_amounts=a,
            quotes=tuple(quotes),
            delta=float(stock_amount + sum(ai * q.delta for ai, q in zip(a, quotes))),
            gamma=float(sum(ai * q.gamma for ai, q in zip(a, quotes))),
            theta=float(sum(ai * q.theta for ai, q in zip(a, quotes))),
        )


def make_optioned_asset(
    model: MarketModel,
    index: int,
    quotes: Sequence[OptionQuote],
    delta: float = 0.0,
    gamma: float = 0.0,
    theta: float | None = None,
    long_stock_only: bool = False,
) -> OptionedAsset:
    """Construct an optioned asset hitting composite Greek targets.

    Solves the stacked replication system with rows (price, delta, gamma
    and optionally theta); the minimum-norm solution is returned when the
    system is underdetermined.  Raises :class:`InfeasibleSystemError` when
    no exact solution exists, which signals an insufficient option menu.
    """
    price = float(model.prices[index])
    n = len(quotes)
    rows = [
        np.concatenate([[price], [q.price for q in quotes]]),
        np.concatenate([[1.0], [q.delta for q in quotes]]),
        np.concatenate([[0.0], [q.gamma for q in quotes]]),
    ]
    rhs = [price, delta, gamma]
    if theta is not None:
        rows.append(np.concatenate([[0.0], [q.theta for q in quotes]]))
        rhs.append(theta)
    a_mat = np.vstack(rows)
    b_vec = np.asarray(rhs, dtype=float)

    if long_stock_only:
        lb = np.full(n + 1, -np.inf)
        lb[0] = 0.0
        res = lsq_linear(a_mat, b_vec, bounds=(lb, np.full(n + 1, np.inf)))
        sol = res.x
    else:
        sol, *_ = np.linalg.lstsq(a_mat, b_vec, rcond=None)
    residual = np.linalg.norm(a_mat @ sol - b_vec)
    if residual > 1e-8 * max(1.0, np.linalg.norm(b_vec)):
        raise InfeasibleSystemError(
            f"no option combination meets the targets (residual {residual:.3e})"
        )
    return OptionedAsset.build(index, price, sol[0], sol[1:], quotes)


@dataclass(frozen=True)
class ZeroCorrelationResult:
    """Outcome of the pairwise decorrelation solve."""

    assets: tuple[OptionedAsset, ...]
    weights: tuple[np.ndarray, ...]
    residual_norm: float
    converged: bool
    avg_abs_corr: float
    max_abs_corr: float


def _composite_exposures(
    amounts: np.ndarray,
    menus: Sequence[Sequence[OptionQuote]],
    splits: np.ndarray,
    prices: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-stock (stock amount, delta, gamma) with the budget row eliminated.

    The stock amount is solved from the unit-price identity, so every
    candidate is a valid optioned asset by construction.
    """
    m = len(menus)
    stock = np.empty(m)
    delta = np.empty(m)
    gamma = np.empty(m)
    for i in range(m):
        a = amounts[splits[i]: splits[i + 1]]
        quotes = menus[i]
        spent = sum(aj * q.price for aj, q in zip(a, quotes))
        stock[i] = (prices[i] - spent) / prices[i]
        delta[i] = stock[i] + sum(aj * q.delta for aj, q in zip(a, quotes))
        gamma[i] = sum(aj * q.gamma for aj, q in zip(a, quotes))
    return stock, delta, gamma


def optioned_asset_corr_stats(
    model: MarketModel, delta: np.ndarray, gamma: np.ndarray
) -> tuple[float, float]:
    """(average, max) absolute off-diagonal correlation of the optioned assets.

    A delta-gamma-neutral asset is a constant, so its exact correlation with
    anything is zero, but the Pearson ratio is discontinuous there and blows
    up just short of neutrality.  Each variance is therefore floored at
    1e-4 of the stock variance (1% of the stock's vol): assets carrying
    less risk than that are measured against the floor instead, which keeps
    the statistic finite and still flags any materially nonzero covariance.
    """
    m = model.n_stocks
    svar = np.diag(model.sigma)
    var = np.array(
        [
            max(
                _pair_covariance(delta[i], gamma[i], model.mu[i],
                                 delta[i], gamma[i], model.mu[i], model.sigma[i, i]),
                1e-4 * svar[i],
            )
            for i in range(m)
        ]
    )
    corrs = []
    for i in range(m):
        for j in range(i + 1, m):
            cov = _pair_covariance(delta[i], gamma[i], model.mu[i],
                                   delta[j], gamma[j], model.mu[j], model.sigma[i, j])
            corrs.append(cov / math.sqrt(var[i] * var[j]))
    if not corrs:
        return 0.0, 0.0
    corrs = np.abs(corrs)
    return float(corrs.mean()), float(corrs.max())


def zero_correlation_weights(
    model: MarketModel,
    menus: Sequence[Sequence[OptionQuote]],
    warm_start: Sequence[np.ndarray] | None = None,
    max_nfev: int = 4000,
    tol: float = 1e-12,
    shrink: float = 1e-3,
) -> ZeroCorrelationResult:
    """Solve for optioned-asset weights that zero all pairwise covariances.

    The unit-price budget row of every stock is eliminated analytically (the
    stock amount absorbs whatever the options cost), and the remaining
    stacked system of scaled pairwise covariances is root-found by damped
    least squares.  A small shrinkage on the option value fractions
    (``shrink``) selects the root nearest the pure-stock start, ruling out
    the degenerate all-neutral solutions; the reported residual norm covers
    the covariance rows only.  Non-convergence is reported through that
    residual, never raised.
    """
    m = model.n_stocks
    if len(menus) != m:
        raise DomainError("need one option menu per stock")
    sizes = np.array([len(menu) for menu in menus])
    splits = np.concatenate([[0], np.cumsum(sizes)])
    vols = np.sqrt(np.diag(model.sigma))
    prices = model.prices

    if warm_start is None:
        x0 = np.zeros(splits[-1])
    else:
        # warm starts carry per-stock (stock amount, option amounts)
        x0 = np.concatenate([np.asarray(w, dtype=float)[1:] for w in warm_start])
        if x0.shape[0] != splits[-1]:
            raise DomainError("warm start does not match the menu sizes")

    pairs = [(i, j) for i in range(m) for j in range(i + 1, m)]
    value_fraction = np.concatenate(
        [[q.price / prices[i] for q in menu] for i, menu in enumerate(menus)]
    ) if splits[-1] else np.zeros(0)

    def cov_rows(a):
        _, delta, gamma = _composite_exposures(a, menus, splits, prices)
        out = np.empty(len(pairs))
        for r, (i, j) in enumerate(pairs):
            cov = _pair_covariance(delta[i], gamma[i], model.mu[i],
                                   delta[j], gamma[j], model.mu[j], model.sigma[i, j])
            out[r] = cov / (vols[i] * vols[j])
        return out

    def residuals(a):
        return np.concatenate([cov_rows(a), shrink * value_fraction * a])

    if splits[-1] == 0 or max_nfev == 0:
        final = x0
    else:
        res = least_squares(residuals, x0, method="trf", max_nfev=max_nfev,
                            xtol=tol, ftol=tol, gtol=tol)
        final = res.x
    residual_norm = float(np.linalg.norm(cov_rows(final)))
    converged = residual_norm < 1e-6 or splits[-1] == 0
    stock, delta, gamma = _composite_exposures(final, menus, splits, prices)
    weights = tuple(
        np.concatenate([[stock[i]], final[splits[i]: splits[i + 1]]])
        for i in range(m)
    )
    avg_corr, max_corr = optioned_asset_corr_stats(model, delta, gamma)
    assets = tuple(
        OptionedAsset.build(i, float(prices[i]), w[0], w[1:], menus[i])
        for i, w in enumerate(weights)
    )
    return ZeroCorrelationResult(
        assets=assets,
        weights=weights,
        residual_norm=residual_norm,
        converged=bool(converged),
        avg_abs_corr=avg_corr,
        max_abs_corr=max_corr,
    )


def correlation_hedging_sweep(
    model: MarketModel,
    full_menus: Sequence[Sequence[OptionQuote]],
    max_options: int | None = None,
) -> list[tuple[int, ZeroCorrelationResult]]:
    """Decorrelation quality as options are added one at a time.

    Options are taken round-robin across stocks from ``full_menus``.  Each
    step solves both from scratch and warm-started from the previous
    solution, and keeps the previous solution itself (new option unused) as
    a candidate, so the reported average correlation never increases: an
    extra option can always be ignored.
    """
    m = model.n_stocks
    order: list[tuple[int, OptionQuote]] = []
    depth = max(len(menu) for menu in full_menus) if full_menus else 0
    for level in range(depth):
        for u in range(m):
            if len(full_menus[u]) > level:
                order.append((u, full_menus[u][level]))
    if max_options is not None:
        order = order[:max_options]

    menus: list[list[OptionQuote]] = [[] for _ in range(m)]
    results = [(0, zero_correlation_weights(model, menus))]
    prev = results[0][1]
    for count, (u, quote) in enumerate(order, start=1):
        menus[u] = menus[u] + [quote]
        extended = [
            np.concatenate([w, [0.0]]) if i == u else np.array(w)
            for i, w in enumerate(prev.weights)
        ]
        candidates = [
            zero_correlation_weights(model, menus),
            zero_correlation_weights(model, menus, warm_start=extended),
            zero_correlation_weights(model, menus, warm_start=extended, max_nfev=0),
        ]
        best = min(candidates, key=lambda r: (r.avg_abs_corr, r.residual_norm))
        results.append((count, best))
        prev = best
    return results


# ---------------------------------------------------------------------------
# Instance generation and option-menu ingestion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GeneratedInstance:
    """A simulated market with a menu of priced options and their Greeks."""

    model: MarketModel
    contracts: tuple[OptionContract, ...]
    greeks: tuple[GreekSet, ...]
    annual_vols: np.ndarray
    rate: float
    seed: int

    @property
    def option_prices(self) -> np.ndarray:
        return np.array([c.mid for c in self.contracts])

    def menus(self) -> list[list[OptionQuote]]:
        """Per-stock option menus keyed by underlying."""
        out: list[list[OptionQuote]] = [[] for _ in range(self.model.n_stocks)]
        for c, g in zip(self.contracts, self.greeks):
            u = c.underlying
            out[u].append(
                OptionQuote(price=c.mid, delta=g.delta[u], gamma=g.gamma[u, u],
                            theta=g.theta)
            )
        return out


def generate_instance(
    n_stocks: int,
    n_options: int,
    seed: int,
    rate: float = 0.05,
    dt: float = 1.0 / 52.0,
) -> GeneratedInstance:
    """Simulate a market universe with Black-Scholes-priced European options.

    Correlations come from a row-normalized uniform lower-triangular factor,
    annual vols are U(0.1, 0.3) with expected returns 0.15 + 0.5 vol, all
    prices are 1, strikes draw moneyness from U(0.8, 1.2), and every option
    expires in one year.
    """
    rng = np.random.default_rng(seed)
    tri = np.tril(rng.uniform(size=(n_stocks, n_stocks)))
    tri /= np.linalg.norm(tri, axis=1, keepdims=True)
    corr = tri @ tri.T
    ann_vol = rng.uniform(0.1, 0.3, size=n_stocks)
    ann_mu = 0.15 + 0.5 * ann_vol
    prices = np.ones(n_stocks)
    sigma = np.outer(ann_vol, ann_vol) * corr * dt
    model = MarketModel(prices=prices, mu=ann_mu * dt, sigma=sigma, dt=dt)

    contracts = []
    greeks = []
    for _ in range(n_options):
        u = int(rng.integers(n_stocks))
        kind = "call" if rng.integers(2) == 0 else "put"
        strike = float(rng.uniform(0.8, 1.2))
        price, delta, gamma, theta = bs_price_and_greeks(
            1.0, strike, float(ann_vol[u]), rate, 1.0, kind
        )
        contracts.append(
            OptionContract(underlying=u, kind=kind, exercise_style="european",
                           strike=strike, expiry=1.0, bid=price, ask=price)
        )
        greeks.append(GreekSet.single(u, n_stocks, delta, gamma, theta))
    return GeneratedInstance(
        model=model,
        contracts=tuple(contracts),
        greeks=tuple(greeks),
        annual_vols=ann_vol,
        rate=rate,
        seed=seed,
    )


def load_options_csv(
    path,
    labels: Sequence[str],
    min_bid: float = 0.0,
) -> tuple[list[OptionContract], pd.DataFrame]:
    """Read an option menu CSV (ticker, kind, style, strike, expiry, bid, ask).

    Rows with bid below ``min_bid`` are dropped.  Greeks, when present as
    extra columns (delta, gamma, theta), are returned in the frame for the
    caller; otherwise a pricer must fill them in.
    """
    frame = pd.read_csv(path)
    frame = frame[frame["bid"] >= min_bid].reset_index(drop=True)
    index_of = {str(t): i for i, t in enumerate(labels)}
    contracts = []
    for _, row in frame.iterrows():
        ticker = str(row["ticker"])
        if ticker not in index_of:
            raise DomainError(f"option ticker {ticker!r} not in the stock universe")
        contracts.append(
            OptionContract(
                underlying=index_of[ticker],
                kind=str(row["kind"]).lower(),
                exercise_style=str(row.get("style", "european")).lower(),
                strike=float(row["strike"]),
                expiry=float(row["expiry"]),
                bid=float(row["bid"]),
                ask=float(row["ask"]),
            )
        )
    return contracts, frame
