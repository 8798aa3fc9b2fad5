"""Gaussian market universe, per-stock VaR levels, and distress conditioning.

The market is a multivariate normal model of price *changes* over one
holding period: ``dp ~ N(mu, sigma)`` with strictly positive current prices
and a positive-definite covariance.  A distress event pins a subset of
stocks at their individual VaR losses; conditioning the survivors on that
event stays Gaussian, with mean and covariance given by the usual
partitioned-normal (Schur complement) formulas.

All types are immutable after construction and all operations are pure.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import DomainError, SingularSubmatrixError

#: relative singular-value cutoff below which a covariance submatrix is
#: treated as numerically singular
SINGULAR_RTOL = 1e-10

# Rational approximations to the inverse standard normal CDF (central and
# tail branches), refined below with one Newton step on the exact CDF.
_Q_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
        1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_Q_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
        6.680131188771972e+01, -1.328068155288572e+01)
_Q_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
        -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_Q_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
        3.754408661907416e+00)
_Q_SPLIT = 0.02425


def normal_cdf(x: float) -> float:
    """Standard normal CDF, accurate in both tails via ``erfc``."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def normal_pdf(x: float) -> float:
    """Standard normal density."""
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def normal_quantile(p: float) -> float:
    """p-quantile of the standard normal distribution.

    Rational initializer refined with one Newton step on the exact CDF;
    the result satisfies ``|Phi(x) - p| < 1e-12`` over the open unit
    interval.

    Raises
    ------
    DomainError
        If ``p`` is outside (0, 1).
    """
    if not 0.0 < p < 1.0:
        raise DomainError(f"quantile level must lie in (0, 1), got {p}")
    if p == 0.5:
        return 0.0
    a, b, c, d = _Q_A, _Q_B, _Q_C, _Q_D
    if p < _Q_SPLIT:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    elif p <= 1.0 - _Q_SPLIT:
        q = p - 0.5
        r = q * q
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / \
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    pdf = normal_pdf(x)
    if pdf > 1e-280:
        x -= (normal_cdf(x) - p) / pdf
    return x


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class MarketModel:
    """Gaussian model of stock price changes over one holding period.

    Parameters
    ----------
    prices : array
        Current stock prices (currency), strictly positive.
    mu : array
        Mean price change per period (currency).
    sigma : array
        Covariance matrix of price changes (currency^2); symmetric
        positive definite.
    dt : float
        Length of the holding period in years.
    labels : tuple of str, optional
        Tickers, used by the CSV/JSON interfaces.
    """

    prices: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    dt: float
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        prices = _freeze(self.prices)
        mu = _freeze(self.mu)
        sigma = _freeze(self.sigma)
        m = prices.shape[0]
        if prices.ndim != 1 or mu.shape != (m,) or sigma.shape != (m, m):
            raise DomainError(
                f"dimension mismatch: prices {prices.shape}, mu {mu.shape}, "
                f"sigma {sigma.shape}"
            )
        if not np.all(prices > 0.0):
            raise DomainError("all prices must be strictly positive")
        if self.dt <= 0.0:
            raise DomainError("horizon dt must be positive")
        scale = max(1.0, float(np.abs(sigma).max(initial=0.0)))
        if np.abs(sigma - sigma.T).max(initial=0.0) > 1e-8 * scale:
            raise DomainError("sigma must be symmetric")
        sigma = _freeze(0.5 * (sigma + sigma.T))
        try:
            np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError:
            raise DomainError("sigma must be positive definite") from None
        if self.labels is not None and len(self.labels) != m:
            raise DomainError("labels length must match the number of stocks")
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def n_stocks(self) -> int:
        return self.prices.shape[0]

    @property
    def correlation(self) -> np.ndarray:
        vol = np.sqrt(np.diag(self.sigma))
        return self.sigma / np.outer(vol, vol)

    def to_json(self) -> str:
        doc = {
            "prices": self.prices.tolist(),
            "mu": self.mu.tolist(),
            "sigma": self.sigma.tolist(),
            "dt": self.dt,
        }
        if self.labels is not None:
            doc["labels"] = list(self.labels)
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "MarketModel":
        doc = json.loads(text)
        labels = tuple(doc["labels"]) if "labels" in doc else None
        return cls(
            prices=np.asarray(doc["prices"], dtype=float),
            mu=np.asarray(doc["mu"], dtype=float),
            sigma=np.asarray(doc["sigma"], dtype=float),
            dt=float(doc["dt"]),
            labels=labels,
        )


def model_from_prices(
    prices: pd.DataFrame, dt: float, periods_per_year: int = 52
) -> MarketModel:
    """Estimate a :class:`MarketModel` from a table of periodic close prices.

    Columns are tickers and rows are dates.  Log-return differences are
    converted to price-change moments at the latest prices and scaled from
    the data frequency to the model horizon ``dt``.
    """
    if prices.shape[0] < 3:
        raise DomainError("need at least 3 price rows to estimate moments")
    values = prices.to_numpy(dtype=float)
    if not np.all(values > 0.0):
        raise DomainError("price history must be strictly positive")
    log_returns = np.diff(np.log(values), axis=0)
    scale = dt * periods_per_year
    last = values[-1]
    mu = last * log_returns.mean(axis=0) * scale
    sigma = np.outer(last, last) * np.cov(log_returns, rowvar=False) * scale
    sigma = np.atleast_2d(sigma)
    return MarketModel(
        prices=last, mu=mu, sigma=sigma, dt=dt,
        labels=tuple(str(c) for c in prices.columns),
    )


def load_prices_csv(path) -> pd.DataFrame:
    """Read a close-price CSV (header = tickers, first column = ISO dates)."""
    return pd.read_csv(path, index_col=0, parse_dates=True)


def asset_var(model: MarketModel, i: int, p_conf: float) -> float:
    """Analytic VaR of stock ``i``: ``alpha_p * sqrt(sigma_ii) - mu_i``."""
    if not 0 <= i < model.n_stocks:
        raise DomainError(f"stock index {i} out of range")
    if not 0.5 <= p_conf < 1.0:
        raise DomainError("confidence level must lie in [0.5, 1)")
    return normal_quantile(p_conf) * math.sqrt(model.sigma[i, i]) - model.mu[i]


@dataclass(frozen=True)
class DistressEvent:
    """A set of stocks pinned at given loss levels.

    ``distressed`` and ``complement`` partition the universe; ``k`` holds
    the loss level (positive = loss) of each distressed stock, aligned with
    ``distressed``.  Use :meth:`at_var` for the standard construction where
    each loss equals the stock's individual VaR at confidence ``p_conf``;
    direct construction permits deeper stress levels.
    """

    distressed: tuple[int, ...]
    complement: tuple[int, ...]
    k: np.ndarray
    p_conf: float

    def __post_init__(self):
        if len(self.distressed) == 0:
            raise DomainError("distressed set must be nonempty")
        both = sorted(self.distressed) + sorted(self.complement)
        if sorted(both) != list(range(len(both))):
            raise DomainError("distressed and complement must partition 0..m-1")
        if not 0.5 <= self.p_conf < 1.0:
            raise DomainError("confidence level must lie in [0.5, 1)")
        k = _freeze(self.k)
        if k.shape != (len(self.distressed),):
            raise DomainError("k must align with the distressed set")
        object.__setattr__(self, "distressed", tuple(sorted(self.distressed)))
        object.__setattr__(self, "complement", tuple(sorted(self.complement)))
        object.__setattr__(self, "k", k)

    @classmethod
    def at_var(cls, model: MarketModel, distressed, p_conf: float) -> "DistressEvent":
        """Event with every distressed stock at its VaR loss level."""
        distressed = tuple(sorted(int(i) for i in distressed))
        complement = tuple(i for i in range(model.n_stocks) if i not in distressed)
        k = np.array([asset_var(model, i, p_conf) for i in distressed])
        return cls(distressed=distressed, complement=complement, k=k, p_conf=p_conf)


@dataclass(frozen=True)
class ConditionalLaw:
    """Gaussian law of the surviving stocks given a distress event.

    ``cond_mean`` and ``cond_cov`` are indexed by the (sorted) complement
    set; ``h`` stacks the conditional mean over the full universe in the
    original stock order, with distressed entries equal to minus their loss
    levels.
    """

    event: DistressEvent
    cond_mean: np.ndarray
    cond_cov: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "cond_mean", _freeze(self.cond_mean))
        object.__setattr__(self, "cond_cov", _freeze(self.cond_cov))
        object.__setattr__(self, "h", _freeze(self.h))


def conditional_law(model: MarketModel, event: DistressEvent) -> ConditionalLaw:
    """Condition the market on a distress event.

    Returns the partitioned-normal mean and covariance of the surviving
    stocks.  Raises :class:`SingularSubmatrixError` when the covariance
    block of the distressed stocks is numerically singular (smallest
    singular value below ``SINGULAR_RTOL`` times the largest).
    """
    ii = list(event.distressed)
    jj = list(event.complement)
    m = model.n_stocks
    if max(ii) >= m or (jj and max(jj) >= m):
        raise DomainError("event indices exceed the model universe")
    sig = model.sigma
    sig_ii = sig[np.ix_(ii, ii)]
    svals = np.linalg.svd(sig_ii, compute_uv=False)
    if svals[-1] < SINGULAR_RTOL * svals[0]:
        raise SingularSubmatrixError(
            "covariance block of the distressed stocks is numerically singular"
        )
    shift = np.linalg.solve(sig_ii, event.k + model.mu[ii])
    if jj:
        sig_ji = sig[np.ix_(jj, ii)]
        c = model.mu[jj] - sig_ji @ shift
        e_mat = sig[np.ix_(jj, jj)] - sig_ji @ np.linalg.solve(sig_ii, sig_ji.T)
        e_mat = 0.5 * (e_mat + e_mat.T)
    else:
        c = np.zeros(0)
        e_mat = np.zeros((0, 0))
    h = np.empty(m)
    h[ii] = -event.k
    if jj:
        h[jj] = c
    return ConditionalLaw(event=event, cond_mean=c, cond_cov=e_mat, h=h)
