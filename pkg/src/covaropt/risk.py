"""CoVaR engines for stock and optioned portfolios.

For a pure stock portfolio the conditional law is Gaussian and CoVaR is
exact.  An optioned portfolio's value change is quadratic in the stock
moves (delta/gamma/theta expansion), so conditional on a distress event it
is a quadratic form of a Gaussian vector: this module assembles its exact
first two moments, the spectral (independent noncentral chi-square)
reformulation, the normal-approximation and worst-case CoVaR read off
those moments, and a seeded Monte Carlo quantile oracle for validating the
approximation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import DomainError
from .instruments import GreekSet, _pair_covariance, aggregate_greeks
from .linalgx import psd_pinv_sqrt, psd_sqrt
from .market import (
    ConditionalLaw,
    DistressEvent,
    MarketModel,
    conditional_law,
    normal_quantile,
)


@dataclass(frozen=True)
class Portfolio:
    """Holding amounts: ``y`` shares per stock, ``x`` contracts per option."""

    y: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        y = np.array(self.y, dtype=float)
        x = np.array(self.x, dtype=float)
        y.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)

    @classmethod
    def stocks_only(cls, y) -> "Portfolio":
        return cls(y=np.asarray(y, dtype=float), x=np.zeros(0))

    @property
    def is_stock_only(self) -> bool:
        return self.x.size == 0 or not np.any(self.x)


def _check_portfolio(model: MarketModel, greeks: Sequence[GreekSet], pf: Portfolio):
    if pf.y.shape[0] != model.n_stocks:
        raise DomainError("stock holdings do not match the universe size")
    if pf.x.shape[0] != len(greeks):
        raise DomainError("option holdings do not match the Greek menu")


def two_asset_psi(rho: float, p_conf: float, q_conf: float) -> float:
    """Conditional-quantile coefficient of the surviving stock in a 2-stock market."""
    if abs(rho) > 1.0:
        raise DomainError("correlation must lie in [-1, 1]")
    return normal_quantile(q_conf) * math.sqrt(max(1.0 - rho * rho, 0.0)) \
        + normal_quantile(p_conf) * rho


def stock_covar(
    model: MarketModel, event: DistressEvent, y: np.ndarray, q_conf: float
) -> float:
    """Exact Gaussian CoVaR of a pure stock portfolio given a distress event."""
    y = np.asarray(y, dtype=float)
    if y.shape[0] != model.n_stocks:
        raise DomainError("holdings do not match the universe size")
    law = conditional_law(model, event)
    jj = list(event.complement)
    ii = list(event.distressed)
    y_j = y[jj]
    spread = float(y_j @ law.cond_cov @ y_j) if y_j.size else 0.0
    return normal_quantile(q_conf) * math.sqrt(max(spread, 0.0)) \
        - float(law.cond_mean @ y_j) + float(event.k @ y[ii])


# ---------------------------------------------------------------------------
# Delta-Gamma moment machinery
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConditionalStructure:
    """Portfolio-independent pieces of the conditional moments.

    ``w_mat`` stacks one column per option (gamma rows against the stacked
    conditional mean plus the surviving-block delta) followed by an
    identity for the stock holdings; the conditional variance of any
    portfolio is then a bilinear form in these pieces.
    """

    law: ConditionalLaw
    g: np.ndarray          # per-option conditional mean coefficients
    h: np.ndarray          # stacked conditional mean over all stocks
    w_mat: np.ndarray      # m' x (n + m')
    s_mat: np.ndarray      # n x n trace couplings
    r_mat: np.ndarray      # (n + m') x (n + m') = w' E w


def conditional_structure(
    model: MarketModel, event: DistressEvent, greeks: Sequence[GreekSet]
) -> ConditionalStructure:
    law = conditional_law(model, event)
    jj = list(event.complement)
    n = len(greeks)
    m_j = len(jj)
    h = law.h
    e_mat = law.cond_cov
    dt = model.dt

    g = np.empty(n)
    w_mat = np.empty((m_j, n + m_j))
    gamma_jj = []
    for idx, gk in enumerate(greeks):
        gjj = gk.gamma[np.ix_(jj, jj)]
        gamma_jj.append(gjj)
        g[idx] = 0.5 * h @ (gk.gamma @ h) + 0.5 * np.trace(gjj @ e_mat) \
            + gk.delta @ h + gk.theta * dt
        w_mat[:, idx] = gk.gamma[jj, :] @ h + gk.delta[jj]
    w_mat[:, n:] = np.eye(m_j)

    s_mat = np.empty((n, n))
    prods = [e_mat @ gjj for gjj in gamma_jj]
    for i in range(n):
        for j in range(i, n):
            s_mat[i, j] = s_mat[j, i] = float(np.sum(prods[i] * prods[j].T))
    r_mat = w_mat.T @ e_mat @ w_mat
    return ConditionalStructure(law=law, g=g, h=h, w_mat=w_mat, s_mat=s_mat,
                                r_mat=0.5 * (r_mat + r_mat.T))


@dataclass(frozen=True)
class ConditionalMoments:
    """Exact conditional mean/variance of the quadratic value change."""

    mean: float
    variance: float
    g: np.ndarray
    h: np.ndarray
    r_mat: np.ndarray
    s_mat: np.ndarray


def conditional_moments(
    model: MarketModel,
    event: DistressEvent,
    greeks: Sequence[GreekSet],
    portfolio: Portfolio,
    structure: ConditionalStructure | None = None,
) -> ConditionalMoments:
    """Conditional mean and variance of the portfolio value change."""
    _check_portfolio(model, greeks, portfolio)
    st = structure if structure is not None else \
        conditional_structure(model, event, greeks)
    jj = list(event.complement)
    xy = np.concatenate([portfolio.x, portfolio.y[jj]])
    mean = float(st.g @ portfolio.x + st.h @ portfolio.y)
    variance = float(xy @ st.r_mat @ xy + 0.5 * portfolio.x @ st.s_mat @ portfolio.x)
    if variance < -1e-9 * max(1.0, abs(mean)):
        raise DomainError(f"conditional variance came out negative: {variance:.3e}")
    return ConditionalMoments(mean=mean, variance=max(variance, 0.0),
                              g=st.g, h=st.h, r_mat=st.r_mat, s_mat=st.s_mat)


@dataclass(frozen=True)
class UnconditionalStructure:
    """Portfolio-independent pieces of the unconditional moments."""

    eta: np.ndarray        # per-option mean coefficients
    mu: np.ndarray
    v_mat: np.ndarray      # m x (n + m)
    phi_mat: np.ndarray    # n x n trace couplings
    psi_mat: np.ndarray    # (n + m) x (n + m) = v' Sigma v


def unconditional_structure(
    model: MarketModel, greeks: Sequence[GreekSet]
) -> UnconditionalStructure:
    m = model.n_stocks
    n = len(greeks)
    mu, sigma, dt = model.mu, model.sigma, model.dt
    eta = np.empty(n)
    v_mat = np.empty((m, n + m))
    for idx, gk in enumerate(greeks):
        eta[idx] = 0.5 * mu @ (gk.gamma @ mu) + 0.5 * np.trace(gk.gamma @ sigma) \
            + gk.delta @ mu + gk.theta * dt
        v_mat[:, idx] = gk.gamma @ mu + gk.delta
    v_mat[:, n:] = np.eye(m)
    phi_mat = np.empty((n, n))
    prods = [sigma @ gk.gamma for gk in greeks]
    for i in range(n):
        for j in range(i, n):
            phi_mat[i, j] = phi_mat[j, i] = float(np.sum(prods[i] * prods[j].T))
    psi_mat = v_mat.T @ sigma @ v_mat
    return UnconditionalStructure(eta=eta, mu=mu, v_mat=v_mat, phi_mat=phi_mat,
                                  psi_mat=0.5 * (psi_mat + psi_mat.T))


@dataclass(frozen=True)
class UnconditionalMoments:
    """Unconditional mean/variance of the quadratic value change."""

    mean: float
    variance: float
    eta: np.ndarray
    mu: np.ndarray
    psi_mat: np.ndarray
    phi_mat: np.ndarray


def unconditional_moments(
    model: MarketModel,
    greeks: Sequence[GreekSet],
    portfolio: Portfolio,
    structure: UnconditionalStructure | None = None,
) -> UnconditionalMoments:
    _check_portfolio(model, greeks, portfolio)
    st = structure if structure is not None else unconditional_structure(model, greeks)
    xy = np.concatenate([portfolio.x, portfolio.y])
    mean = float(st.eta @ portfolio.x + st.mu @ portfolio.y)
    variance = float(xy @ st.psi_mat @ xy
                     + 0.5 * portfolio.x @ st.phi_mat @ portfolio.x)
    return UnconditionalMoments(mean=mean, variance=max(variance, 0.0),
                                eta=st.eta, mu=st.mu, psi_mat=st.psi_mat,
                                phi_mat=st.phi_mat)


# ---------------------------------------------------------------------------
# CoVaR from moments
# ---------------------------------------------------------------------------

def covar_normal_approx(moments: ConditionalMoments, q_conf: float) -> float:
    """Normal-approximation CoVaR: quantile multiple of the spread minus the mean."""
    if moments.variance < 0:
        raise DomainError("variance must be nonnegative")
    return normal_quantile(q_conf) * math.sqrt(moments.variance) - moments.mean


def worst_case_multiplier(q_conf: float) -> float:
    """Distribution-robust quantile multiplier ``sqrt(q / (1 - q))``."""
    if not 0.5 <= q_conf < 1.0:
        raise DomainError("worst-case confidence must lie in [0.5, 1)")
    return math.sqrt(q_conf / (1.0 - q_conf))


def covar_worst_case(moments: ConditionalMoments, q_conf: float) -> float:
    """Worst-case CoVaR given only the conditional mean and variance."""
    return worst_case_multiplier(q_conf) * math.sqrt(moments.variance) - moments.mean


# ---------------------------------------------------------------------------
# Quadratic-form representations and the Monte Carlo oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConditionalQuadForm:
    """Raw quadratic form of the conditional value change.

    ``dv = lin' z + z' gamma_jj z / 2 + const`` with ``z`` drawn from the
    conditional law of the surviving stocks.
    """

    law: ConditionalLaw
    gamma_jj: np.ndarray
    lin: np.ndarray
    const: float

    def sample(self, paths: int, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        root = psd_sqrt(self.law.cond_cov, "conditional covariance")
        z = self.law.cond_mean + rng.standard_normal((paths, root.shape[0])) @ root
        quad = 0.5 * np.einsum("pi,ij,pj->p", z, self.gamma_jj, z)
        return z @ self.lin + quad + self.const


def conditional_quad_form(
    model: MarketModel,
    event: DistressEvent,
    greeks: Sequence[GreekSet],
    portfolio: Portfolio,
) -> ConditionalQuadForm:
    """Reduce the portfolio's conditional value change to its raw quadratic form."""
    _check_portfolio(model, greeks, portfolio)
    law = conditional_law(model, event)
    jj = list(event.complement)
    ii = list(event.distressed)
    delta, gamma, theta = aggregate_greeks(greeks, portfolio.x, portfolio.y)
    k = event.k
    lin = delta[jj] - gamma[np.ix_(jj, ii)] @ k
    const = theta * model.dt - delta[ii] @ k + 0.5 * k @ gamma[np.ix_(ii, ii)] @ k
    return ConditionalQuadForm(law=law, gamma_jj=gamma[np.ix_(jj, jj)],
                               lin=lin, const=float(const))


@dataclass(frozen=True)
class QuadFormSpectral:
    """Spectral form: a weighted sum of independent noncentral chi-squares.

    Rotating the whitened surviving stocks diagonalizes the quadratic term;
    ``lambdas`` are the eigenvalues, ``iota`` the rotated linear
    coefficients, ``nu`` the rotated standardized means, and ``tau`` the
    completed-square constant (``const`` keeps the uncompleted one).
    """

    lambdas: np.ndarray
    iota: np.ndarray
    nu: np.ndarray
    tau: float
    const: float
    zero_tol: float = 1e-10

    @property
    def nonzero(self) -> np.ndarray:
        return np.abs(self.lambdas) > self.zero_tol

    def mean(self) -> float:
        lam, nu = self.lambdas, self.nu
        return float(0.5 * np.sum(lam * (nu * nu + 1.0)) + self.iota @ nu + self.const)

    def variance(self) -> float:
        lam, nu = self.lambdas, self.nu
        return float(np.sum((lam * nu + self.iota) ** 2) + 0.5 * np.sum(lam * lam))

    def dominance_ratio(self) -> float:
        """Advisory size of the largest chi-square term relative to the spread.

        Small values indicate a diversified quadratic part for which the
        normal approximation is reliable; zero means no quadratic part.
        """
        lam = self.lambdas[self.nonzero]
        if lam.size == 0:
            return 0.0
        nu = self.nu[self.nonzero]
        scale = math.sqrt(float(np.sum(lam * lam * (0.5 + nu * nu))))
        return float(np.abs(lam).max() / scale) if scale > 0 else math.inf

    def sample(self, paths: int, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        q = self.nu + rng.standard_normal((paths, self.nu.shape[0]))
        nz = self.nonzero
        lam = self.lambdas[nz]
        shifted = q[:, nz] + self.iota[nz] / lam
        quad = 0.5 * (shifted * shifted) @ lam
        linear = q[:, ~nz] @ self.iota[~nz]
        return quad + linear + self.tau


def spectral_reform(
    model: MarketModel,
    event: DistressEvent,
    greeks: Sequence[GreekSet],
    portfolio: Portfolio,
) -> QuadFormSpectral:
    """Diagonalize the conditional value change into independent components.

    Uses the symmetric PSD square root of the conditional covariance (and
    its pseudo-inverse when singular).
    """
    form = conditional_quad_form(model, event, greeks, portfolio)
    e_mat = form.law.cond_cov
    e_half = psd_sqrt(e_mat, "conditional covariance")
    e_pinv_half = psd_pinv_sqrt(e_mat, "conditional covariance")
    core = e_half @ form.gamma_jj @ e_half
    lam, d_mat = np.linalg.eigh(0.5 * (core + core.T))
    iota = d_mat.T @ (e_half @ form.lin)
    nu = d_mat.T @ (e_pinv_half @ form.law.cond_mean)
    nz = np.abs(lam) > 1e-10
    tau = form.const - 0.5 * float(np.sum(iota[nz] ** 2 / lam[nz]))
    return QuadFormSpectral(lambdas=lam, iota=iota, nu=nu, tau=tau, const=form.const)


def mc_quantile_with_stderr(samples: np.ndarray, q_conf: float) -> tuple[float, float]:
    """Empirical quantile with its binomial (order-statistic) standard error."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.shape[0]
    value = float(np.quantile(x, q_conf))
    half_width = math.sqrt(q_conf * (1.0 - q_conf) / n)
    lo = x[max(0, math.floor(n * (q_conf - half_width)))]
    hi = x[min(n - 1, math.ceil(n * (q_conf + half_width)))]
    return value, float(max((hi - lo) / 2.0, 1e-300))


def covar_mc_oracle(
    form: Union[QuadFormSpectral, ConditionalQuadForm],
    q_conf: float,
    paths: int = 100_000,
    seed: int = 0,
    with_stderr: bool = False,
):
    """Empirical conditional loss quantile over seeded Gaussian draws.

    Accepts either the spectral or the raw quadratic representation of the
    conditional value change; both sample the same law.
    """
    if paths < 10_000:
        raise DomainError("Monte Carlo oracle needs at least 10000 paths")
    losses = -form.sample(paths, seed)
    value, stderr = mc_quantile_with_stderr(losses, q_conf)
    if with_stderr:
        return value, stderr
    return value


# ---------------------------------------------------------------------------
# Optioned-asset covariance (single-underlying packages)
# ---------------------------------------------------------------------------

def optioned_asset_covariance(
    asset_i,
    asset_j,
    model: MarketModel,
    event: DistressEvent | None = None,
) -> float:
    """Closed-form covariance of two single-underlying optioned assets.

    With an event supplied, the conditional variant replaces moments by the
    conditional ones; any asset written on a distressed stock is constant
    under the event, so its conditional covariance is zero.
    """
    i, j = asset_i.index, asset_j.index
    if event is None:
        return _pair_covariance(
            asset_i.delta, asset_i.gamma, model.mu[i],
            asset_j.delta, asset_j.gamma, model.mu[j],
            model.sigma[i, j],
        )
    if i in event.distressed or j in event.distressed:
        return 0.0
    law = conditional_law(model, event)
    jj = list(event.complement)
    pi, pj = jj.index(i), jj.index(j)
    return _pair_covariance(
        asset_i.delta, asset_i.gamma, law.cond_mean[pi],
        asset_j.delta, asset_j.gamma, law.cond_mean[pj],
        law.cond_cov[pi, pj],
    )
