"""Asymmetric GARCH marginals, DCC correlation dynamics, and their simulators.

Per-stock returns follow an asymmetric (leverage-indicator) GARCH recursion
with an in-mean risk premium; the cross-section follows a correlation
recursion driven, in its default configuration, by raw innovation outer
products, with the conventional standardized variant behind a flag.  The
risk-neutral measure shifts innovations by the premium, which leaves the
variance and correlation recursions driven by the same physical shocks.

Hot recursions are delegated to :mod:`covaropt._kernels` (compiled when
available).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from . import _kernels
from .errors import DomainError, EstimationError

#: default trading periodization: weekly steps
WEEK_DT = 1.0 / 52.0


@dataclass(frozen=True)
class GarchSpec:
    """Asymmetric GARCH(1,1) parameters for one stock.

    Variance recursion ``s_t = a0 + a1 e^2 + a2 e^2 [e<0] + a3 s`` with
    in-mean premium ``kappa`` and annual risk-free rate ``rate``.  The
    stationarity condition under symmetric innovations is
    ``a1 + a2/2 + a3 < 1``.
    """

    alpha0: float
    alpha1: float
    alpha2: float
    alpha3: float
    kappa: float
    rate: float

    def __post_init__(self):
        if self.alpha0 <= 0:
            raise DomainError("alpha0 must be strictly positive")
        if min(self.alpha1, self.alpha2, self.alpha3) < 0:
            raise DomainError("alpha1..alpha3 must be nonnegative")
        if self.persistence >= 1.0:
            raise DomainError(
                f"persistence alpha1 + alpha2/2 + alpha3 = {self.persistence:.4f} >= 1"
            )

    @property
    def persistence(self) -> float:
        return self.alpha1 + 0.5 * self.alpha2 + self.alpha3

    @property
    def unconditional_variance(self) -> float:
        return self.alpha0 / (1.0 - self.persistence)

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha0, self.alpha1, self.alpha2, self.alpha3])


@dataclass(frozen=True)
class DccSpec:
    """Correlation-recursion parameters and the unconditional correlation."""

    beta1: float
    beta2: float
    c_bar: np.ndarray

    def __post_init__(self):
        if self.beta1 < 0 or self.beta2 < 0 or self.beta1 + self.beta2 >= 1.0:
            raise DomainError("need beta1, beta2 >= 0 and beta1 + beta2 < 1")
        c = np.array(self.c_bar, dtype=float)
        if np.abs(np.diag(c) - 1.0).max(initial=0.0) > 1e-8:
            raise DomainError("unconditional correlation must have unit diagonal")
        if np.abs(c - c.T).max(initial=0.0) > 1e-8:
            raise DomainError("unconditional correlation must be symmetric")
        if np.linalg.eigvalsh(c).min() < -1e-10:
            raise DomainError("unconditional correlation must be PSD")
        c.setflags(write=False)
        object.__setattr__(self, "c_bar", c)


# ---------------------------------------------------------------------------
# Filtering and estimation
# ---------------------------------------------------------------------------

def gjr_filter(
    returns: np.ndarray, spec: GarchSpec, sigma0: float | None = None,
    dt: float = WEEK_DT,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Variance/residual filter; returns (sigma path, eps path, neg loglik)."""
    returns = np.asarray(returns, dtype=float)
    if sigma0 is None:
        sigma0 = max(float(np.var(returns)), 1e-12)
    return _kernels.gjr_filter(
        returns, spec.alpha0, spec.alpha1, spec.alpha2, spec.alpha3,
        spec.kappa, spec.rate * dt, sigma0,
    )


def _gjr_from_raw(u: np.ndarray) -> tuple[float, float, float, float, float]:
    """Unconstrained parameters -> (a0, a1, a2, a3, kappa)."""
    a0 = math.exp(u[0])
    persistence = expit(u[1])
    logits = np.array([u[2], u[3], 0.0])
    w = np.exp(logits - logits.max())
    w /= w.sum()
    a1 = persistence * w[0]
    a2 = 2.0 * persistence * w[1]
    a3 = persistence * w[2]
    return a0, a1, a2, a3, u[4]


@dataclass(frozen=True)
class GjrFit:
    """Fit result for one stock: spec, likelihood, and diagnostics."""

    spec: GarchSpec
    loglik: float
    stderr: np.ndarray            # asymptotic s.e. of (a0, a1, a2, a3, kappa)
    converged: bool
    sigma_last: float             # variance of the last observed period
    eps_last: float               # residual of the last observed period
    n_obs: int
    message: str = ""


def fit_gjr(
    returns: np.ndarray, rate: float, dt: float = WEEK_DT,
    starts: Sequence[np.ndarray] | None = None,
) -> GjrFit:
    """Gaussian maximum likelihood for the asymmetric GARCH marginal.

    Positivity and stationarity are enforced through a smooth
    log/logit/softmax reparameterization, so the inner problem is
    unconstrained quasi-Newton.  Asymptotic standard errors come from the
    finite-difference Hessian of the negative log-likelihood at the
    optimum.
    """
    returns = np.asarray(returns, dtype=float)
    if returns.ndim != 1 or returns.shape[0] < 200:
        raise DomainError("need a 1-D return series with at least 200 observations")
    var = max(float(np.var(returns)), 1e-12)
    rate_p = rate * dt

    def nll_raw(u):
        a0, a1, a2, a3, kappa = _gjr_from_raw(u)
        _, _, nll = _kernels.gjr_filter(returns, a0, a1, a2, a3, kappa, rate_p, var)
        return nll if np.isfinite(nll) else 1e12

    if starts is None:
        base = [
            # (a0 share of var, persistence, asym logits, kappa)
            np.array([math.log(0.1 * var), 2.2, -1.8, -1.8, 0.0]),
            np.array([math.log(0.3 * var), 0.8, -1.2, -1.2, 0.0]),
            np.array([math.log(0.9 * var), -2.0, 0.0, 0.0, 0.0]),
        ]
    else:
        base = list(starts)

    best = None
    for u0 in base:
        res = minimize(nll_raw, u0, method="L-BFGS-B",
                       options={"maxiter": 500, "ftol": 1e-12, "gtol": 1e-8})
        if best is None or res.fun < best.fun:
            best = res
    if best is None or not np.isfinite(best.fun):
        raise EstimationError("GARCH likelihood never became finite",
                              {"returns_var": var})

    a0, a1, a2, a3, kappa = _gjr_from_raw(best.x)
    spec = GarchSpec(alpha0=a0, alpha1=max(a1, 0.0), alpha2=max(a2, 0.0),
                     alpha3=max(a3, 0.0), kappa=kappa, rate=rate)
    sigma_path, eps_path, nll = gjr_filter(returns, spec, sigma0=var, dt=dt)

    def nll_theta(theta):
        if theta[0] <= 0 or min(theta[1], theta[2], theta[3]) < -1e-12:
            return 1e12
        if theta[1] + 0.5 * theta[2] + theta[3] >= 1.0:
            return 1e12
        _, _, out = _kernels.gjr_filter(
            returns, theta[0], max(theta[1], 0.0), max(theta[2], 0.0),
            max(theta[3], 0.0), theta[4], rate_p, var,
        )
        return out

    theta_hat = np.array([a0, a1, a2, a3, kappa])
    stderr = _hessian_stderr(nll_theta, theta_hat)
    return GjrFit(
        spec=spec,
        loglik=-float(nll),
        stderr=stderr,
        converged=bool(best.success),
        sigma_last=float(sigma_path[-1]),
        eps_last=float(eps_path[-1]),
        n_obs=returns.shape[0],
        message=str(best.message),
    )


def _hessian_stderr(func, theta: np.ndarray) -> np.ndarray:
    """Asymptotic s.e. via a central finite-difference Hessian (pinv if singular)."""
    k = theta.shape[0]
    h = 1e-4 * np.maximum(np.abs(theta), 1e-4)
    hess = np.empty((k, k))
    f0 = func(theta)
    for i in range(k):
        for j in range(i, k):
            ei = np.zeros(k); ei[i] = h[i]
            ej = np.zeros(k); ej[j] = h[j]
            if i == j:
                val = (func(theta + ei) - 2 * f0 + func(theta - ei)) / h[i] ** 2
            else:
                val = (
                    func(theta + ei + ej) - func(theta + ei - ej)
                    - func(theta - ei + ej) + func(theta - ei - ej)
                ) / (4 * h[i] * h[j])
            hess[i, j] = hess[j, i] = val
    try:
        cov = np.linalg.pinv(hess)
        diag = np.clip(np.diag(cov), 0.0, None)
        return np.sqrt(diag)
    except np.linalg.LinAlgError:
        return np.full(k, np.nan)


@dataclass(frozen=True)
class DccFit:
    """Correlation-stage fit: spec, likelihood, terminal recursion state."""

    spec: DccSpec
    loglik: float
    stderr: np.ndarray            # asymptotic s.e. of (beta1, beta2)
    converged: bool
    d_last: np.ndarray            # recursion matrix after the last observation
    standardized: bool


def _dcc_innovations(
    eps: np.ndarray, sigma: np.ndarray, standardized: bool
) -> tuple[np.ndarray, np.ndarray]:
    u = eps / np.sqrt(sigma)
    inno = u if standardized else eps
    return u, inno


def fit_dcc(
    eps: np.ndarray,
    sigma: np.ndarray,
    standardized: bool = False,
) -> DccFit:
    """Two-stage DCC estimation over a panel of fitted marginals.

    The unconditional correlation is the sample correlation of the
    standardized residuals; (beta1, beta2) maximize the correlation-stage
    quasi-likelihood.  ``standardized`` selects which innovations drive the
    recursion (default: raw residual outer products).
    """
    eps = np.asarray(eps, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if eps.shape != sigma.shape or eps.ndim != 2:
        raise DomainError("eps and sigma must be matching T-by-m panels")
    u, inno = _dcc_innovations(eps, sigma, standardized)
    c_bar = np.corrcoef(u, rowvar=False)
    c_bar = 0.5 * (c_bar + c_bar.T)

    def nll_raw(v):
        total = expit(v[0])
        share = expit(v[1])
        out = _kernels.dcc_nll(u, inno, c_bar, total * share, total * (1 - share))
        return out if np.isfinite(out) else 1e12

    best = None
    for v0 in (np.array([-1.0, -2.0]), np.array([1.4, -3.0]), np.array([-3.0, 0.0])):
        res = minimize(nll_raw, v0, method="Nelder-Mead",
                       options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 600})
        if best is None or res.fun < best.fun:
            best = res
    total, share = expit(best.x[0]), expit(best.x[1])
    beta1, beta2 = float(total * share), float(total * (1 - share))
    spec = DccSpec(beta1=beta1, beta2=beta2, c_bar=c_bar)

    def nll_theta(theta):
        if theta[0] < 0 or theta[1] < 0 or theta[0] + theta[1] >= 1:
            return 1e12
        return _kernels.dcc_nll(u, inno, c_bar, theta[0], theta[1])

    stderr = _hessian_stderr(nll_theta, np.array([beta1, beta2]))
    d_last = dcc_recursion_path(eps, sigma, spec, standardized)[-1]
    loglik = -float(best.fun)
    return DccFit(spec=spec, loglik=loglik, stderr=stderr,
                  converged=bool(best.success), d_last=d_last,
                  standardized=standardized)


def dcc_recursion_path(
    eps: np.ndarray, sigma: np.ndarray, spec: DccSpec, standardized: bool = False
) -> np.ndarray:
    """Path of the correlation-numerator matrices D_t (T, m, m)."""
    eps = np.asarray(eps, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    _, inno = _dcc_innovations(eps, sigma, standardized)
    n, m = eps.shape
    out = np.empty((n, m, m))
    d_mat = np.array(spec.c_bar)
    intercept = spec.c_bar * (1.0 - spec.beta1 - spec.beta2)
    for t in range(n):
        if t > 0:
            d_mat = intercept + spec.beta1 * np.outer(inno[t - 1], inno[t - 1]) \
                + spec.beta2 * d_mat
        out[t] = d_mat
    return out


def dcc_correlation_path(
    eps: np.ndarray, sigma: np.ndarray, spec: DccSpec, standardized: bool = False
) -> np.ndarray:
    """Path of the conditional correlation matrices C_t (unit diagonal)."""
    d_path = dcc_recursion_path(eps, sigma, spec, standardized)
    rootd = np.sqrt(np.einsum("tii->ti", d_path))
    return d_path / (rootd[:, :, None] * rootd[:, None, :])


# ---------------------------------------------------------------------------
# Forecasting and simulation
# ---------------------------------------------------------------------------

def forecast_variance(
    spec: GarchSpec, eps_last: float, sigma_last: float, steps: int
) -> np.ndarray:
    """Iterated conditional variance forecasts from the current state.

    The one-step forecast applies the recursion exactly; further steps use
    the symmetric-innovation expectation of the leverage indicator, which
    contributes half of the squared-shock coefficient.
    """
    if steps < 1:
        raise DomainError("need at least one forecast step")
    out = np.empty(steps)
    lever = spec.alpha2 if eps_last < 0 else 0.0
    out[0] = spec.alpha0 + (spec.alpha1 + lever) * eps_last**2 \
        + spec.alpha3 * sigma_last
    for h in range(1, steps):
        out[h] = spec.alpha0 + spec.persistence * out[h - 1]
    return out


def discretion_signal(
    specs: Sequence[GarchSpec],
    eps_last: np.ndarray,
    sigma_last: np.ndarray,
) -> bool:
    """Risk-off flag: strict majority of one-step forecasts exceed current levels."""
    higher = 0
    for spec, e, s in zip(specs, eps_last, sigma_last):
        if forecast_variance(spec, float(e), float(s), 1)[0] > s:
            higher += 1
    return higher > len(specs) / 2


def simulate_gjr_univariate(
    spec: GarchSpec,
    sigma1: float,
    z: np.ndarray,
    risk_neutral: bool,
    dt: float = WEEK_DT,
) -> np.ndarray:
    """Single-stock per-period log returns from given standard normal draws.

    ``sigma1`` is the variance of the first simulated period; ``z`` has
    shape (paths, steps).  The risk-neutral version drops the premium from
    the drift and shifts the innovations feeding the recursion.
    """
    z = np.asarray(z, dtype=float)
    paths, steps = z.shape
    out = np.empty_like(z)
    rate_p = spec.rate * dt
    sig = np.full(paths, float(sigma1))
    for t in range(steps):
        vol = np.sqrt(sig)
        eps = vol * z[:, t]
        if risk_neutral:
            out[:, t] = rate_p - 0.5 * sig + eps
            inno = eps - spec.kappa * vol
        else:
            out[:, t] = rate_p + spec.kappa * vol - 0.5 * sig + eps
            inno = eps
        sig = spec.alpha0 + (spec.alpha1 + spec.alpha2 * (inno < 0.0)) * inno**2 \
            + spec.alpha3 * sig
    return out


def advance_state(
    specs: Sequence[GarchSpec],
    dcc: DccSpec,
    eps_last: np.ndarray,
    sigma_last: np.ndarray,
    d_last: np.ndarray | None = None,
    standardized: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """One-step advance of (variances, correlation numerator) past the data."""
    eps_last = np.asarray(eps_last, dtype=float)
    sigma_last = np.asarray(sigma_last, dtype=float)
    sigma1 = np.array([
        forecast_variance(spec, float(e), float(s), 1)[0]
        for spec, e, s in zip(specs, eps_last, sigma_last)
    ])
    if d_last is None:
        d_last = np.array(dcc.c_bar)
    inno = eps_last / np.sqrt(sigma_last) if standardized else eps_last
    d1 = dcc.c_bar * (1.0 - dcc.beta1 - dcc.beta2) \
        + dcc.beta1 * np.outer(inno, inno) + dcc.beta2 * d_last
    return sigma1, d1


def _simulate_joint(
    specs: Sequence[GarchSpec],
    dcc: DccSpec,
    sigma1: np.ndarray,
    d1: np.ndarray,
    steps: int,
    paths: int,
    seed: int,
    risk_neutral: bool,
    standardized: bool = False,
    dt: float = WEEK_DT,
    z: np.ndarray | None = None,
) -> np.ndarray:
    m = len(specs)
    rates = {spec.rate for spec in specs}
    if len(rates) != 1:
        raise DomainError("all marginals must share the risk-free rate")
    alphas = np.stack([spec.as_array() for spec in specs])
    kappas = np.array([spec.kappa for spec in specs])
    if z is None:
        z = np.random.default_rng(seed).standard_normal((paths, steps, m))
    elif z.shape != (paths, steps, m):
        raise DomainError("custom shock array must have shape (paths, steps, m)")
    return _kernels.dcc_simulate(
        z, alphas, kappas, rates.pop() * dt, dcc.c_bar, dcc.beta1, dcc.beta2,
        np.asarray(sigma1, dtype=float), np.asarray(d1, dtype=float),
        risk_neutral, standardized,
    )


def simulate_risk_neutral(
    specs: Sequence[GarchSpec],
    dcc: DccSpec,
    sigma1: np.ndarray,
    d1: np.ndarray,
    steps: int,
    paths: int,
    seed: int,
    standardized: bool = False,
    dt: float = WEEK_DT,
    z: np.ndarray | None = None,
) -> np.ndarray:
    """Joint return paths under the risk-neutral dynamics; seeded, (paths, steps, m)."""
    return _simulate_joint(specs, dcc, sigma1, d1, steps, paths, seed,
                           risk_neutral=True, standardized=standardized, dt=dt, z=z)


def simulate_physical(
    specs: Sequence[GarchSpec],
    dcc: DccSpec,
    sigma1: np.ndarray,
    d1: np.ndarray,
    steps: int,
    paths: int,
    seed: int,
    standardized: bool = False,
    dt: float = WEEK_DT,
    z: np.ndarray | None = None,
) -> np.ndarray:
    """Joint return paths under the physical dynamics; seeded, (paths, steps, m).

    ``z`` overrides the seeded standard normal draws, which lets callers
    inject stress scenarios while keeping the recursions intact.
    """
    return _simulate_joint(specs, dcc, sigma1, d1, steps, paths, seed,
                           risk_neutral=False, standardized=standardized, dt=dt, z=z)
