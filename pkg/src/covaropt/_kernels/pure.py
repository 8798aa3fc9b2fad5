"""Pure NumPy implementations of the hot recursion kernels.

These mirror the compiled extension in ``_native.pyx`` exactly (same
signatures, same recursions, same state conventions) and are selected at
import time when the extension is unavailable or explicitly disabled.
"""

from __future__ import annotations

import math

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)


def gjr_filter(
    returns: np.ndarray,
    a0: float,
    a1: float,
    a2: float,
    a3: float,
    kappa: float,
    rate: float,
    sigma0: float,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Asymmetric-GARCH variance filter with in-mean risk premium.

    Mean equation ``r_t = rate + kappa*sqrt(s_t) - s_t/2 + e_t`` and
    variance recursion ``s_{t+1} = a0 + a1*e_t^2 + a2*e_t^2*[e_t<0] + a3*s_t``
    started at ``sigma0``.

    Returns the variance path, the residual path, and the Gaussian negative
    log-likelihood.
    """
    returns = np.asarray(returns, dtype=float)
    n = returns.shape[0]
    sigma = np.empty(n)
    eps = np.empty(n)
    s = float(sigma0)
    nll = 0.0
    for t in range(n):
        sigma[t] = s
        e = returns[t] - rate - kappa * math.sqrt(s) + 0.5 * s
        eps[t] = e
        nll += 0.5 * (LOG_2PI + math.log(s) + e * e / s)
        s = a0 + (a1 + (a2 if e < 0.0 else 0.0)) * e * e + a3 * s
    return sigma, eps, nll


def dcc_nll(
    u: np.ndarray,
    inno: np.ndarray,
    c_bar: np.ndarray,
    b1: float,
    b2: float,
) -> float:
    """Correlation-stage negative quasi-log-likelihood of a DCC recursion.

    ``u`` holds the standardized residuals entering the likelihood and
    ``inno`` the innovations entering the recursion
    ``D_t = C*(1-b1-b2) + b1*inno_{t-1} inno_{t-1}' + b2*D_{t-1}`` started
    at ``D_0 = C``.  Correlation matrices are read off ``D_t`` by
    normalizing with the square roots of its diagonal.
    """
    u = np.asarray(u, dtype=float)
    inno = np.asarray(inno, dtype=float)
    n, m = u.shape
    d_mat = np.array(c_bar, dtype=float)
    intercept = np.asarray(c_bar, dtype=float) * (1.0 - b1 - b2)
    nll = 0.0
    for t in range(n):
        if t > 0:
            d_mat = intercept + b1 * np.outer(inno[t - 1], inno[t - 1]) + b2 * d_mat
        rootd = np.sqrt(np.diag(d_mat))
        corr = d_mat / np.outer(rootd, rootd)
        try:
            chol = np.linalg.cholesky(corr)
        except np.linalg.LinAlgError:
            return float("inf")
        sol = _forward_solve(chol, u[t])
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        nll += 0.5 * (logdet + sol @ sol - u[t] @ u[t])
    return float(nll)


def _forward_solve(chol: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``L w = rhs`` for lower-triangular ``L``."""
    m = rhs.shape[0]
    w = np.empty(m)
    for i in range(m):
        w[i] = (rhs[i] - chol[i, :i] @ w[:i]) / chol[i, i]
    return w


def dcc_simulate(
    z: np.ndarray,
    alphas: np.ndarray,
    kappas: np.ndarray,
    rate: float,
    c_bar: np.ndarray,
    b1: float,
    b2: float,
    sigma1: np.ndarray,
    d1: np.ndarray,
    risk_neutral: bool,
    standardized: bool,
) -> np.ndarray:
    """Joint return-path simulation of the multivariate GARCH system.

    ``z`` is a (paths, steps, m) block of standard normal draws; the output
    has the same shape and holds per-period log returns.  ``sigma1`` and
    ``d1`` are the per-stock variances and the correlation-numerator matrix
    already advanced to the first simulated period.  Under the risk-neutral
    flag the drift drops the risk premium and the recursions are driven by
    the premium-shifted innovations, so with zero premium the two measures
    coincide path-for-path.
    """
    z = np.asarray(z, dtype=float)
    paths, steps, m = z.shape
    alphas = np.asarray(alphas, dtype=float)
    kappas = np.asarray(kappas, dtype=float)
    out = np.empty_like(z)

    sig = np.broadcast_to(np.asarray(sigma1, dtype=float), (paths, m)).copy()
    d_mat = np.broadcast_to(np.asarray(d1, dtype=float), (paths, m, m)).copy()
    intercept = np.asarray(c_bar, dtype=float) * (1.0 - b1 - b2)
    a0, a1, a2, a3 = alphas[:, 0], alphas[:, 1], alphas[:, 2], alphas[:, 3]

    for t in range(steps):
        if t > 0:
            d_mat = (
                intercept
                + b1 * prev_inno[:, :, None] * prev_inno[:, None, :]
                + b2 * d_mat
            )
        rootd = np.sqrt(np.einsum("pii->pi", d_mat))
        corr = d_mat / (rootd[:, :, None] * rootd[:, None, :])
        try:
            chol = np.linalg.cholesky(corr)
        except np.linalg.LinAlgError:
            raise FloatingPointError(
                "correlation recursion lost positive definiteness"
            ) from None
        shock = np.einsum("pij,pj->pi", chol, z[:, t, :])
        vol = np.sqrt(sig)
        eps_q = vol * shock
        if risk_neutral:
            out[:, t, :] = rate - 0.5 * sig + eps_q
            inno = eps_q - kappas * vol
        else:
            out[:, t, :] = rate + kappas * vol - 0.5 * sig + eps_q
            inno = eps_q
        sig = a0 + (a1 + a2 * (inno < 0.0)) * inno * inno + a3 * sig
        prev_inno = inno / vol if standardized else inno
    return out
