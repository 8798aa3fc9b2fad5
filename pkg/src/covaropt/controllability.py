"""Feasibility bounds on systemic risk and the two-stock diagnostics.

For a long-only, unit-wealth stock portfolio, no allocation can push the
conditional risk below a closed-form threshold: the smaller of a direct
bound from the distressed stocks' own losses and a max-min program over
the surviving stocks' conditional law.  This module computes both bounds
(the max-min as a small cone program), exposes a direct primal
minimum-risk solve as an independent oracle, and implements the two-stock
contagion and seesaw diagnostics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SolverError
from .linalgx import psd_sqrt
from .market import DistressEvent, MarketModel, conditional_law, normal_quantile
from .risk import two_asset_psi
from .socp import ConeProgram, SocBlock, solve


@dataclass(frozen=True)
class ControllabilityReport:
    """Closed-form uncontrollability test for one distress event.

    The risk of any admissible portfolio is bounded below by
    ``min(bound_distressed, bound_survivors)``; a target below both is
    infeasible.  ``witness`` is the unit-ball vector attaining the
    survivor bound.
    """

    bound_distressed: float
    bound_survivors: float
    witness: np.ndarray
    q_conf: float
    rho_query: float | None = None
    infeasible: bool | None = None

    @property
    def threshold(self) -> float:
        return min(self.bound_distressed, self.bound_survivors)

    def infeasible_at(self, rho_bar: float) -> bool:
        return rho_bar < self.bound_distressed and rho_bar < self.bound_survivors


def prop1_bounds(
    model: MarketModel,
    event: DistressEvent,
    q_conf: float,
    rho_bar: float | None = None,
    tol: float = 1e-9,
) -> ControllabilityReport:
    """Closed-form feasibility bounds for the long-only unit-wealth set.

    The survivor bound maximizes, over the unit ball, the worst stock's
    risk-adjusted conditional shortfall per unit price; it is solved as a
    small second-order cone program.
    """
    law = conditional_law(model, event)
    ii = list(event.distressed)
    jj = list(event.complement)
    prices = model.prices
    bound_i = float(np.min(event.k / prices[ii]))

    if not jj:
        bound_j = math.inf
        witness = np.zeros(0)
    else:
        alpha_q = normal_quantile(q_conf)
        f_mat = psd_sqrt(law.cond_cov, "conditional covariance")
        m_j = len(jj)
        # variables (r, t): maximize t s.t. p_j t - alpha_q F_col_j . r <= -c_j
        prog = ConeProgram.empty(m_j + 1)
        prog.maximize[m_j] = 1.0
        for col, j in enumerate(jj):
            row = np.zeros(m_j + 1)
            row[:m_j] = -alpha_q * f_mat[:, col]
            row[m_j] = prices[j]
            prog.add_ub(row, -float(law.cond_mean[col]))
        tail = np.zeros((m_j, m_j + 1))
        tail[:, :m_j] = np.eye(m_j)
        prog.cones.append(SocBlock(head_coef=np.zeros(m_j + 1), head_const=1.0,
                                   tail_coef=tail, tail_const=np.zeros(m_j)))
        sol = solve(prog, tol=tol)
        if not sol.optimal:
            raise SolverError(f"survivor-bound solve failed: {sol.status}")
        bound_j = float(sol.objective)
        witness = sol.x[:m_j]

    infeasible = None
    if rho_bar is not None:
        infeasible = rho_bar < bound_i and rho_bar < bound_j
    return ControllabilityReport(
        bound_distressed=bound_i, bound_survivors=bound_j, witness=witness,
        q_conf=q_conf, rho_query=rho_bar, infeasible=infeasible,
    )


def min_covar_primal(
    model: MarketModel, event: DistressEvent, q_conf: float, tol: float = 1e-9
):
    """Direct primal oracle: minimize the conditional risk over the

    long-only unit-wealth stock set.  A risk target is feasible exactly
    when it is at least this minimum; used to cross-check the closed-form
    bounds.
    """
    law = conditional_law(model, event)
    ii = list(event.distressed)
    jj = list(event.complement)
    m = model.n_stocks
    alpha_q = normal_quantile(q_conf)
    f_mat = psd_sqrt(law.cond_cov, "conditional covariance") if jj else np.zeros((0, 0))

    # variables (y, u, t): maximize -t
    n_vars = m + 2
    prog = ConeProgram.empty(n_vars)
    prog.maximize[m + 1] = -1.0
    prog.add_eq(np.concatenate([model.prices, [0.0, 0.0]]), 1.0)
    prog.lower[:m] = 0.0
    # alpha_q u - c'y_J + k'y_I - t <= 0
    row = np.zeros(n_vars)
    row[m] = alpha_q
    for col, j in enumerate(jj):
        row[j] = -law.cond_mean[col]
    for col, i in enumerate(ii):
        row[i] = event.k[col]
    row[m + 1] = -1.0
    prog.add_ub(row, 0.0)
    if jj:
        tail = np.zeros((len(jj), n_vars))
        for col, j in enumerate(jj):
            tail[:, j] = f_mat[:, col]
        head = np.zeros(n_vars)
        head[m] = 1.0
        prog.cones.append(SocBlock(head_coef=head, head_const=0.0,
                                   tail_coef=tail, tail_const=np.zeros(len(jj))))
    else:
        prog.lower[m] = 0.0
    sol = solve(prog, tol=tol)
    if not sol.optimal:
        raise SolverError(f"primal minimum-risk solve failed: {sol.status}")
    return float(-sol.objective), sol.x[:m]


@dataclass(frozen=True)
class SeesawCoefficients:
    """Slopes of the two conditional-risk lines in the first stock's weight."""

    slope_distress_first: float
    slope_distress_second: float
    product: float
    seesaw: bool


def seesaw_coefficients(
    model: MarketModel, p_conf: float, q_conf: float
) -> SeesawCoefficients:
    """Two-stock seesaw test under the unit-wealth budget.

    Both conditional risks are linear in the first stock's weight; a
    negative slope product means lowering one raises the other.  Moments
    are normalized per currency unit, so the flag is invariant to a common
    rescaling of both price units.
    """
    if model.n_stocks != 2:
        raise DomainError("the seesaw diagnostic is a two-stock construction")
    p = model.prices
    if abs(p[0] - p[1]) > 1e-12 * max(p[0], p[1]):
        raise DomainError("the unit-wealth budget requires equal stock prices")
    mu = model.mu / p
    sig = model.sigma / np.outer(p, p)
    rho = sig[0, 1] / math.sqrt(sig[0, 0] * sig[1, 1])
    alpha_p = normal_quantile(p_conf)
    psi = two_asset_psi(rho, p_conf, q_conf)
    s1 = math.sqrt(sig[0, 0])
    s2 = math.sqrt(sig[1, 1])
    slope1 = alpha_p * s1 - mu[0] - psi * s2 + mu[1]
    slope2 = psi * s1 - mu[0] - alpha_p * s2 + mu[1]
    product = slope1 * slope2
    return SeesawCoefficients(
        slope_distress_first=slope1,
        slope_distress_second=slope2,
        product=product,
        seesaw=bool(product < 0.0),
    )


def contagion_surface(
    p_conf: float = 0.95,
    q_conf: float = 0.95,
    rho_grid: np.ndarray | None = None,
    loss_grid: np.ndarray | None = None,
    variance: float = 0.01,
    weights: tuple[float, float] = (0.5, 0.5),
) -> list[tuple[float, float, float]]:
    """Conditional risk of a 50/50 two-stock portfolio over (rho, loss).

    Zero means, equal unit prices, equal variances.  Conditioning the
    first stock at the given loss shifts the survivor's mean by
    ``-rho * loss`` and shrinks its variance by ``1 - rho^2``; each row of
    the output is ``(rho, loss, risk)``.
    """
    if rho_grid is None:
        rho_grid = np.linspace(0.0, 1.0, 51)
    if loss_grid is None:
        k = normal_quantile(p_conf) * math.sqrt(variance)
        loss_grid = np.linspace(0.0, 2.0 * k, 51)
    alpha_q = normal_quantile(q_conf)
    y1, y2 = weights
    vol = math.sqrt(variance)
    rows = []
    for rho in rho_grid:
        spread = alpha_q * vol * math.sqrt(max(1.0 - rho * rho, 0.0)) * y2
        for loss in loss_grid:
            risk = spread + y2 * rho * loss + y1 * loss
            rows.append((float(rho), float(loss), float(risk)))
    return rows
