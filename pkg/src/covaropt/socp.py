"""Second-order cone programming: canonical form, embedded solver, builders.

The solver is a dense primal-dual path-following method on the homogeneous
self-dual embedding, with Nesterov-Todd scaling for second-order cone
blocks and a Mehrotra predictor-corrector step.  Standard form:

    minimize    c'x
    subject to  A x = b
                G x + s = h,    s in K

with K a product of a nonnegative orthant and second-order cones
(each block ``(s0, s1)`` with ``s0 >= ||s1||``).  Infeasibility and
unboundedness are certified through the embedding's tau/kappa split.

On top of the solver sit the portfolio model builders: the full
return-maximization program with a variance cone and one systemic-risk
cone per distress event, its epigraph variants for minimum-risk solves,
and the two-parameter efficient-frontier grid procedure.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .errors import DomainError, SolverError
from .instruments import GreekSet
from .linalgx import psd_sqrt
from .market import DistressEvent, MarketModel, normal_quantile
from .risk import (
    Portfolio,
    conditional_structure,
    unconditional_structure,
    worst_case_multiplier,
)


def worker_count() -> int:
    """Internal parallelism cap from the COVAROPT_THREADS environment variable."""
    raw = os.environ.get("COVAROPT_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


# ---------------------------------------------------------------------------
# Cone arithmetic
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConeDims:
    """Sizes of the orthant block and each second-order cone block."""

    orthant: int
    soc: tuple[int, ...] = ()

    @property
    def total(self) -> int:
        return self.orthant + sum(self.soc)

    @property
    def degree(self) -> int:
        return self.orthant + len(self.soc)

    def soc_slices(self):
        start = self.orthant
        for q in self.soc:
            yield slice(start, start + q)
            start += q


def _cone_unit(dims: ConeDims) -> np.ndarray:
    e = np.zeros(dims.total)
    e[: dims.orthant] = 1.0
    for sl in dims.soc_slices():
        e[sl.start] = 1.0
    return e


def _interior(u: np.ndarray, dims: ConeDims) -> bool:
    if np.any(u[: dims.orthant] <= 0.0):
        return False
    for sl in dims.soc_slices():
        if u[sl.start] <= np.linalg.norm(u[sl.start + 1: sl.stop]):
            return False
    return True


def _max_step(u: np.ndarray, du: np.ndarray, dims: ConeDims) -> float:
    """Largest step keeping ``u + alpha du`` in the cone (boundary distance)."""
    alpha = math.inf
    orth = slice(0, dims.orthant)
    neg = du[orth] < 0.0
    if np.any(neg):
        alpha = float(np.min(-u[orth][neg] / du[orth][neg]))
    for sl in dims.soc_slices():
        u0, d0 = float(u[sl.start]), float(du[sl.start])
        u1 = u[sl.start + 1: sl.stop]
        d1 = du[sl.start + 1: sl.stop]
        a = d0 * d0 - float(d1 @ d1)
        b = u0 * d0 - float(u1 @ d1)
        c = u0 * u0 - float(u1 @ u1)
        candidates = []
        if abs(a) < 1e-14:
            if b < 0.0:
                candidates.append(-c / (2.0 * b))
        else:
            disc = b * b - a * c
            if disc >= 0.0:
                root = math.sqrt(disc)
                for r in ((-b - root) / a, (-b + root) / a):
                    if r > 0.0:
                        candidates.append(r)
        if d0 < 0.0:
            candidates.append(-u0 / d0)
        if candidates:
            alpha = min(alpha, min(candidates))
    return alpha


def _jordan_prod(u: np.ndarray, v: np.ndarray, dims: ConeDims) -> np.ndarray:
    out = np.empty_like(u)
    o = dims.orthant
    out[:o] = u[:o] * v[:o]
    for sl in dims.soc_slices():
        u0, v0 = u[sl.start], v[sl.start]
        u1 = u[sl.start + 1: sl.stop]
        v1 = v[sl.start + 1: sl.stop]
        out[sl.start] = u0 * v0 + u1 @ v1
        out[sl.start + 1: sl.stop] = u0 * v1 + v0 * u1
    return out


def _jordan_solve(lmbda: np.ndarray, v: np.ndarray, dims: ConeDims) -> np.ndarray:
    """Solve ``lmbda o x = v`` blockwise (lmbda strictly interior)."""
    out = np.empty_like(v)
    o = dims.orthant
    out[:o] = v[:o] / lmbda[:o]
    for sl in dims.soc_slices():
        l0 = lmbda[sl.start]
        l1 = lmbda[sl.start + 1: sl.stop]
        v0 = v[sl.start]
        v1 = v[sl.start + 1: sl.stop]
        det = l0 * l0 - float(l1 @ l1)
        x0 = (l0 * v0 - l1 @ v1) / det
        out[sl.start] = x0
        out[sl.start + 1: sl.stop] = (v1 - x0 * l1) / l0
    return out


class _Scaling:
    """Nesterov-Todd scaling W (symmetric) with dense per-SOC blocks."""

    def __init__(self, s: np.ndarray, z: np.ndarray, dims: ConeDims):
        self.dims = dims
        o = dims.orthant
        self.w_orth = np.sqrt(s[:o] / z[:o])
        self.blocks: list[np.ndarray] = []
        self.inv_blocks: list[np.ndarray] = []
        for sl in dims.soc_slices():
            sb, zb = s[sl], z[sl]
            a = math.sqrt(_soc_res(sb))
            b = math.sqrt(_soc_res(zb))
            s_bar, z_bar = sb / a, zb / b
            gamma = math.sqrt((1.0 + s_bar @ z_bar) / 2.0)
            w_bar = np.empty_like(sb)
            w_bar[0] = (s_bar[0] + z_bar[0]) / (2.0 * gamma)
            w_bar[1:] = (s_bar[1:] - z_bar[1:]) / (2.0 * gamma)
            beta = math.sqrt(a / b)
            self.blocks.append(beta * _soc_hyperbolic(w_bar))
            self.inv_blocks.append(_soc_hyperbolic_inv(w_bar) / beta)

    def apply(self, v: np.ndarray) -> np.ndarray:
        out = np.empty_like(v)
        o = self.dims.orthant
        out[:o] = self.w_orth * v[:o]
        for blk, sl in zip(self.blocks, self.dims.soc_slices()):
            out[sl] = blk @ v[sl]
        return out

    def apply_inv(self, v: np.ndarray) -> np.ndarray:
        out = np.empty_like(v)
        o = self.dims.orthant
        out[:o] = v[:o] / self.w_orth
        for blk, sl in zip(self.inv_blocks, self.dims.soc_slices()):
            out[sl] = blk @ v[sl]
        return out

    def squared_dense(self) -> np.ndarray:
        """Dense W^2 for the KKT (3,3) block."""
        n = self.dims.total
        out = np.zeros((n, n))
        o = self.dims.orthant
        out[np.arange(o), np.arange(o)] = self.w_orth**2
        for blk, sl in zip(self.blocks, self.dims.soc_slices()):
            out[sl, sl] = blk @ blk
        return out


def _soc_res(u: np.ndarray) -> float:
    return float(u[0] * u[0] - u[1:] @ u[1:])


def _soc_hyperbolic(w_bar: np.ndarray) -> np.ndarray:
    """Symmetric H with H e = w_bar and H J H = J (hyperbolic Householder)."""
    q = w_bar.shape[0]
    out = np.empty((q, q))
    out[0, 0] = w_bar[0]
    out[0, 1:] = w_bar[1:]
    out[1:, 0] = w_bar[1:]
    out[1:, 1:] = np.eye(q - 1) + np.outer(w_bar[1:], w_bar[1:]) / (1.0 + w_bar[0])
    return out


def _soc_hyperbolic_inv(w_bar: np.ndarray) -> np.ndarray:
    flipped = w_bar.copy()
    flipped[1:] = -flipped[1:]
    return _soc_hyperbolic(flipped)


# ---------------------------------------------------------------------------
# Homogeneous self-dual solver
# ---------------------------------------------------------------------------

@dataclass
class ConelpResult:
    status: str
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    s: np.ndarray
    pres: float
    dres: float
    relgap: float
    pcost: float
    dcost: float
    iterations: int
    trace: list[tuple[float, float, float]] = field(default_factory=list)


def solve_conelp(
    c: np.ndarray,
    a_eq: np.ndarray,
    b_eq: np.ndarray,
    g_mat: np.ndarray,
    h_vec: np.ndarray,
    dims: ConeDims,
    tol: float = 1e-8,
    max_iter: int = 100,
    verbose: bool = False,
) -> ConelpResult:
    """Solve the standard-form cone LP by self-dual embedding.

    Status is one of ``optimal`` (all normalized KKT residuals below
    ``tol``), ``infeasible`` / ``unbounded`` (certified through the
    embedding), or ``max_iter``.
    """
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    a_eq = np.asarray(a_eq, dtype=float).reshape(-1, n)
    b_eq = np.asarray(b_eq, dtype=float)
    g_mat = np.asarray(g_mat, dtype=float).reshape(-1, n)
    h_vec = np.asarray(h_vec, dtype=float)
    p, mc = a_eq.shape[0], g_mat.shape[0]
    if mc != dims.total:
        raise DomainError("cone dimensions do not match G")
    if mc == 0:
        raise DomainError("need at least one conic or inequality row")

    e = _cone_unit(dims)
    norm_b = 1.0 + np.linalg.norm(b_eq)
    norm_h = 1.0 + np.linalg.norm(h_vec)
    norm_c = 1.0 + np.linalg.norm(c)
    reg = 1e-11

    def factor(w2: np.ndarray):
        kkt = np.zeros((n + p + mc, n + p + mc))
        kkt[:n, n:n + p] = a_eq.T
        kkt[:n, n + p:] = g_mat.T
        kkt[n:n + p, :n] = a_eq
        kkt[n + p:, :n] = g_mat
        kkt[n + p:, n + p:] = -w2
        kkt[:n, :n] = reg * np.eye(n)
        kkt[n:n + p, n:n + p] = -reg * np.eye(p)
        return sla.lu_factor(kkt), kkt

    def kkt_solve(lu, kkt_unreg, rx, ry, rz):
        rhs = np.concatenate([rx, ry, rz])
        sol = sla.lu_solve(lu, rhs)
        # one round of iterative refinement against the unregularized system
        resid = rhs - kkt_unreg @ sol
        resid[:n] += reg * sol[:n]
        resid[n:n + p] -= reg * sol[n:n + p]
        sol = sol + sla.lu_solve(lu, resid)
        return sol[:n], sol[n:n + p], sol[n + p:]

    # --- initialization: least-squares-ish primal and dual starts
    lu0, kkt0 = factor(np.eye(mc))
    x0, _, z0 = kkt_solve(lu0, kkt0, np.zeros(n), b_eq, h_vec)
    s = -z0
    shift = _init_shift(s, dims)
    if shift >= 0.0:
        s = s + (1.0 + shift) * e
    xd, y, zd = kkt_solve(lu0, kkt0, -c, np.zeros(p), np.zeros(mc))
    z = zd
    shift = _init_shift(z, dims)
    if shift >= 0.0:
        z = z + (1.0 + shift) * e
    x = x0
    tau, kappa = 1.0, 1.0

    trace: list[tuple[float, float, float]] = []
    status = "max_iter"
    iters = 0
    for iters in range(1, max_iter + 1):
        res_x = a_eq.T @ y + g_mat.T @ z + c * tau
        res_y = a_eq @ x - b_eq * tau
        res_z = g_mat @ x + s - h_vec * tau
        res_tau = kappa + c @ x + b_eq @ y + h_vec @ z

        pcost = float(c @ x / tau)
        dcost = float(-(b_eq @ y + h_vec @ z) / tau)
        gap = float(s @ z / tau**2)
        relgap = gap / max(1.0, abs(pcost))
        pres = max(np.linalg.norm(res_y) / (tau * norm_b),
                   np.linalg.norm(res_z) / (tau * norm_h))
        dres = np.linalg.norm(res_x) / (tau * norm_c)
        trace.append((pcost, dcost, gap))
        if verbose:
            print(f"iter {iters:3d} pcost {pcost:+.6e} dcost {dcost:+.6e} "
                  f"gap {gap:.3e} pres {pres:.3e} dres {dres:.3e}")

        if pres < tol and dres < tol and (relgap < tol or gap < tol * 1e-2):
            status = "optimal"
            break

        # Farkas certificates: z stays interior, so a small scaled residual
        # against a negative b'y + h'z certifies primal infeasibility (and
        # symmetrically for unboundedness).  The tau/kappa collapse below
        # classifies rays the certificates missed.
        by_hz = float(b_eq @ y + h_vec @ z)
        if by_hz < 0.0:
            pinfres = np.linalg.norm(a_eq.T @ y + g_mat.T @ z) / (-by_hz) / norm_c
            if pinfres < tol:
                status = "infeasible"
                y = y / (-by_hz)
                z = z / (-by_hz)
                break
        cx = float(c @ x)
        if cx < 0.0:
            dinfres = max(np.linalg.norm(a_eq @ x),
                          np.linalg.norm(g_mat @ x + s)) / (-cx) / norm_h
            if dinfres < tol:
                status = "unbounded"
                x = x / (-cx)
                s = s / (-cx)
                break

        scaling = _Scaling(s, z, dims)
        lmbda = scaling.apply(z)
        lu, kkt_raw = factor(scaling.squared_dense())
        mu = (float(s @ z) + tau * kappa) / (dims.degree + 1)

        x1, y1, z1 = kkt_solve(lu, kkt_raw, -c, b_eq, h_vec)
        denom_tau = float(c @ x1 + b_eq @ y1 + h_vec @ z1) - kappa / tau

        def direction(sigma, eta_corr, dtk_corr):
            shrink = 1.0 - sigma
            bs = -_jordan_prod(lmbda, lmbda, dims)
            if eta_corr is not None:
                bs = bs - eta_corr
            bs = bs + sigma * mu * e
            bkappa = -tau * kappa - dtk_corr + sigma * mu
            bs_tilde = _jordan_solve(lmbda, bs, dims)
            rz_eff = -shrink * res_z - scaling.apply(bs_tilde)
            x2, y2, z2 = kkt_solve(lu, kkt_raw, -shrink * res_x,
                                   -shrink * res_y, rz_eff)
            num = -shrink * res_tau - bkappa / tau \
                - float(c @ x2 + b_eq @ y2 + h_vec @ z2)
            dtau = num / denom_tau
            dx = x2 + dtau * x1
            dy = y2 + dtau * y1
            dz = z2 + dtau * z1
            ds = scaling.apply(bs_tilde) - scaling.squared_dense() @ dz
            dkappa = (bkappa - kappa * dtau) / tau
            return dx, dy, dz, ds, dtau, dkappa

        # predictor
        dxa, dya, dza, dsa, dtaua, dkappaa = direction(0.0, None, 0.0)
        alpha_aff = _step_length(s, z, tau, kappa, dsa, dza, dtaua, dkappaa, dims)
        sigma = min(1.0, max(0.0, (1.0 - alpha_aff))) ** 3

        # corrector
        eta_corr = _jordan_prod(scaling.apply_inv(dsa), scaling.apply(dza), dims)
        dx, dy, dz, ds, dtau, dkappa = direction(sigma, eta_corr, dtaua * dkappaa)
        alpha = 0.99 * _step_length(s, z, tau, kappa, ds, dz, dtau, dkappa, dims)
        alpha = min(alpha, 1.0)
        while alpha > 1e-14 and not (
            _interior(s + alpha * ds, dims) and _interior(z + alpha * dz, dims)
            and tau + alpha * dtau > 0 and kappa + alpha * dkappa > 0
        ):
            alpha *= 0.97

        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * ds
        tau += alpha * dtau
        kappa += alpha * dkappa

        if tau < 1e-8 * max(1.0, kappa) or not np.isfinite(mu):
            status = _classify_ray(c, a_eq, b_eq, g_mat, h_vec, x, y, z, s, tol)
            break

    if status == "max_iter":
        # max_iter exits may still sit on a certificate ray
        if tau < 1e-6 * max(1.0, kappa):
            status = _classify_ray(c, a_eq, b_eq, g_mat, h_vec, x, y, z, s, tol)

    if status in ("optimal", "max_iter"):
        x_out, y_out = x / tau, y / tau
        z_out, s_out = z / tau, s / tau
    else:
        x_out, y_out, z_out, s_out = x, y, z, s
    pcost = float(c @ x_out)
    dcost = float(-(b_eq @ y_out + h_vec @ z_out))
    gap = float(s_out @ z_out)
    return ConelpResult(
        status=status, x=x_out, y=y_out, z=z_out, s=s_out,
        pres=float(max(
            np.linalg.norm(a_eq @ x_out - b_eq) / norm_b,
            np.linalg.norm(g_mat @ x_out + s_out - h_vec) / norm_h,
        )),
        dres=float(np.linalg.norm(a_eq.T @ y_out + g_mat.T @ z_out + c) / norm_c),
        relgap=float(gap / max(1.0, abs(pcost))),
        pcost=pcost, dcost=dcost, iterations=iters, trace=trace,
    )


def _init_shift(u: np.ndarray, dims: ConeDims) -> float:
    worst = -math.inf
    if dims.orthant:
        worst = max(worst, float(-np.min(u[: dims.orthant])))
    for sl in dims.soc_slices():
        worst = max(worst, float(np.linalg.norm(u[sl.start + 1: sl.stop]) - u[sl.start]))
    return worst


def _step_length(s, z, tau, kappa, ds, dz, dtau, dkappa, dims) -> float:
    alpha = min(_max_step(s, ds, dims), _max_step(z, dz, dims))
    if dtau < 0.0:
        alpha = min(alpha, -tau / dtau)
    if dkappa < 0.0:
        alpha = min(alpha, -kappa / dkappa)
    return min(alpha, 1.0)


def _classify_ray(c, a_eq, b_eq, g_mat, h_vec, x, y, z, s, tol) -> str:
    by_hz = float(b_eq @ y + h_vec @ z)
    cx = float(c @ x)
    if by_hz < 0.0:
        pinf = np.linalg.norm(a_eq.T @ y + g_mat.T @ z) / (-by_hz)
        if pinf < math.sqrt(tol):
            return "infeasible"
    if cx < 0.0:
        dinf = max(np.linalg.norm(a_eq @ x), np.linalg.norm(g_mat @ x + s)) / (-cx)
        if dinf < math.sqrt(tol):
            return "unbounded"
    return "max_iter"


# ---------------------------------------------------------------------------
# Canonical cone program over named variables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SocBlock:
    """``||tail_coef x + tail_const|| <= head_coef x + head_const``."""

    head_coef: np.ndarray
    head_const: float
    tail_coef: np.ndarray
    tail_const: np.ndarray


@dataclass
class ConeProgram:
    """Linear objective (maximized) over linear and second-order-cone rows."""

    maximize: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray
    a_ub: np.ndarray
    b_ub: np.ndarray
    cones: list[SocBlock]
    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def empty(cls, n: int) -> "ConeProgram":
        return cls(
            maximize=np.zeros(n),
            a_eq=np.zeros((0, n)), b_eq=np.zeros(0),
            a_ub=np.zeros((0, n)), b_ub=np.zeros(0),
            cones=[],
            lower=np.full(n, -np.inf), upper=np.full(n, np.inf),
        )

    @property
    def n_vars(self) -> int:
        return self.maximize.shape[0]

    def add_ub(self, row: np.ndarray, rhs: float) -> None:
        self.a_ub = np.vstack([self.a_ub, row])
        self.b_ub = np.append(self.b_ub, rhs)

    def add_eq(self, row: np.ndarray, rhs: float) -> None:
        self.a_eq = np.vstack([self.a_eq, row])
        self.b_eq = np.append(self.b_eq, rhs)

    def to_standard(self):
        n = self.n_vars
        g_rows = [self.a_ub]
        h_parts = [self.b_ub]
        for i in range(n):
            if np.isfinite(self.upper[i]):
                row = np.zeros(n); row[i] = 1.0
                g_rows.append(row[None, :]); h_parts.append([self.upper[i]])
            if np.isfinite(self.lower[i]):
                row = np.zeros(n); row[i] = -1.0
                g_rows.append(row[None, :]); h_parts.append([-self.lower[i]])
        orthant = sum(r.shape[0] if r.ndim == 2 else 1 for r in g_rows)
        soc_dims = []
        for cone in self.cones:
            g_rows.append(-np.vstack([cone.head_coef[None, :], cone.tail_coef]))
            h_parts.append(np.concatenate([[cone.head_const], cone.tail_const]))
            soc_dims.append(1 + cone.tail_coef.shape[0])
        g_mat = np.vstack([np.atleast_2d(r) for r in g_rows]) if g_rows else \
            np.zeros((0, n))
        h_vec = np.concatenate([np.atleast_1d(p) for p in h_parts]) if h_parts else \
            np.zeros(0)
        return -self.maximize, self.a_eq, self.b_eq, g_mat, h_vec, \
            ConeDims(orthant=orthant, soc=tuple(soc_dims))


@dataclass(frozen=True)
class Solution:
    """Solver outcome in the program's own variables."""

    status: str
    x: np.ndarray
    objective: float
    eq_dual: np.ndarray
    ineq_dual: np.ndarray
    cone_duals: tuple[np.ndarray, ...]
    pres: float
    dres: float
    relgap: float
    iterations: int
    trace: tuple[tuple[float, float, float], ...] = ()

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def solve(
    program: ConeProgram,
    tol: float = 1e-8,
    max_iter: int = 100,
    verbose: bool = False,
) -> Solution:
    """Solve a :class:`ConeProgram`; never raises on well-formed input."""
    c, a_eq, b_eq, g_mat, h_vec, dims = program.to_standard()
    res = solve_conelp(c, a_eq, b_eq, g_mat, h_vec, dims,
                       tol=tol, max_iter=max_iter, verbose=verbose)
    n_ub = program.a_ub.shape[0]
    cone_duals = tuple(res.z[sl] for sl in dims.soc_slices())
    return Solution(
        status=res.status,
        x=res.x,
        objective=float(program.maximize @ res.x),
        eq_dual=res.y,
        ineq_dual=res.z[:n_ub],
        cone_duals=cone_duals,
        pres=res.pres,
        dres=res.dres,
        relgap=res.relgap,
        iterations=res.iterations,
        trace=tuple(res.trace),
    )


# ---------------------------------------------------------------------------
# Portfolio program builders
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OmegaBounds:
    """Admissible-set data: rebalance budget, per-name bounds, prices.

    ``theta`` auxiliaries linearize the buy-at-ask / sell-at-bid rebalance
    cost from the initial option holdings ``x0``; ``k0`` is the budget on
    option cost plus stock value.  Bound rows are the asymmetric
    ``l_d <= bid*x`` and ``ask*x <= u_d`` forms, taken verbatim.
    """

    k0: float
    x0: np.ndarray
    d_ask: np.ndarray
    d_bid: np.ndarray
    l_d: np.ndarray
    u_d: np.ndarray
    l_p: np.ndarray
    u_p: np.ndarray
    option_budget: float | None = None

    @classmethod
    def fresh(cls, d_ask, d_bid, l_d, u_d, l_p, u_p, k0=1.0, option_budget=None):
        d_ask = np.asarray(d_ask, dtype=float)
        n = d_ask.shape[0]
        return cls(
            k0=float(k0), x0=np.zeros(n), d_ask=d_ask,
            d_bid=np.asarray(d_bid, dtype=float),
            l_d=np.broadcast_to(np.asarray(l_d, dtype=float), (n,)).copy(),
            u_d=np.broadcast_to(np.asarray(u_d, dtype=float), (n,)).copy(),
            l_p=np.asarray(l_p, dtype=float),
            u_p=np.asarray(u_p, dtype=float),
            option_budget=option_budget,
        )


def _risk_multiplier(q_conf: float, risk_mode: str) -> float:
    if risk_mode == "normal":
        return normal_quantile(q_conf)
    if risk_mode == "worst_case":
        return worst_case_multiplier(q_conf)
    raise DomainError(f"unknown risk mode {risk_mode!r}")


@dataclass(frozen=True)
class P1Matrices:
    """Factorized cone data shared by every program over one universe."""

    model: MarketModel
    n_options: int
    eta: np.ndarray
    h_var: np.ndarray          # rows of the variance cone over (x, y)
    m_var: np.ndarray          # option-curvature rows of the variance cone
    events: tuple[DistressEvent, ...]
    g_list: tuple[np.ndarray, ...]
    h_list: tuple[np.ndarray, ...]
    q_list: tuple[np.ndarray, ...]   # rows over (x, y_J)
    n_list: tuple[np.ndarray, ...]
    jj_list: tuple[tuple[int, ...], ...]


def p1_matrices(
    model: MarketModel,
    events: Sequence[DistressEvent],
    greeks: Sequence[GreekSet],
) -> P1Matrices:
    """Precompute every factor matrix used by the cone rows."""
    uncond = unconditional_structure(model, greeks)
    l_mat = psd_sqrt(model.sigma, "sigma")
    h_var = l_mat @ uncond.v_mat
    m_var = psd_sqrt(uncond.phi_mat, "phi")
    g_list, h_list, q_list, n_list, jj_list = [], [], [], [], []
    for event in events:
        cond = conditional_structure(model, event, greeks)
        f_mat = psd_sqrt(cond.law.cond_cov, "conditional covariance")
        q_list.append(f_mat @ cond.w_mat)
        n_list.append(psd_sqrt(cond.s_mat, "trace coupling"))
        g_list.append(cond.g)
        h_list.append(cond.h)
        jj_list.append(tuple(event.complement))
    return P1Matrices(
        model=model, n_options=len(greeks), eta=uncond.eta,
        h_var=h_var, m_var=m_var, events=tuple(events),
        g_list=tuple(g_list), h_list=tuple(h_list),
        q_list=tuple(q_list), n_list=tuple(n_list), jj_list=tuple(jj_list),
    )


def _variance_tail(mats: P1Matrices, n, m, n_extra):
    """Tail rows of the variance cone over the stacked variable vector."""
    rows = mats.h_var.shape[0] + n
    tail = np.zeros((rows, n + m + n + n_extra))
    tail[: mats.h_var.shape[0], : n + m] = mats.h_var
    tail[mats.h_var.shape[0]:, :n] = mats.m_var / math.sqrt(2.0)
    return tail


def _covar_tail(mats: P1Matrices, idx, n, m, n_extra):
    q_mat = mats.q_list[idx]
    jj = mats.jj_list[idx]
    rows = q_mat.shape[0] + n
    tail = np.zeros((rows, n + m + n + n_extra))
    tail[: q_mat.shape[0], :n] = q_mat[:, :n]
    for col, j in enumerate(jj):
        tail[: q_mat.shape[0], n + j] = q_mat[:, n + col]
    tail[q_mat.shape[0]:, :n] = mats.n_list[idx] / math.sqrt(2.0)
    return tail


def assemble_program(
    mats: P1Matrices,
    omega: OmegaBounds,
    q_conf: float,
    sigma_bar: float | None,
    rho_bars: Sequence[float | None] | None,
    risk_mode: str = "normal",
    objective: str = "return",
    epigraph_event: int = 0,
) -> ConeProgram:
    """Build the optimization program over variables ``(x, y, theta[, t])``.

    ``objective`` selects return maximization, minimum systemic risk
    (epigraph on the chosen event's risk), or minimum variance; ``None``
    entries in ``rho_bars`` drop that event's risk constraint, and
    ``sigma_bar=None`` drops the variance constraint.
    """
    model = mats.model
    n = mats.n_options
    m = model.n_stocks
    n_extra = 1 if objective in ("min_covar", "min_sigma") else 0
    n_vars = n + m + n + n_extra
    prog = ConeProgram.empty(n_vars)
    t_col = n_vars - 1

    if objective == "return":
        prog.maximize[:n] = mats.eta
        prog.maximize[n:n + m] = model.mu
    elif objective in ("min_covar", "min_sigma"):
        prog.maximize[t_col] = -1.0
    else:
        raise DomainError(f"unknown objective {objective!r}")

    alpha = _risk_multiplier(q_conf, risk_mode)

    if objective == "min_sigma":
        head = np.zeros(n_vars)
        head[t_col] = 1.0
        prog.cones.append(SocBlock(
            head_coef=head, head_const=0.0,
            tail_coef=_variance_tail(mats, n, m, n_extra),
            tail_const=np.zeros(mats.h_var.shape[0] + n),
        ))
    elif sigma_bar is not None:
        prog.cones.append(SocBlock(
            head_coef=np.zeros(n_vars), head_const=float(sigma_bar),
            tail_coef=_variance_tail(mats, n, m, n_extra),
            tail_const=np.zeros(mats.h_var.shape[0] + n),
        ))

    rho_list = list(rho_bars) if rho_bars is not None else [None] * len(mats.events)
    if len(rho_list) != len(mats.events):
        raise DomainError("need one risk bound per distress event")
    for idx in range(len(mats.events)):
        is_epigraph = objective == "min_covar" and idx == epigraph_event
        rho = rho_list[idx]
        if rho is None and not is_epigraph:
            continue
        mean_row = np.zeros(n_vars)
        mean_row[:n] = mats.g_list[idx]
        mean_row[n:n + m] = mats.h_list[idx]
        if alpha == 0.0 and not is_epigraph:
            prog.add_ub(-mean_row, float(rho))
            continue
        head = mean_row / alpha
        head_const = 0.0
        if is_epigraph:
            head[t_col] = 1.0 / alpha
        else:
            head_const = float(rho) / alpha
        prog.cones.append(SocBlock(
            head_coef=head, head_const=head_const,
            tail_coef=_covar_tail(mats, idx, n, m, n_extra),
            tail_const=np.zeros(mats.q_list[idx].shape[0] + n),
        ))

    # budget: sum(theta) + p'y <= k0 with theta_i >= ask/bid rebalance cost
    budget = np.zeros(n_vars)
    budget[n + m: n + m + n] = 1.0
    budget[n:n + m] = model.prices
    prog.add_ub(budget, omega.k0)
    for i in range(n):
        for price in (omega.d_ask[i], omega.d_bid[i]):
            row = np.zeros(n_vars)
            row[i] = price
            row[n + m + i] = -1.0
            prog.add_ub(row, price * omega.x0[i])

    # verbatim asymmetric bound rows: l_d <= bid*x and ask*x <= u_d
    for i in range(n):
        if np.isfinite(omega.l_d[i]):
            row = np.zeros(n_vars)
            row[i] = -omega.d_bid[i]
            prog.add_ub(row, -omega.l_d[i])
        if np.isfinite(omega.u_d[i]):
            row = np.zeros(n_vars)
            row[i] = omega.d_ask[i]
            prog.add_ub(row, omega.u_d[i])
    for j in range(m):
        if np.isfinite(omega.u_p[j]):
            row = np.zeros(n_vars)
            row[n + j] = model.prices[j]
            prog.add_ub(row, omega.u_p[j])
        if np.isfinite(omega.l_p[j]):
            row = np.zeros(n_vars)
            row[n + j] = -model.prices[j]
            prog.add_ub(row, -omega.l_p[j])
    if omega.option_budget is not None and n:
        row = np.zeros(n_vars)
        row[:n] = omega.d_ask
        prog.add_ub(row, omega.option_budget)
    return prog


def build_p1(
    model: MarketModel,
    events: Sequence[DistressEvent],
    greeks: Sequence[GreekSet],
    omega: OmegaBounds,
    q_conf: float,
    sigma_bar: float,
    rho_bars: Sequence[float],
    risk_mode: str = "normal",
) -> ConeProgram:
    """Return-maximization program: variance cone plus one risk cone per event."""
    mats = p1_matrices(model, events, greeks)
    return assemble_program(mats, omega, q_conf, sigma_bar, rho_bars,
                            risk_mode=risk_mode, objective="return")


def split_solution(sol: Solution, n: int, m: int) -> Portfolio:
    """Portfolio view of the stacked (x, y, theta[, t]) solution vector."""
    return Portfolio(y=sol.x[n:n + m], x=sol.x[:n])


# ---------------------------------------------------------------------------
# Efficient frontier
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FrontierCell:
    rho_bar: float
    sigma_bar: float
    expected_return: float
    status: str


@dataclass(frozen=True)
class FrontierResult:
    cells: tuple[FrontierCell, ...]
    rho_grid: np.ndarray
    sigma_rows: np.ndarray      # one row of vol bounds per risk bound
    min_covar: float
    max_covar: float

    def as_rows(self):
        return [(c.rho_bar, c.sigma_bar, c.expected_return, c.status)
                for c in self.cells]


def _portfolio_risk(mats: P1Matrices, sol: Solution, q_conf: float,
                    risk_mode: str, idx: int = 0) -> float:
    n, m = mats.n_options, mats.model.n_stocks
    xy = sol.x[: n + m]
    tail = _covar_tail(mats, idx, n, m, sol.x.shape[0] - 2 * n - m) @ sol.x
    spread = float(np.linalg.norm(tail))
    mean = float(mats.g_list[idx] @ sol.x[:n] + mats.h_list[idx] @ sol.x[n:n + m])
    return _risk_multiplier(q_conf, risk_mode) * spread - mean


def _portfolio_sigma(mats: P1Matrices, sol: Solution) -> float:
    n, m = mats.n_options, mats.model.n_stocks
    tail = _variance_tail(mats, n, m, sol.x.shape[0] - 2 * n - m) @ sol.x
    return float(np.linalg.norm(tail))


def frontier(
    model: MarketModel,
    events: Sequence[DistressEvent],
    greeks: Sequence[GreekSet],
    omega: OmegaBounds,
    q_conf: float,
    grid: int = 20,
    risk_mode: str = "normal",
    rho_grid: np.ndarray | None = None,
    sigma_grids: np.ndarray | None = None,
    tol: float = 1e-8,
) -> FrontierResult:
    """Expected-return surface over a (risk bound, vol bound) grid.

    The risk-bound range runs from the minimum attainable systemic risk to
    the risk of the unconstrained return maximizer; per risk bound, the vol
    range runs from the minimum-variance solve to the vol of the
    constrained return maximizer.  Pass ``rho_grid``/``sigma_grids`` to
    evaluate on an externally fixed grid instead (used for comparing
    universes cell by cell).  Infeasible cells are flagged, not dropped.
    """
    if len(events) != 1:
        raise DomainError("the frontier procedure sweeps a single distress event")
    mats = p1_matrices(model, events, greeks)

    def run(objective, sigma_bar, rho_bar):
        prog = assemble_program(mats, omega, q_conf, sigma_bar, [rho_bar],
                                risk_mode=risk_mode, objective=objective)
        return solve(prog, tol=tol)

    min_sol = run("min_covar", None, None)
    if not min_sol.optimal:
        raise SolverError(f"minimum-risk solve failed: {min_sol.status}")
    rho_min = -min_sol.objective
    free_sol = run("return", None, None)
    if not free_sol.optimal:
        raise SolverError(f"return-maximization solve failed: {free_sol.status}")
    rho_max = _portfolio_risk(mats, free_sol, q_conf, risk_mode)
    if rho_grid is None:
        rho_grid = np.linspace(rho_min, rho_max, grid)
    rows = []
    for col, rho in enumerate(rho_grid):
        if sigma_grids is None:
            sig_lo_sol = run("min_sigma", None, rho)
            sig_hi_sol = run("return", None, rho)
            if not (sig_lo_sol.optimal and sig_hi_sol.optimal):
                sig_grid = np.full(grid, np.nan)
            else:
                sig_lo = sig_lo_sol.objective * -1.0
                sig_hi = _portfolio_sigma(mats, sig_hi_sol)
                sig_grid = np.linspace(sig_lo, sig_hi, grid)
        else:
            sig_grid = sigma_grids[col]
        rows.append(sig_grid)

    points = [(float(rho), float(sig))
              for rho, sig_grid in zip(rho_grid, rows) for sig in sig_grid]

    def cell_task(point):
        rho, sig = point
        if not np.isfinite(sig):
            return FrontierCell(rho, sig, math.nan, "range_infeasible")
        sol = run("return", sig, rho)
        return FrontierCell(
            rho_bar=rho, sigma_bar=sig,
            expected_return=sol.objective if sol.optimal else math.nan,
            status=sol.status,
        )

    workers = worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(cell_task, points))
    else:
        cells = [cell_task(p) for p in points]
    return FrontierResult(cells=tuple(cells), rho_grid=np.asarray(rho_grid),
                          sigma_rows=np.vstack(rows),
                          min_covar=float(rho_min), max_covar=float(rho_max))


