"""Robust max-min clearing over a KL ambiguity ball.

The market maker picks state prices ``xi`` and fills ``x`` to maximise the
worst-case expected CARA utility of its terminal wealth over all priors in the
ball. On each region of the state-price partition every fill is either fixed
or has its price pinned to the bid, so wealth is affine in the free variables
and the dual objective ``L(mu, omega) = mu*log(sum theta*exp(omega/mu))`` with
``omega_i = exp(-alpha * wealth_i)`` is convex. The global optimum is the
region with the smallest ``L``; the utility is ``-L``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ambiguity import AmbiguitySet, WorstCase, worst_case_distribution
from .orderbook import OrderBook, book_residual
from .partition import FillSet, Region, book_regions, cell_constraints, forced_fills, region_feasible
from .solver import ConvexProgram, SolverReport, minimize, perspective_lse, perspective_lse_derivatives

TIE_TOL = 1e-9


class SolverFailure(RuntimeError):
    """A region subproblem did not reach a KKT point."""

    def __init__(self, region: Region, report: SolverReport):
        self.region = region
        self.report = report
        super().__init__(
            f"region {region.indices}: solver stopped with status {report.status} "
            f"(stationarity {report.stationarity:.2e}, primal {report.primal_feasibility:.2e}, "
            f"complementarity {report.complementarity:.2e})"
        )


@dataclass(frozen=True)
class MarketParams:
    alpha: float
    inventory: np.ndarray
    ambiguity: AmbiguitySet

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"risk aversion must be positive, got {self.alpha}")
        w = np.asarray(self.inventory, dtype=float)
        if w.shape != self.ambiguity.pivot.shape or not np.all(np.isfinite(w)):
            raise ValueError("inventory must be a finite vector with one entry per state")
        object.__setattr__(self, "inventory", w)

    @classmethod
    def create(cls, alpha, prior, omega, inventory=None) -> "MarketParams":
        amb = AmbiguitySet.normalized(prior, omega)
        w = np.zeros(amb.n_states) if inventory is None else inventory
        return cls(float(alpha), w, amb)

    @property
    def omega(self) -> float:
        return self.ambiguity.radius

    @property
    def z(self) -> np.ndarray:
        return -np.exp(-self.alpha * self.inventory)

    @property
    def theta(self) -> np.ndarray:
        return self.ambiguity.pivot * math.exp(self.omega)


@dataclass
class RegionSolution:
    region: Region
    state_prices: np.ndarray
    fills: np.ndarray
    mu: float
    zeta: np.ndarray
    omega: np.ndarray
    objective: float
    report: SolverReport | None = None


@dataclass
class ClearingResult:
    best: RegionSolution
    worst_case: WorstCase
    pnl: np.ndarray
    utility: float
    params: MarketParams
    regions_total: int = 0
    regions_feasible: int = 0
    solves: int = 0

    @property
    def fills(self) -> np.ndarray:
        return self.best.fills

    @property
    def state_prices(self) -> np.ndarray:
        return self.best.state_prices

    @property
    def objective(self) -> float:
        return self.best.objective


def state_pnl(book: OrderBook, xi, x, inventory) -> np.ndarray:
    """w_i + sum_j x_j((A^T xi)_j - A_ij): the market maker's wealth per state."""
    A = book.A
    xi = np.asarray(xi, dtype=float)
    x = np.asarray(x, dtype=float)
    return np.asarray(inventory, dtype=float) + (A.T @ xi) @ x - A @ x


def worst_case_pnl(result: ClearingResult) -> float:
    return float(result.pnl.min())


def evaluate_primal_objective(book: OrderBook, xi, x, params: MarketParams) -> float:
    """Worst-case expected CARA utility of a given clearing (xi, x)."""
    wealth = state_pnl(book, xi, x, params.inventory)
    d = -np.exp(-params.alpha * wealth)
    return worst_case_distribution(d, params.ambiguity).value


class _RegionModel:
    """Affine wealth model on one region: wealth = c + W y_core."""

    def __init__(self, book: OrderBook, fills: FillSet, params: MarketParams):
        A, Q = book.A, book.quantities
        n = book.n_states
        self.n = n
        self.free = fills.free
        self.x_fixed = fills.fixed_fills(Q)
        self.n_free = self.free.size
        self.alpha = params.alpha
        self.theta = params.theta
        self.q = params.ambiguity.pivot
        full = fills.full
        # fixed fills: revenue Q_j (A^T xi)_j, payout Q_j A_ij
        col = A[:, full] @ Q[full]
        self.c = params.inventory - col
        # free fills trade exactly at the bid: revenue B_j b_j x_j
        self.W = np.hstack([np.tile(col, (n, 1)), book.signed_bids[self.free][None, :] - A[:, self.free]])
        self.core = n + self.n_free

    def wealth(self, y):
        return self.c + self.W @ y[: self.core]

    def omega_span(self, upper) -> float:
        """Bound on max(omega) - min(omega) over the box 0 <= y_core <= upper."""
        hi = np.where(np.isfinite(upper), upper, 1.0)  # state prices never exceed 1
        lo_w = self.c + np.minimum(self.W * hi, 0.0).sum(axis=1)
        hi_w = self.c + np.maximum(self.W * hi, 0.0).sum(axis=1)
        return float(np.expm1(-self.alpha * lo_w).max() - np.expm1(-self.alpha * hi_w).min())

    def omega_shift(self, y):
        """omega - 1, computed without cancellation for small wealth."""
        return np.expm1(-self.alpha * self.wealth(y))

    def expected(self, y):
        """Sum q_i omega_i - 1: the objective when the ball is a single point."""
        om1 = self.omega_shift(y)
        a, q, W = self.alpha, self.q, self.W
        om = om1 + 1.0
        g = W.T @ (q * -a * om)
        H = (W.T * (q * a * a * om)) @ W
        return float(q @ om1), g, H


class _Epigraph:
    """min tau s.t. omega_i - 1 - tau + mu*log(theta_i*mu/u_i) <= 0, sum u <= mu.

    Variables are (y_core, tau, mu, u). Eliminating u and tau recovers
    ``mu*log(sum theta*exp((omega-1)/mu))``; at mu = 0 the constraints close to
    ``omega_i - 1 <= tau``, so regions whose optimum sits at mu = 0 are interior
    points of this problem instead of a limit.
    """

    def __init__(self, model: _RegionModel):
        self.m = model
        k = model.core
        self.tau, self.mu = k, k + 1
        self.u = np.arange(k + 2, k + 2 + model.n)
        self.dim = k + 2 + model.n
        self.log_theta = np.log(model.theta)

    def objective(self, y):
        g = np.zeros(self.dim)
        g[self.tau] = 1.0
        return float(y[self.tau]), g, np.zeros((self.dim, self.dim))

    def constraints(self, y):
        m, n, k = self.m, self.m.n, self.m.core
        mu, u = y[self.mu], y[self.u]
        if not (mu > 0 and np.all(u > 0)):
            return np.full(n, np.nan), None, None
        om1 = m.omega_shift(y)
        om = om1 + 1.0
        log_ratio = self.log_theta + math.log(mu) - np.log(u)
        c = om1 - y[self.tau] + mu * log_ratio
        rows = np.arange(n)
        J = np.zeros((n, self.dim))
        J[:, :k] = (-m.alpha * om)[:, None] * m.W
        J[:, self.tau] = -1.0
        J[:, self.mu] = log_ratio + 1.0
        J[rows, self.u] = -mu / u
        H = np.zeros((n, self.dim, self.dim))
        H[:, :k, :k] = (m.alpha**2 * om)[:, None, None] * m.W[:, :, None] * m.W[:, None, :]
        H[:, self.mu, self.mu] = 1.0 / mu
        H[rows, self.mu, self.u] = -1.0 / u
        H[rows, self.u, self.mu] = -1.0 / u
        H[rows, self.u, self.u] = mu / u**2
        return c, J, H

    def lift(self, y, mu_max=math.inf):
        """Complete a point interior to the linear constraints on y_core."""
        y = y.copy()
        n = self.m.n
        om1 = self.m.omega_shift(y)
        mu = min(1.0, 0.5 * mu_max)
        y[self.mu] = mu
        y[self.u] = mu / (2 * n)
        y[self.tau] = float(np.max(om1 + mu * (self.log_theta + math.log(2 * n)))) + mu
        return y


class _Direct:
    """min mu*log(sum theta*exp((omega-1)/mu)) over (y_core, mu) with mu >= MU_FLOOR.

    The epigraph rows subtract logs of similar size when mu is large (tiny
    radius); this form evaluates the same objective through the shifted
    log-sum-exp kernel and keeps full precision there.
    """

    def __init__(self, model: _RegionModel):
        self.m = model
        self.mu = model.core
        self.dim = model.core + 1

    def objective(self, y):
        m, k = self.m, self.m.core
        mu = y[self.mu]
        if not mu > 0:
            return math.inf, None, None
        om1 = m.omega_shift(y)
        grad, hess = perspective_lse_derivatives(mu, om1, m.theta)
        pi = grad[:-1]
        J = (-m.alpha * (om1 + 1.0))[:, None] * m.W
        g = np.append(J.T @ pi, grad[-1])
        H = np.empty((self.dim, self.dim))
        H[:k, :k] = J.T @ hess[:-1, :-1] @ J + (m.W.T * (pi * m.alpha**2 * (om1 + 1.0))) @ m.W
        H[:k, k] = H[k, :k] = J.T @ hess[:-1, -1]
        H[k, k] = hess[-1, -1]
        return perspective_lse(mu, om1, m.theta), g, H


MU_FLOOR = 1e-10
SMALL_RADIUS = 1e-4


def _region_program(model: _RegionModel, params: MarketParams, E, e, G, h, lower, upper, direct: bool):
    """Program for one region and the index of mu in its variables."""
    n = model.n
    # Hoeffding: KL of the tilt is at most (span / mu)**2 / 8, so the optimal mu is at
    # most span / sqrt(8 omega); capping mu keeps the barrier from dragging it to
    # scales where the Hessian loses definiteness
    mu_max = model.omega_span(upper) / math.sqrt(2.0 * params.omega) + 1.0
    form = _Direct(model) if direct else _Epigraph(model)
    pad = form.dim - n
    eq = np.hstack([E, np.zeros((E.shape[0], pad))])
    ineq = np.hstack([G, np.zeros((G.shape[0], pad))])
    if direct:
        return ConvexProgram(
            form.dim, form.objective, eq_matrix=eq, eq_rhs=e, ineq_matrix=ineq, ineq_rhs=h,
            lower=np.append(lower, MU_FLOOR), upper=np.append(upper, mu_max),
            start_from=lambda y: np.append(y[:-1], min(1.0, 0.5 * (MU_FLOOR + mu_max))),
            relative_vars=np.array([form.mu]),
        ), form.mu
    extra = form.dim - model.core
    sum_u = np.zeros(form.dim)
    sum_u[form.u] = 1.0
    sum_u[form.mu] = -1.0
    mu_upper = np.full(extra, np.inf)
    mu_upper[form.mu - model.core] = mu_max
    return ConvexProgram(
        form.dim, form.objective, eq_matrix=eq, eq_rhs=e,
        ineq_matrix=np.vstack([ineq, sum_u]), ineq_rhs=np.append(h, 0.0),
        lower=np.concatenate([lower, [-np.inf], np.zeros(extra - 1)]),
        upper=np.concatenate([upper, mu_upper]),
        constraints=form.constraints, polish_vars=np.arange(model.core),
        start_from=lambda y: form.lift(y, mu_max),
        relative_vars=np.append(form.mu, form.u),
    ), form.mu


def solve_region(book: OrderBook, region: Region, fills: FillSet, params: MarketParams,
                 tol: float = 1e-8, max_iter: int = 500) -> RegionSolution:
    """Minimise L(mu, omega) over one region of the partition."""
    model = _RegionModel(book, fills, params)
    n, nf = model.n, model.n_free
    E, e, G, h = cell_constraints(region, book.securities, n)
    lower = np.zeros(model.core)
    upper = np.concatenate([np.full(n, np.inf), book.quantities[model.free]])
    # Pinsker: a ball this small moves L by at most span * sqrt(omega / 2), which
    # is within tolerance of its centre
    robust = params.omega > 0 and model.omega_span(upper) * math.sqrt(params.omega / 2) > tol
    if robust:
        # the epigraph form reaches mu = 0 exactly; the direct form keeps its
        # precision when mu is large, which is where tiny radii put it
        order = (True, False) if params.omega < SMALL_RADIUS else (False, True)
        for direct in order:
            prog, mu_at = _region_program(model, params, E, e, G, h, lower, upper, direct)
            rep = minimize(prog, tol=tol, max_iter=max_iter)
            if rep.ok:
                break
    else:
        prog = ConvexProgram(
            model.core, model.expected,
            eq_matrix=np.hstack([E, np.zeros((E.shape[0], nf))]), eq_rhs=e,
            ineq_matrix=np.hstack([G, np.zeros((G.shape[0], nf))]), ineq_rhs=h,
            lower=lower, upper=upper,
        )
        rep = minimize(prog, tol=tol, max_iter=max_iter)
    if not rep.ok:
        raise SolverFailure(region, rep)
    y = rep.solution
    om1 = model.omega_shift(y)
    if robust:
        mu = float(y[mu_at])
        L = perspective_lse(mu, om1, model.theta) if mu > 0 else float(om1.max())
        # mu = 0 is the closure of the domain: there L is the plain maximum
        if float(om1.max()) <= L:
            mu, L = 0.0, float(om1.max())
    elif params.omega > 0:
        # a point of the centre problem, scored exactly on the ball
        wc = worst_case_distribution(-om1, params.ambiguity)
        mu, L = wc.mu, -wc.value
    else:
        mu, L = math.inf, rep.objective
    xi = np.clip(y[:n], 0.0, None)
    x = model.x_fixed.copy()
    x[model.free] = y[n:n + nf]
    zeta = -params.alpha * (model.wealth(y) - params.inventory)
    return RegionSolution(region, xi, x, mu, zeta, om1 + 1.0, L + 1.0, rep)


def clear_market_kpm(book: OrderBook, params: MarketParams, tol: float = 1e-8,
                     regions=None) -> ClearingResult:
    """Solve every feasible region and keep the one with the smallest L."""
    if params.ambiguity.n_states != book.n_states:
        raise ValueError("prior and book disagree on the number of states")
    best = None
    total = feasible = 0
    for region in (regions if regions is not None else book_regions(book)):
        total += 1
        if not region_feasible(region, book.securities, book.n_states):
            continue
        feasible += 1
        sol = solve_region(book, region, forced_fills(region, book), params, tol=tol)
        if best is None or sol.objective < best.objective - TIE_TOL:
            best = sol
    if best is None:
        raise RuntimeError("no feasible region: the partition does not cover the simplex")

    pnl = state_pnl(book, best.state_prices, best.fills, params.inventory)
    wc = worst_case_distribution(-best.omega, params.ambiguity)
    return ClearingResult(best, wc, pnl, -best.objective, params, total, feasible, feasible)


def limit_logic_residual(book: OrderBook, result: ClearingResult) -> float:
    return book_residual(book, result.state_prices, result.fills)
