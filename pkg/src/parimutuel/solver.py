"""Log-barrier Newton method for smooth convex programs.

Problems have the form::

    minimize    f(y)
    subject to  E y = e,  G y <= h,  lower <= y <= upper,  c(y) <= 0

``f`` and the optional convex constraint map ``c`` are oracles returning
value, first and second derivatives; either may return non-finite values
outside its domain, which the line search treats as a reject.

Equalities are removed by null-space elimination. A phase-I linear program
finds a strictly feasible start for the linear constraints and detects both
infeasibility and implicit equalities (rows tight on the whole feasible set).
A start that is strictly feasible for ``c`` comes from ``x0`` or from
``start_from``, which lifts the phase-I point into the domain of ``c``.

Near the end of the barrier path an active-set polish holds the apparently
active linear rows as equalities and finishes the path on that face; it is
kept only if the result passes the KKT test by itself. This puts
bound-active variables exactly on their bounds.

Also home to the perspective log-sum-exp ``G(mu, w) = mu*log(sum theta*exp(w/mu))``
and its derivatives.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linprog, nnls
from scipy.special import logsumexp

from . import _kernels

Oracle = Callable[[np.ndarray], tuple]

OPTIMAL = "optimal"
MAX_ITER = "max_iter"
INFEASIBLE = "infeasible"


class NonConvexError(ArithmeticError):
    """An oracle produced an indefinite Hessian."""


@dataclass
class ConvexProgram:
    dimension: int
    objective: Oracle
    eq_matrix: np.ndarray | None = None
    eq_rhs: np.ndarray | None = None
    ineq_matrix: np.ndarray | None = None
    ineq_rhs: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    x0: np.ndarray | None = None
    constraints: Oracle | None = None  # y -> (c (m,), jac (m, n), hessians (m, n, n))
    polish_vars: np.ndarray | None = None  # linear rows touching only these may be polished
    start_from: Callable[[np.ndarray], np.ndarray] | None = None  # lifts a linear-interior point into dom c
    relative_vars: np.ndarray | None = None  # stationarity on these is weighted by max(1, |y_j|)

    def __post_init__(self):
        n = self.dimension

        def mat(a):
            if a is None:
                return np.zeros((0, n))
            a = np.atleast_2d(np.asarray(a, dtype=float))
            if a.size == 0:
                return np.zeros((0, n))
            if a.shape[1] != n:
                raise ValueError(f"constraint matrix has {a.shape[1]} columns, expected {n}")
            return a

        def vec(b):
            return np.zeros(0) if b is None else np.atleast_1d(np.asarray(b, dtype=float))

        self.eq_matrix, self.eq_rhs = mat(self.eq_matrix), vec(self.eq_rhs)
        self.ineq_matrix, self.ineq_rhs = mat(self.ineq_matrix), vec(self.ineq_rhs)
        if self.eq_matrix.shape[0] != self.eq_rhs.size:
            raise ValueError("equality matrix and rhs disagree in length")
        if self.ineq_matrix.shape[0] != self.ineq_rhs.size:
            raise ValueError("inequality matrix and rhs disagree in length")
        self.lower = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValueError("bounds must have one entry per variable")

    def all_inequalities(self) -> tuple[np.ndarray, np.ndarray]:
        """Inequalities with finite bounds folded in as rows."""
        eye = np.eye(self.dimension)
        lo = np.isfinite(self.lower)
        hi = np.isfinite(self.upper)
        G = np.vstack([self.ineq_matrix, -eye[lo], eye[hi]])
        h = np.concatenate([self.ineq_rhs, -self.lower[lo], self.upper[hi]])
        return G, h

    def polishable_rows(self) -> np.ndarray:
        G, _ = self.all_inequalities()
        if self.polish_vars is None:
            return np.ones(G.shape[0], dtype=bool)
        outside = np.ones(self.dimension, dtype=bool)
        outside[np.asarray(self.polish_vars, dtype=int)] = False
        return ~np.any(G[:, outside] != 0, axis=1)


@dataclass
class SolverReport:
    solution: np.ndarray
    objective: float
    stationarity: float
    primal_feasibility: float
    complementarity: float
    iterations: int
    status: str
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    constraint_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    polished: bool = False

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL

    @property
    def residuals(self) -> tuple[float, float, float]:
        return self.stationarity, self.primal_feasibility, self.complementarity


# ---------------------------------------------------------------- perspective lse


def perspective_lse(mu: float, omega, theta) -> float:
    omega = np.asarray(omega, dtype=float)
    if mu == 0:
        return float(omega.max())
    if mu < 0:
        raise ValueError(f"mu must be >= 0, got {mu}")
    return float(mu * logsumexp(omega / mu, b=np.asarray(theta, dtype=float)))


def perspective_lse_derivatives(mu: float, omega, theta) -> tuple[np.ndarray, np.ndarray]:
    """Gradient and Hessian in the variable order (omega_1..omega_N, mu)."""
    if not mu > 0:
        raise ValueError("derivatives are only defined for mu > 0")
    _, grad, hess = _kernels.lse_derivatives(mu, omega, theta)
    return grad, hess


def exp_constraint_hessian(omega: float, zeta: float, z: float) -> np.ndarray:
    """Hessian of F(omega, zeta) = -omega - z*exp(zeta); PSD whenever z < 0."""
    return np.array([[0.0, 0.0], [0.0, -z * math.exp(zeta)]])


# ---------------------------------------------------------------- linear algebra


def _check_psd(H: np.ndarray) -> None:
    if H.size == 0:
        return
    H = 0.5 * (H + H.T)
    shift = 1e-8 * max(1.0, float(np.abs(H).max()))
    try:
        np.linalg.cholesky(H + shift * np.eye(H.shape[0]))
        return
    except np.linalg.LinAlgError:
        pass
    lam = float(np.linalg.eigvalsh(H)[0])
    if lam < -shift:
        raise NonConvexError(f"Hessian is indefinite (min eigenvalue {lam:.3e})")


def _solve_sym(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    # symmetric diagonal scaling: variables on very different scales (a large
    # perspective multiplier next to unit prices) otherwise swamp the factorisation
    diag = np.abs(np.diag(H))
    d = 1.0 / np.sqrt(np.where(diag > 0, diag, 1.0))
    Hs = H * d[:, None] * d[None, :]
    try:
        with warnings.catch_warnings():
            # barrier Hessians are ill-conditioned by design near the boundary
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            return d * sla.solve(Hs, -d * g, assume_a="sym", check_finite=False)
    except (np.linalg.LinAlgError, sla.LinAlgError, ValueError):
        return -d * np.linalg.lstsq(Hs, d * g, rcond=None)[0]


def _max_slack_lp(G, h):
    """max s subject to G v + s <= h, s <= 1. Returns (s*, v*) or (None, None)."""
    m, k = G.shape
    c = np.zeros(k + 1)
    c[-1] = -1.0
    A = np.hstack([G, np.ones((m, 1))])
    res = linprog(c, A_ub=A, b_ub=h, bounds=[(None, None)] * k + [(None, 1.0)], method="highs")
    if res.status != 0:
        return None, None
    return float(res.x[-1]), res.x[:k]


def _row_max_slack(G, h, i):
    k = G.shape[1]
    res = linprog(G[i], A_ub=G, b_ub=h, bounds=[(None, None)] * k, method="highs")
    if res.status == 3:  # unbounded below: the row can be made arbitrarily slack
        return math.inf
    if res.status != 0:
        return 0.0
    return float(h[i] - res.fun)


# ---------------------------------------------------------------- reduced problem


class _Reduced:
    """The program restated on v, with y = base + Z v and rows G v <= h."""

    def __init__(self, prog: ConvexProgram, base, Z, G, h, polishable):
        self.prog = prog
        self.base = base
        self.Z = Z
        self.G = G
        self.h = h
        self.polishable = polishable

    @property
    def m(self) -> int:
        return self.G.shape[0]

    def y(self, v):
        return self.base + self.Z @ v

    def coords(self, y):
        return self.Z.T @ (y - self.base)


def _normalise(G, h, polishable, feas_tol):
    norms = np.linalg.norm(G, axis=1)
    const = norms <= 1e-12
    if np.any(h[const] < -feas_tol):
        return None
    keep = ~const
    return G[keep] / norms[keep, None], h[keep] / norms[keep], polishable[keep]


def _reduce(prog: ConvexProgram, feas_tol: float):
    """Eliminate equalities and normalise inequality rows. None if infeasible."""
    n = prog.dimension
    E, e = prog.eq_matrix, prog.eq_rhs
    G, h = prog.all_inequalities()
    if E.shape[0]:
        base, *_ = np.linalg.lstsq(E, e, rcond=None)
        if np.abs(E @ base - e).max() > feas_tol * (1 + np.abs(e).max()):
            return None
        Z = sla.null_space(E)
    else:
        base = np.zeros(n)
        Z = np.eye(n)
    out = _normalise(G @ Z, h - G @ base, prog.polishable_rows(), feas_tol)
    if out is None:
        return None
    return _Reduced(prog, base, Z, *out)


def _restrict(red: _Reduced, rows: np.ndarray) -> _Reduced:
    """Hold the given rows at equality and re-eliminate."""
    Ga, ha = red.G[rows], red.h[rows]
    base_v, *_ = np.linalg.lstsq(Ga, ha, rcond=None)
    N = sla.null_space(Ga)
    keep = np.setdiff1d(np.arange(red.m), rows)
    G2 = red.G[keep] @ N
    h2 = red.h[keep] - red.G[keep] @ base_v
    out = _normalise(G2, h2, red.polishable[keep], math.inf)
    return _Reduced(red.prog, red.y(base_v), red.Z @ N, *out)


def _phase_one(red: _Reduced, feas_tol: float):
    """(reduced problem, strictly feasible v), or None if infeasible.

    Rows that are tight everywhere on the feasible set are turned into
    equalities so that the returned point is strictly interior to the rest.
    """
    for _ in range(red.m + 1):
        k = red.Z.shape[1]
        if red.m == 0:
            return red, np.zeros(k)
        if k == 0:
            return (red, np.zeros(0)) if red.h.min() >= -feas_tol else None
        s, v = _max_slack_lp(red.G, red.h)
        if s is None or s < -feas_tol:
            return None
        if s > 1e-9:
            return red, v
        tight = [i for i in range(red.m) if _row_max_slack(red.G, red.h, i) <= 1e-9]
        if not tight:
            return red, v
        red = _restrict(red, np.array(tight))
    return None


# ---------------------------------------------------------------- barrier path


class _State:
    """Oracle values at one point of a reduced problem."""

    __slots__ = ("v", "y", "f", "g", "H", "s", "c", "J", "Hc")

    def __init__(self, red: _Reduced, v):
        self.v = v
        self.y = red.y(v)
        self.s = red.h - red.G @ v
        self.f, self.g, self.H = red.prog.objective(self.y)
        self.c = self.J = self.Hc = None
        if red.prog.constraints is not None:
            self.c, self.J, self.Hc = red.prog.constraints(self.y)

    def interior(self) -> bool:
        if not np.isfinite(self.f) or (self.s.size and self.s.min() <= 0):
            return False
        if self.c is not None and not (np.all(np.isfinite(self.c)) and self.c.max() < 0):
            return False
        return True

    def phi(self, t) -> float:
        val = t * self.f - np.sum(np.log(self.s))
        if self.c is not None:
            val -= np.sum(np.log(-self.c))
        return val

    def n_constraints(self) -> int:
        return self.s.size + (0 if self.c is None else self.c.size)


def _newton_step(red: _Reduced, st: _State, t, check_psd):
    Z = red.Z
    grad = t * st.g
    hess = t * st.H
    if st.c is not None:
        w = 1.0 / (-st.c)
        grad = grad + st.J.T @ w
        hess = hess + np.einsum("i,ijk->jk", w, st.Hc) + (st.J.T * w**2) @ st.J
    if check_psd:
        _check_psd(Z.T @ hess @ Z)
    inv = 1.0 / st.s
    gv = Z.T @ grad + red.G.T @ inv
    Hv = Z.T @ hess @ Z + (red.G.T * inv**2) @ red.G
    dv = _solve_sym(Hv, gv)
    return dv, float(-gv @ dv)


def _center(red: _Reduced, st: _State, t, budget, check_psd, dec_tol=1e-12):
    """Damped Newton on the barrier function at parameter t."""
    iters = 0
    prev = math.inf
    while iters < budget and red.Z.shape[1]:
        iters += 1
        dv, dec = _newton_step(red, st, t, check_psd)
        if dec / 2 <= dec_tol or not np.all(np.isfinite(dv)):
            break
        # damped phase of Newton's method for self-concordant functions
        step = 1.0 if dec < 0.0625 else 1.0 / (1.0 + math.sqrt(dec))
        Gd = red.G @ dv
        pos = Gd > 0
        if np.any(pos):
            step = min(step, 0.99 * float(np.min(st.s[pos] / Gd[pos])))
        phi0 = st.phi(t)
        # inside the quadratic region the decrement must keep shrinking; when it
        # stops, the iterate has reached the rounding floor of the oracle
        if dec < 0.0625 and dec >= prev:
            break
        if dec < 0.0625 and dec / 2 <= 1e-10 * max(1.0, abs(phi0)):
            # the predicted decrease is lost in the rounding of phi; trust the
            # quadratic model for as long as the decrement keeps shrinking
            cand = _State(red, st.v + step * dv)
            if not cand.interior():
                break
            st, prev = cand, dec
            continue
        prev = dec
        new = None
        while step > 1e-14:
            cand = _State(red, st.v + step * dv)
            if cand.interior() and cand.phi(t) <= phi0 - 1e-4 * step * dec:
                new = cand
                break
            step *= 0.5
        if new is None:
            break
        st = new
    return st, iters


def _barrier_duals(st: _State, t):
    with np.errstate(divide="ignore"):
        lam = 1.0 / (t * st.s)
        lam_c = None if st.c is None else 1.0 / (t * (-st.c))
    return lam, lam_c


def _kkt(red: _Reduced, st: _State, lam, lam_c):
    """Scaled stationarity, primal infeasibility and complementarity."""
    prog = red.prog
    grad = st.g if st.c is None else st.g + st.J.T @ lam_c
    r = red.Z.T @ grad
    if red.m:
        r = r + red.G.T @ lam
    gnorm = float(np.abs(red.Z.T @ st.g).max(initial=0.0))
    stat = float(np.abs(r).max(initial=0.0))
    if prog.relative_vars is not None:
        # a small residual on a large scale-free variable can still hide a large
        # objective error, so weigh those by their magnitude
        idx = np.asarray(prog.relative_vars, dtype=int)
        r_y = (red.Z @ r)[idx] * np.maximum(1.0, np.abs(st.y[idx]))
        stat = max(stat, float(np.abs(r_y).max(initial=0.0)))
    stat /= 1.0 + gnorm
    Gf, hf = prog.all_inequalities()
    primal = float(np.maximum(Gf @ st.y - hf, 0.0).max(initial=0.0))
    if prog.eq_matrix.shape[0]:
        primal = max(primal, float(np.abs(prog.eq_matrix @ st.y - prog.eq_rhs).max()))
    comp = float(np.abs(lam * st.s).max(initial=0.0))
    if st.c is not None:
        primal = max(primal, float(np.maximum(st.c, 0.0).max(initial=0.0)))
        comp = max(comp, float(np.abs(lam_c * st.c).max(initial=0.0)))
    return stat, primal, comp


def _fit_duals(red: _Reduced, st: _State, lam, lam_c, keep_inactive: bool):
    act = (st.s <= 0) | (lam > st.s)
    lam = np.where(act | keep_inactive, lam, 0.0)
    cols = [red.G[act].T]
    grad = st.g.copy()
    act_c = None
    if st.c is not None:
        act_c = (st.c >= 0) | (lam_c > -st.c)
        lam_c = np.where(act_c | keep_inactive, lam_c, 0.0)
        grad += st.J[~act_c].T @ lam_c[~act_c]
        cols.insert(0, red.Z.T @ st.J[act_c].T)
    rest = red.Z.T @ grad + red.G[~act].T @ lam[~act]
    M = np.hstack(cols)
    if M.shape[1] == 0:
        return lam, lam_c
    scale = np.maximum(np.linalg.norm(M, axis=0), 1e-300)
    sol, _ = nnls(M / scale, -rest)
    sol /= scale
    if act_c is not None:
        k = int(act_c.sum())
        lam_c[act_c] = sol[:k]
        sol = sol[k:]
    lam[act] = sol
    return lam, lam_c


def _refine_duals(red: _Reduced, st: _State, lam, lam_c):
    """Re-estimate the multipliers of the apparently active constraints.

    Barrier multipliers are only as accurate as the centering; a nonnegative
    least-squares fit on the stationarity equation gives the best certificate
    the point admits. Inactive constraints either keep their barrier values or
    drop to zero, whichever certifies better.
    """
    best = None
    for keep in (True, False):
        duals = _fit_duals(red, st, lam, lam_c, keep)
        score = max(_kkt(red, st, *duals))
        if best is None or score < best[0]:
            best = score, duals
    return best[1]


def _follow_path(red, st, t, tol, budget, check_psd, on_stage=None):
    """Raise t tenfold per stage until the duality-gap bound m/t is below tol.

    Returns (state, t, iterations, early) where ``early`` is whatever
    ``on_stage`` returned to stop the path, or None.
    """
    m = st.n_constraints()
    if m == 0:
        st, iters = _center(red, st, t, budget, check_psd, dec_tol=0.0)
        return st, t, iters, None
    iters = 0
    while True:
        # the last stage runs Newton down to the rounding floor
        st, k = _center(red, st, t, budget - iters, check_psd, 0.0 if m / t <= tol else 1e-12)
        iters += k
        if on_stage is not None:
            early = on_stage(st, t, iters)
            if early is not None:
                return st, t, iters, early
        if m / t <= tol or iters >= budget:
            return st, t, iters, None
        t *= 10.0


def _polish(red: _Reduced, st: _State, t, tol, budget, check_psd):
    """Finish the path on the face of the apparently active polishable rows.

    Returns (state, lam, lam_c, iterations) when the result passes the KKT
    test on its own, else None.
    """
    lam, _ = _barrier_duals(st, t)
    active = np.flatnonzero(red.polishable & (lam > st.s))
    if active.size == 0:
        return None
    sub = _restrict(red, active)
    Ga, ha = red.G[active], red.h[active]
    corr, *_ = np.linalg.lstsq(Ga, ha - Ga @ st.v, rcond=None)
    st_sub = _State(sub, sub.coords(red.y(st.v + corr)))
    if not st_sub.interior():
        return None
    st_sub, t_end, iters, _ = _follow_path(sub, st_sub, t, tol, budget, check_psd)

    back = _State(red, red.coords(st_sub.y))
    lam_full, lam_c = _refine_duals(red, back, *_barrier_duals(back, t_end))
    if max(_kkt(red, back, lam_full, lam_c)) > tol:
        return None
    return back, lam_full, lam_c, iters


def minimize(program: ConvexProgram, tol: float = 1e-8, max_iter: int = 500,
             check_psd: bool = True, feas_tol: float = 1e-9, polish: bool = True) -> SolverReport:
    """Minimise a smooth convex function subject to linear and convex constraints."""
    n = program.dimension
    red = _reduce(program, feas_tol)
    found = None if red is None else _phase_one(red, feas_tol)
    if found is None:
        return _infeasible(n)
    red, v_lp = found

    st = None
    if program.x0 is not None:
        y0 = np.asarray(program.x0, dtype=float)
        cand = _State(red, red.coords(y0))
        if np.abs(cand.y - y0).max() <= 1e-9 * (1 + np.abs(y0).max()) and cand.interior():
            st = cand
        elif program.constraints is not None:
            raise ValueError("x0 must be strictly feasible when convex constraints are present")
    if st is None and program.start_from is not None:
        st = _State(red, red.coords(program.start_from(red.y(v_lp))))
        if not st.interior():
            raise ValueError("start_from did not return a strictly feasible point")
    if st is None:
        st = _State(red, v_lp)
        if not st.interior():
            raise ValueError("phase-I point lies outside the objective's domain; supply x0")

    m = st.n_constraints()
    t0 = min(max(1.0, m / max(abs(st.f), 1e-12) * 1e-3), 1e3)

    def try_polish(state, t, used):
        if not polish or m / t > 1e-4:
            return None
        lam, lam_c = _refine_duals(red, state, *_barrier_duals(state, t))
        if max(_kkt(red, state, lam, lam_c)) <= tol:
            return state, lam, lam_c, 0
        return _polish(red, state, t, tol, max_iter - used, check_psd)

    st, t, iters, early = _follow_path(red, st, t0, tol, max_iter, check_psd, try_polish)
    if early is not None:
        st, lam, lam_c, k = early
        iters += k
    else:
        lam, lam_c = _refine_duals(red, st, *_barrier_duals(st, t))
    stat, primal, comp = _kkt(red, st, lam, lam_c)

    y = st.y.copy()
    # null-space round-off leaves bound-active variables a few ulps off their bound
    for bound in (program.lower, program.upper):
        snap = np.isfinite(bound) & (np.abs(y - bound) <= 1e-12 * (1 + np.abs(bound)))
        y[snap] = bound[snap]
    status = OPTIMAL if max(stat, primal, comp) <= tol and iters < max_iter else MAX_ITER
    return SolverReport(y, float(st.f), stat, primal, comp, iters, status, lam,
                        np.zeros(0) if lam_c is None else lam_c, early is not None)


def _infeasible(n):
    nan = math.nan
    return SolverReport(np.full(n, nan), nan, nan, nan, nan, 0, INFEASIBLE)


def is_feasible(program: ConvexProgram, feas_tol: float = 1e-9) -> bool:
    """Phase-I test only: does the linear constraint set have a point?"""
    red = _reduce(program, feas_tol)
    if red is None:
        return False
    if red.m == 0:
        return True
    if red.Z.shape[1] == 0:
        return bool(red.h.min() >= -feas_tol)
    s, _ = _max_slack_lp(red.G, red.h)
    return s is not None and s >= -feas_tol
