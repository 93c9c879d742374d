"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Set ``PARIMUTUEL_NUMBA=0`` in the environment before import to force the
numpy implementations (useful for debugging and for the benchmark).
"""

from __future__ import annotations

import math
import os

import numpy as np

_WANT_NUMBA = os.environ.get("PARIMUTUEL_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")

try:
    if not _WANT_NUMBA:
        raise ImportError
    import numba

    USE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    USE_NUMBA = False

BACKEND = "numba" if USE_NUMBA else "numpy"


def _njit(fn):
    if USE_NUMBA:
        return numba.njit(cache=True, fastmath=False)(fn)
    return fn


# --------------------------------------------------------------------------
# perspective log-sum-exp:  G(mu, w) = mu * log(sum_i theta_i exp(w_i / mu))
# --------------------------------------------------------------------------


@_njit
def _lse_derivs_loop(mu, omega, theta):
    # work with gaps to the maximum so that (mean - omega_k) keeps its
    # relative precision even when mu is tiny
    n = omega.shape[0]
    m = omega[0]
    for i in range(1, n):
        if omega[i] > m:
            m = omega[i]
    gap = np.empty(n)
    pi = np.empty(n)
    s = 0.0
    for i in range(n):
        gap[i] = omega[i] - m
        pi[i] = theta[i] * math.exp(gap[i] / mu)
        s += pi[i]
    gbar = 0.0
    for i in range(n):
        pi[i] /= s
        gbar += pi[i] * gap[i]
    value = m + mu * math.log(s)
    var = 0.0
    for i in range(n):
        dw = gap[i] - gbar
        var += pi[i] * dw * dw

    grad = np.empty(n + 1)
    hess = np.empty((n + 1, n + 1))
    for k in range(n):
        grad[k] = pi[k]
        for j in range(n):
            hess[j, k] = -pi[j] * pi[k] / mu
        hess[k, k] += pi[k] / mu
        hess[k, n] = pi[k] * (gbar - gap[k]) / (mu * mu)
        hess[n, k] = hess[k, n]
    grad[n] = (mu * math.log(s) - gbar) / mu
    hess[n, n] = var / (mu * mu * mu)
    return value, grad, hess


def _lse_derivs_numpy(mu, omega, theta):
    m = omega.max()
    gap = omega - m
    e = theta * np.exp(gap / mu)
    s = e.sum()
    pi = e / s
    gbar = pi @ gap
    value = m + mu * math.log(s)
    n = omega.shape[0]
    grad = np.empty(n + 1)
    grad[:n] = pi
    grad[n] = (mu * math.log(s) - gbar) / mu
    hess = np.empty((n + 1, n + 1))
    hess[:n, :n] = (np.diag(pi) - np.outer(pi, pi)) / mu
    col = pi * (gbar - gap) / mu**2
    hess[:n, n] = col
    hess[n, :n] = col
    hess[n, n] = pi @ (gap - gbar) ** 2 / mu**3
    return value, grad, hess


def lse_derivatives(mu: float, omega: np.ndarray, theta: np.ndarray):
    """Value, gradient and Hessian of the perspective log-sum-exp at mu > 0.

    Variable order is (omega_1, ..., omega_N, mu).
    """
    omega = np.ascontiguousarray(omega, dtype=np.float64)
    theta = np.ascontiguousarray(theta, dtype=np.float64)
    if USE_NUMBA:
        return _lse_derivs_loop(float(mu), omega, theta)
    return _lse_derivs_numpy(float(mu), omega, theta)


# --------------------------------------------------------------------------
# primal inner minimum over the KL ball (used by the verification oracles)
#
# min d.p over {p in simplex : KL(p || q) <= radius} is solved coordinate by
# coordinate: fixing p_k leaves the same problem on p_0..p_{k-1} with less
# mass and a smaller KL budget. Partial minimisation keeps convexity, so each
# level is a one-dimensional convex search over the interval of p_k values
# for which the rest can still fit in the budget. The last two coordinates
# are split exactly.
# --------------------------------------------------------------------------

_GOLD = 0.6180339887498949


@_njit
def _xlogy(x, y):
    if x <= 0.0:
        return 0.0
    return x * math.log(x / y)


@_njit
def _fit_cost(p, qa, qb, r):
    # KL of putting p on one coordinate and r - p proportionally on the rest
    return _xlogy(p, qa) + _xlogy(r - p, qb)


@_njit
def _edge(qa, qb, c, r, inside, outside):
    """Point of the budget boundary between inside (cost <= c) and outside.

    The cost is convex, so Newton from the outside approaches the root
    monotonically; bisection covers the ends where the slope is infinite.
    """
    x = outside
    for _ in range(200):
        gap = _fit_cost(x, qa, qb, r) - c
        if gap <= 0.0:
            return x
        if x <= 0.0 or x >= r:
            slope = math.inf
        else:
            slope = math.log(x / qa) - math.log((r - x) / qb)
        nx = x - gap / slope if slope != 0.0 and math.isfinite(slope) else inside
        if not (min(inside, x) < nx < max(inside, x)) or abs(nx - x) > 0.5 * abs(x - inside):
            mid = 0.5 * (inside + x)
            if _fit_cost(mid, qa, qb, r) <= c:
                inside = mid
            else:
                x = mid
        else:
            if abs(nx - x) <= 1e-17:
                return nx
            x = nx
        if abs(x - inside) <= 1e-17:
            return inside
    return inside


@_njit
def _feasible_interval(qa, qb, c, r):
    """Values of p in [0, r] whose cheapest completion fits the budget; (1, 0) if none."""
    pm = r * qa / (qa + qb)
    if _fit_cost(pm, qa, qb, r) > c + 1e-15:
        return 1.0, 0.0
    lo = 0.0 if _fit_cost(0.0, qa, qb, r) <= c else _edge(qa, qb, c, r, pm, 0.0)
    hi = r if _fit_cost(r, qa, qb, r) <= c else _edge(qa, qb, c, r, pm, r)
    return lo, hi


@_njit
def _pair_min(d0, d1, q0, q1, c, r):
    """Exact min of d0*p0 + d1*(r - p0) within the budget."""
    if r <= 0.0:
        return 0.0 if c >= -1e-15 else math.inf
    lo, hi = _feasible_interval(q0, q1, c, r)
    if lo > hi:
        return math.inf
    p0 = hi if d0 < d1 else lo
    return d0 * p0 + d1 * (r - p0)


@_njit
def _nested_min(d, q, k, c, r, xtol):
    if k == 1:
        return _pair_min(d[0], d[1], q[0], q[1], c, r)
    q_rest = 0.0
    for i in range(k):
        q_rest += q[i]
    a, b = _feasible_interval(q[k], q_rest, c, r)
    if a > b:
        return math.inf
    # golden-section search on a convex function of p_k
    x1 = b - _GOLD * (b - a)
    x2 = a + _GOLD * (b - a)
    f1 = d[k] * x1 + _nested_min(d, q, k - 1, c - _xlogy(x1, q[k]), r - x1, xtol)
    f2 = d[k] * x2 + _nested_min(d, q, k - 1, c - _xlogy(x2, q[k]), r - x2, xtol)
    while b - a > xtol:
        if f1 <= f2:
            b = x2
            x2 = x1
            f2 = f1
            x1 = b - _GOLD * (b - a)
            f1 = d[k] * x1 + _nested_min(d, q, k - 1, c - _xlogy(x1, q[k]), r - x1, xtol)
        else:
            a = x1
            x1 = x2
            f1 = f2
            x2 = a + _GOLD * (b - a)
            f2 = d[k] * x2 + _nested_min(d, q, k - 1, c - _xlogy(x2, q[k]), r - x2, xtol)
    best = min(f1, f2)
    for x in (a, b):
        v = d[k] * x + _nested_min(d, q, k - 1, c - _xlogy(x, q[k]), r - x, xtol)
        if v < best:
            best = v
    return best


def primal_inner_min(d, q, radius: float, xtol: float = 1e-7) -> float:
    """min d.p over the KL ball by nested exact line searches on the primal."""
    d = np.ascontiguousarray(d, dtype=np.float64)
    q = np.ascontiguousarray(q, dtype=np.float64)
    if d.size == 1:
        return float(d[0])
    return float(_nested_min(d, q, d.size - 1, float(radius), 1.0, float(xtol)))
