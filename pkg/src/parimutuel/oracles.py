"""Brute-force reference solutions used to cross-check the fast solvers.

Everything here works on the primal side by enumeration, grids or line search, so it
shares no code path with the dual and barrier routines it is compared to.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from . import _kernels
from .orderbook import OrderBook


def inner_min_primal(d, q, radius: float, xtol: float = 1e-7) -> float:
    """min d.p over {p in simplex : KL(p || q) <= radius} on the primal side.

    Coordinates are fixed one at a time by golden-section search over the
    values that keep the remainder inside the budget, and the last two are
    split exactly. Every section value is convex, so the search is global.
    """
    return _kernels.primal_inner_min(d, q, radius, xtol)


def inner_min_line(d, q, radius: float, step: float = 1e-6) -> float:
    """Two-state inner minimum on the literal grid p = (x, 1 - x)."""
    d = np.asarray(d, dtype=float)
    q = np.asarray(q, dtype=float)
    if d.size != 2:
        raise ValueError("the line oracle is for two states")
    x = np.linspace(0.0, 1.0, int(round(1.0 / step)) + 1)
    p = np.stack([x, 1.0 - x], axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        kl = np.where(p > 0, p * np.log(p / q), 0.0).sum(axis=1)
    ok = kl <= radius
    return float((p[ok] @ d).min())


def kpm_grid_utility(book: OrderBook, alpha: float, prior, radius: float, inventory=None,
                     xi_step: float = 0.02, fill_steps: int = 10) -> tuple[float, np.ndarray, np.ndarray]:
    """Best worst-case CARA utility over a state-price grid.

    At every grid point the fills are those the limit rule forces, with orders
    priced exactly at their bid gridded over ``Q * k / fill_steps``.
    Returns (utility, xi, x) of the best grid point.
    """
    A = book.A
    n = book.n_states
    q = np.asarray(prior, dtype=float)
    q = q / q.sum()
    w = np.zeros(n) if inventory is None else np.asarray(inventory, dtype=float)
    Q = book.quantities
    thresholds = book.signed_bids
    ticks = int(round(1.0 / xi_step))
    best = (-math.inf, None, None)
    for combo in itertools.product(range(ticks + 1), repeat=n - 1):
        if sum(combo) > ticks:
            continue
        xi = np.array(list(combo) + [ticks - sum(combo)], dtype=float) / ticks
        price = A.T @ xi
        options = []
        for j in range(book.n_orders):
            gap = price[j] - thresholds[j]
            if abs(gap) <= 1e-12:
                options.append(Q[j] * np.arange(fill_steps + 1) / fill_steps)
            elif gap < 0:
                options.append([Q[j]])
            else:
                options.append([0.0])
        for x in itertools.product(*options):
            x = np.array(x, dtype=float)
            wealth = w + price @ x - A @ x
            u = inner_min_primal(-np.exp(-alpha * wealth), q, radius) if radius > 0 else float(q @ -np.exp(-alpha * wealth))
            if u > best[0]:
                best = (u, xi, x)
    return best


def lp_vertex_value(A, b, Q) -> tuple[float, np.ndarray]:
    """max b.x - max_i (A x)_i over 0 <= x <= Q by enumerating basic solutions.

    Variables are (x, m) with rows A x - m <= 0, -x <= 0, x <= Q; every vertex
    is the solution of J + 1 linearly independent tight rows.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    Q = np.asarray(Q, dtype=float)
    n, J = A.shape
    if J == 0:
        return 0.0, np.zeros(0)
    eye = np.eye(J)
    G = np.vstack([np.hstack([A, -np.ones((n, 1))]),
                   np.hstack([-eye, np.zeros((J, 1))]),
                   np.hstack([eye, np.zeros((J, 1))])])
    h = np.concatenate([np.zeros(n), np.zeros(J), Q])
    c = np.append(b, -1.0)
    best = (-math.inf, None)
    for rows in itertools.combinations(range(G.shape[0]), J + 1):
        M = G[list(rows)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        y = np.linalg.solve(M, h[list(rows)])
        if np.all(G @ y <= h + 1e-10):
            val = float(c @ y)
            if val > best[0] + 1e-12:
                best = (val, y[:J])
    return best


def box_qp_bruteforce(P, r, lower, upper) -> tuple[float, np.ndarray]:
    """min 0.5 x'Px + r'x over a box by enumerating which bounds are active."""
    P = np.asarray(P, dtype=float)
    r = np.asarray(r, dtype=float)
    n = r.size
    best = (math.inf, None)
    for pattern in itertools.product((-1, 0, 1), repeat=n):
        x = np.zeros(n)
        fixed = np.array(pattern) != 0
        x[np.array(pattern) == -1] = np.asarray(lower)[np.array(pattern) == -1]
        x[np.array(pattern) == 1] = np.asarray(upper)[np.array(pattern) == 1]
        free = ~fixed
        if free.any():
            rhs = -(r[free] + P[np.ix_(free, fixed)] @ x[fixed])
            try:
                x[free] = np.linalg.solve(P[np.ix_(free, free)], rhs)
            except np.linalg.LinAlgError:
                continue
        if np.any(x < np.asarray(lower) - 1e-12) or np.any(x > np.asarray(upper) + 1e-12):
            continue
        val = float(0.5 * x @ P @ x + r @ x)
        if val < best[0]:
            best = (val, x)
    return best
