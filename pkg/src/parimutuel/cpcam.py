"""Convex pari-mutuel call auction.

The auctioneer seeds every state with a starting order of size ``delta`` and
solves::

    maximise    b.x - M + delta * sum_i log s_i
    subject to  A x + s = M,  0 <= x <= Q

State prices are the multipliers of the pooling constraint,
``eps_i = delta / s_i``; stationarity in ``M`` makes them sum to one. As
``delta -> 0`` the fills converge to the linear program
``max b.x - max_i (A x)_i`` over the same box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .orderbook import OrderBook, book_residual
from .solver import ConvexProgram, SolverReport, minimize


class CpcamError(ValueError):
    """Invalid input to the call auction."""


@dataclass
class CpcamSolution:
    fills: np.ndarray
    slack: np.ndarray
    M: float
    state_prices: np.ndarray
    delta: float
    report: SolverReport | None = None

    @property
    def price_sum(self) -> float:
        return float(self.state_prices.sum())


def _check_book(book: OrderBook) -> None:
    if not book.buy_only:
        raise CpcamError("the call auction accepts buy orders only")


def _check_delta(delta) -> float:
    if np.ndim(delta) != 0:
        raise CpcamError("only a uniform starting order is supported: delta must be a scalar")
    delta = float(delta)
    if not (delta > 0 and math.isfinite(delta)):
        raise CpcamError(f"starting order delta must be positive, got {delta}")
    return delta


def solve_cpcam(book: OrderBook, delta: float, tol: float = 1e-10, max_iter: int = 500) -> CpcamSolution:
    """Solve the barrier auction in (x, M) with s = M - A x eliminated.

    Variables are measured in units of delta, which leaves the objective
    ``-b.x + M - sum log s`` free of delta and keeps the KKT test meaningful
    when fills are of the order of the seed.
    """
    _check_book(book)
    delta = _check_delta(delta)
    A, b, Q = book.A, book.bids, book.quantities
    n, J = A.shape
    # ds/dy for y = (x, M)
    K = np.hstack([-A, np.ones((n, 1))])
    c = np.append(-b, 1.0)

    def objective(y):
        s = K @ y
        if np.any(s <= 0):
            return math.inf, None, None
        inv = 1.0 / s
        f = float(c @ y - np.log(s).sum())
        g = c - K.T @ inv
        H = (K.T * inv**2) @ K
        return f, g, H

    x0 = Q / (2 * delta)
    y0 = np.append(x0, (A @ x0).max(initial=0.0) + 1.0)
    prog = ConvexProgram(
        J + 1, objective,
        lower=np.append(np.zeros(J), -np.inf), upper=np.append(Q / delta, np.inf), x0=y0,
    )
    rep = minimize(prog, tol=tol, max_iter=max_iter)
    if not rep.ok:
        raise RuntimeError(
            f"call auction solve stopped with status {rep.status} "
            f"(stationarity {rep.stationarity:.2e}, complementarity {rep.complementarity:.2e})"
        )
    y = rep.solution
    s_hat = y[J] - A @ y[:J]
    return CpcamSolution(delta * y[:J], delta * s_hat, delta * float(y[J]), 1.0 / s_hat, delta, rep)


def solve_cpcam_lp(book: OrderBook, tol: float = 1e-10) -> np.ndarray:
    """Fills of the zero-seed limit: max b.x - max_i (A x)_i over 0 <= x <= Q.

    Solved exactly in epigraph form, maximising b.x - m subject to A x <= m.
    """
    _check_book(book)
    A, b, Q = book.A, book.bids, book.quantities
    n, J = A.shape
    if J == 0:
        return np.zeros(0)
    c = np.append(-b, 1.0)
    zero = np.zeros((J + 1, J + 1))
    prog = ConvexProgram(
        J + 1, lambda y: (float(c @ y), c, zero),
        ineq_matrix=np.hstack([A, -np.ones((n, 1))]), ineq_rhs=np.zeros(n),
        lower=np.append(np.zeros(J), -np.inf), upper=np.append(Q, np.inf),
    )
    rep = minimize(prog, tol=tol)
    if not rep.ok:
        raise RuntimeError(f"limit program stopped with status {rep.status}")
    return rep.solution[:J]


def lp_value(book: OrderBook, x) -> float:
    """b.x - max_i (A x)_i, the limit auctioneer's worst-case surplus."""
    x = np.asarray(x, dtype=float)
    return float(book.bids @ x - (book.A @ x).max(initial=0.0))


def delta_path(book: OrderBook, deltas) -> list[tuple[float, float]]:
    """Sup-norm distance from x(delta) to the limit fills, for each delta."""
    deltas = [_check_delta(d) for d in deltas]
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise CpcamError("deltas must be strictly decreasing")
    x_star = solve_cpcam_lp(book)
    out = []
    for d in deltas:
        x = solve_cpcam(book, d).fills
        out.append((d, float(np.abs(x - x_star).max(initial=0.0))))
    return out


def limit_logic_residual(book: OrderBook, sol: CpcamSolution, tol: float = 1e-8) -> float:
    return book_residual(book, sol.state_prices, sol.fills, tol)
