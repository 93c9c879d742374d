"""Partition of the state-price simplex into cells on which every order's fill
status is settled.

For a security with distinct bids ``B^1 < ... < B^n`` the price ``P_k . xi`` is
confined to one of ``2n + 1`` alternating cells::

    [lo, B^1], {B^1}, [B^1, B^2], {B^2}, ..., {B^n}, [B^n, hi]

Cell index ``l`` is 1-based; odd indices are intervals, even ones are points.
A region picks one cell per security.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .orderbook import OrderBook, PriceLadder, Security, Side, price_ladders
from .solver import ConvexProgram, is_feasible


@dataclass(frozen=True)
class Cell:
    lo: float
    hi: float

    @property
    def is_point(self) -> bool:
        return self.lo == self.hi

    def describe(self) -> str:
        if self.is_point:
            return f"={self.lo:g}"
        return f"in [{self.lo:g}, {self.hi:g}]"


@dataclass(frozen=True)
class Region:
    indices: tuple[int, ...]
    cells: tuple[Cell, ...]
    feasible: bool | None = None

    def describe(self, securities=None) -> str:
        ids = [s.id for s in securities] if securities else range(1, len(self.cells) + 1)
        parts = [f"P{k}.xi {c.describe()}" for k, c in zip(ids, self.cells)]
        return f"E{self.indices}: " + ", ".join(parts)


class FillStatus(Enum):
    FIXED_ZERO = "zero"
    FIXED_FULL = "full"
    FREE = "free"


@dataclass(frozen=True)
class FillSet:
    statuses: tuple[FillStatus, ...]

    def indices(self, status: FillStatus) -> np.ndarray:
        return np.array([j for j, s in enumerate(self.statuses) if s is status], dtype=int)

    @property
    def free(self) -> np.ndarray:
        return self.indices(FillStatus.FREE)

    @property
    def full(self) -> np.ndarray:
        return self.indices(FillStatus.FIXED_FULL)

    def fixed_fills(self, quantities: np.ndarray) -> np.ndarray:
        """Fill vector with FIXED entries set and FREE entries left at 0."""
        x = np.zeros(len(self.statuses))
        full = self.full
        x[full] = quantities[full]
        return x


def _price_range(sec: Security) -> tuple[float, float]:
    p = sec.vector
    return float(p.min()), float(p.max())


def security_cells(ladder: PriceLadder, sec: Security | None = None) -> list[Cell]:
    """Alternating intervals and price points; unit claims span [0, 1]."""
    lo, hi = _price_range(sec) if sec is not None else (0.0, 1.0)
    prices = ladder.prices
    if not prices:
        return [Cell(lo, hi)]
    cells = [Cell(min(lo, prices[0]), prices[0])]
    for a, b in zip(prices, prices[1:]):
        cells += [Cell(a, a), Cell(a, b)]
    cells += [Cell(prices[-1], prices[-1]), Cell(prices[-1], max(hi, prices[-1]))]
    return cells


def region_count(ladders) -> int:
    out = 1
    for lad in ladders:
        out *= 2 * lad.size + 1
    return out


def enumerate_regions(ladders, securities=None):
    """Yield every region, in lexicographic order of the cell indices."""
    ladders = list(ladders)
    if securities is None:
        securities = [None] * len(ladders)
    per_sec = [security_cells(l, s) for l, s in zip(ladders, securities)]
    for combo in itertools.product(*[range(len(c)) for c in per_sec]):
        yield Region(tuple(i + 1 for i in combo), tuple(per_sec[k][i] for k, i in enumerate(combo)))


def book_regions(book: OrderBook):
    return enumerate_regions(price_ladders(book), book.securities)


def cell_constraints(region: Region, securities, n_states: int):
    """Linear constraints on xi: (E, e) equalities and (G, h) inequalities."""
    eq_rows, eq_rhs = [np.ones(n_states)], [1.0]
    g_rows, g_rhs = [], []
    for sec, cell in zip(securities, region.cells):
        p = sec.vector
        lo, hi = _price_range(sec)
        if cell.is_point:
            eq_rows.append(p)
            eq_rhs.append(cell.lo)
            continue
        # bounds implied by xi on the simplex are redundant; skip them
        if cell.lo > lo:
            g_rows.append(-p)
            g_rhs.append(-cell.lo)
        if cell.hi < hi:
            g_rows.append(p)
            g_rhs.append(cell.hi)
    E = np.array(eq_rows)
    G = np.array(g_rows) if g_rows else np.zeros((0, n_states))
    return E, np.array(eq_rhs), G, np.array(g_rhs)


def region_feasible(region: Region, securities, n_states: int) -> bool:
    E, e, G, h = cell_constraints(region, securities, n_states)
    prog = ConvexProgram(
        n_states,
        lambda y: (0.0, np.zeros(n_states), np.zeros((n_states, n_states))),
        eq_matrix=E, eq_rhs=e, ineq_matrix=G, ineq_rhs=h,
        lower=np.zeros(n_states),
    )
    return is_feasible(prog, feas_tol=1e-9)


def forced_fills(region: Region, book: OrderBook) -> FillSet:
    """Classify each order as fixed at zero, fixed at its quantity, or free.

    Cells are closed, so an order whose bid sits on a cell endpoint is settled
    by which side of the bid the cell lies on; equality permits any fill.
    """
    if region.feasible is False:
        raise ValueError(f"region {region.indices} is infeasible")
    pos = {s.id: k for k, s in enumerate(book.securities)}
    out = []
    for o in book.orders:
        cell = region.cells[pos[o.security_id]]
        b = o.limit_price
        if cell.is_point and cell.lo == b:
            out.append(FillStatus.FREE)
            continue
        below = cell.hi <= b  # market price never above the bid
        if not below and cell.lo < b:
            raise ValueError(f"cell {cell} straddles bid {b} of order {o.id}")
        if o.side is Side.BUY:
            out.append(FillStatus.FIXED_FULL if below else FillStatus.FIXED_ZERO)
        else:
            out.append(FillStatus.FIXED_ZERO if below else FillStatus.FIXED_FULL)
    return FillSet(tuple(out))
