"""Limit order book: securities, orders, payoff matrix and price ladders."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property

import numpy as np


class BookError(ValueError):
    """Raised for malformed or invalid order-book input."""


class Side(IntEnum):
    BUY = 1
    SELL = -1

    @classmethod
    def parse(cls, text: str) -> "Side":
        key = text.strip().lower()
        if key in ("buy", "b", "+1", "1"):
            return cls.BUY
        if key in ("sell", "s", "-1"):
            return cls.SELL
        raise BookError(f"unknown side {text!r}")


@dataclass(frozen=True)
class Security:
    id: int
    payoff: tuple[float, ...]

    def __post_init__(self):
        if self.id < 1:
            raise BookError(f"security id must be >= 1, got {self.id}")
        if not any(v != 0.0 for v in self.payoff):
            raise BookError(f"security {self.id} has an all-zero payoff")

    @property
    def vector(self) -> np.ndarray:
        return np.asarray(self.payoff, dtype=float)

    @property
    def is_unit_claim(self) -> bool:
        """True for an Arrow-Debreu claim (pays 1 in exactly one state)."""
        nz = [v for v in self.payoff if v != 0.0]
        return len(nz) == 1 and nz[0] == 1.0


@dataclass(frozen=True)
class Order:
    id: int
    security_id: int
    side: Side
    limit_price: float
    limit_quantity: float
    payoff_column: tuple[float, ...]

    @property
    def sign(self) -> int:
        return int(self.side)


@dataclass(frozen=True)
class PriceLadder:
    security_id: int
    prices: tuple[float, ...]

    @property
    def size(self) -> int:
        return len(self.prices)


def arrow_debreu_securities(n_states: int) -> list[Security]:
    eye = np.eye(n_states)
    return [Security(k + 1, tuple(eye[k])) for k in range(n_states)]


def make_order(order_id, security: Security, side, price, quantity) -> Order:
    side = Side.parse(side) if isinstance(side, str) else Side(side)
    if not quantity > 0:
        raise BookError(f"order {order_id}: limit quantity must be positive, got {quantity}")
    if not price > 0:
        raise BookError(f"order {order_id}: limit price must be positive, got {price}")
    if security.is_unit_claim and not price < 1:
        raise BookError(f"order {order_id}: price {price} must lie strictly inside (0, 1)")
    col = tuple(float(side) * v for v in security.payoff)
    return Order(int(order_id), security.id, side, float(price), float(quantity), col)


@dataclass(frozen=True)
class OrderBook:
    n_states: int
    securities: tuple[Security, ...]
    orders: tuple[Order, ...] = field(default=())

    def __post_init__(self):
        ids = {s.id for s in self.securities}
        for s in self.securities:
            if len(s.payoff) != self.n_states:
                raise BookError(f"security {s.id}: payoff has {len(s.payoff)} entries, expected {self.n_states}")
        for o in self.orders:
            if o.security_id not in ids:
                raise BookError(f"order {o.id}: unknown security id {o.security_id}")
            if len(o.payoff_column) != self.n_states:
                raise BookError(f"order {o.id}: payoff column length mismatch")

    @classmethod
    def from_rows(cls, n_states, rows, securities=None) -> "OrderBook":
        """Build from (order_id, quantity, security_id, price, side) tuples."""
        secs = list(securities) if securities is not None else arrow_debreu_securities(n_states)
        by_id = {s.id: s for s in secs}
        orders = []
        for oid, qty, sid, price, side in rows:
            if sid not in by_id:
                raise BookError(f"order {oid}: unknown security id {sid}")
            orders.append(make_order(oid, by_id[sid], side, price, qty))
        return cls(n_states, tuple(secs), tuple(orders))

    @property
    def n_orders(self) -> int:
        return len(self.orders)

    @cached_property
    def A(self) -> np.ndarray:
        return payoff_matrix(self)

    @cached_property
    def sides(self) -> np.ndarray:
        return np.array([o.sign for o in self.orders], dtype=float)

    @cached_property
    def bids(self) -> np.ndarray:
        return np.array([o.limit_price for o in self.orders], dtype=float)

    @cached_property
    def quantities(self) -> np.ndarray:
        return np.array([o.limit_quantity for o in self.orders], dtype=float)

    @cached_property
    def signed_bids(self) -> np.ndarray:
        """B_j * b_j, the threshold the order's column price is compared against."""
        return self.sides * self.bids

    def security(self, security_id: int) -> Security:
        for s in self.securities:
            if s.id == security_id:
                return s
        raise KeyError(security_id)

    @property
    def buy_only(self) -> bool:
        return all(o.side is Side.BUY for o in self.orders)


def payoff_matrix(book: OrderBook) -> np.ndarray:
    if not book.orders:
        return np.zeros((book.n_states, 0))
    return np.array([o.payoff_column for o in book.orders], dtype=float).T


def price_ladders(book: OrderBook) -> list[PriceLadder]:
    ladders = []
    for s in book.securities:
        prices = sorted({o.limit_price for o in book.orders if o.security_id == s.id})
        ladders.append(PriceLadder(s.id, tuple(prices)))
    return ladders


ORDER_COLUMNS = ("order_id", "limit_quantity", "security_id", "limit_price", "side")


def parse_order_book(text: str, n_states: int, securities=None) -> OrderBook:
    """Parse order-book CSV text.

    Columns are ``order_id,limit_quantity,security_id,limit_price,side``.
    Securities default to Arrow-Debreu claims on ``n_states`` states.
    """
    secs = list(securities) if securities is not None else arrow_debreu_securities(n_states)
    reader = csv.reader(io.StringIO(text))
    header = None
    rows = []
    seen = set()
    for lineno, raw in enumerate(reader, start=1):
        if not raw or all(not c.strip() for c in raw):
            continue
        cells = [c.strip() for c in raw]
        if header is None:
            header = [c.lower() for c in cells]
            missing = [c for c in ORDER_COLUMNS if c not in header]
            if missing:
                raise BookError(f"row {lineno}: header is missing column(s) {', '.join(missing)}")
            pos = [header.index(c) for c in ORDER_COLUMNS]
            continue
        if len(cells) != len(header):
            raise BookError(f"row {lineno}: expected {len(header)} fields, found {len(cells)}")
        try:
            oid = int(cells[pos[0]])
            qty = float(cells[pos[1]])
            sid = int(cells[pos[2]])
            price = float(cells[pos[3]])
            side = Side.parse(cells[pos[4]])
        except (ValueError, BookError) as exc:
            raise BookError(f"row {lineno}: {exc}") from None
        if oid in seen:
            raise BookError(f"row {lineno}: duplicate order id {oid}")
        seen.add(oid)
        rows.append((lineno, (oid, qty, sid, price, side)))
    if header is None:
        raise BookError("order book is empty: header row required")

    by_id = {s.id: s for s in secs}
    orders = []
    for lineno, (oid, qty, sid, price, side) in rows:
        if sid not in by_id:
            raise BookError(f"row {lineno}: unknown security id {sid}")
        try:
            orders.append(make_order(oid, by_id[sid], side, price, qty))
        except BookError as exc:
            raise BookError(f"row {lineno}: {exc}") from None
    return OrderBook(n_states, tuple(secs), tuple(orders))


def parse_securities(text: str) -> tuple[int, list[Security]]:
    """Parse ``security_id,p_1,...,p_N`` rows. Returns (N, securities)."""
    secs = []
    n = None
    reader = csv.reader(io.StringIO(text))
    for lineno, raw in enumerate(reader, start=1):
        cells = [c.strip() for c in raw]
        if not cells or all(not c for c in cells):
            continue
        if cells[0].lower() == "security_id":
            continue
        try:
            sid = int(cells[0])
            payoff = tuple(float(c) for c in cells[1:])
        except ValueError as exc:
            raise BookError(f"securities row {lineno}: {exc}") from None
        if n is None:
            n = len(payoff)
        elif len(payoff) != n:
            raise BookError(f"securities row {lineno}: expected {n} payoffs, found {len(payoff)}")
        try:
            secs.append(Security(sid, payoff))
        except BookError as exc:
            raise BookError(f"securities row {lineno}: {exc}") from None
    if not secs:
        raise BookError("securities file has no rows")
    if len({s.id for s in secs}) != len(secs):
        raise BookError("duplicate security id")
    return n, secs


def to_csv(book: OrderBook) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ORDER_COLUMNS)
    for o in book.orders:
        w.writerow([o.id, repr(o.limit_quantity), o.security_id, repr(o.limit_price), o.side.name.lower()])
    return buf.getvalue()


def limit_order_residual(prices, thresholds, x, quantities, tol: float = 1e-8) -> float:
    """Largest violation of the fill rule: filled orders need price <= threshold,
    orders short of their quantity need price >= threshold."""
    prices = np.asarray(prices, dtype=float)
    thresholds = np.asarray(thresholds, dtype=float)
    x = np.asarray(x, dtype=float)
    quantities = np.asarray(quantities, dtype=float)
    if prices.size == 0:
        return 0.0
    over = np.where(x > tol, np.maximum(prices - thresholds, 0.0), 0.0)
    under = np.where(x < quantities - tol, np.maximum(thresholds - prices, 0.0), 0.0)
    return float(max(over.max(), under.max()))


def book_residual(book: OrderBook, state_prices, x, tol: float = 1e-8) -> float:
    return limit_order_residual(book.A.T @ np.asarray(state_prices, dtype=float),
                                book.signed_bids, x, book.quantities, tol)
