import numpy as np
import pytest

from parimutuel.orderbook import OrderBook, PriceLadder, arrow_debreu_securities, book_residual, price_ladders
from parimutuel.partition import (
    Cell,
    FillStatus,
    Region,
    book_regions,
    enumerate_regions,
    forced_fills,
    region_count,
    region_feasible,
)

FULL, ZERO, FREE = FillStatus.FIXED_FULL, FillStatus.FIXED_ZERO, FillStatus.FREE


def region_at(book, indices):
    return next(r for r in book_regions(book) if r.indices == indices)


def test_table1_has_189_regions(table1):
    regions = list(book_regions(table1))
    assert len(regions) == 189 == region_count(price_ladders(table1))


def test_empty_book_has_one_region():
    book = OrderBook(3, tuple(arrow_debreu_securities(3)))
    regions = list(book_regions(book))
    assert len(regions) == 1
    assert region_feasible(regions[0], book.securities, 3)
    assert forced_fills(regions[0], book).statuses == ()


def test_one_price_gives_three_cells():
    regions = list(enumerate_regions([PriceLadder(1, (0.3,))]))
    assert [r.cells[0] for r in regions] == [Cell(0.0, 0.3), Cell(0.3, 0.3), Cell(0.3, 1.0)]


def test_table3_has_243_regions(table3):
    assert sum(1 for _ in book_regions(table3)) == 3**5


def test_enumeration_is_lexicographic(table1):
    idx = [r.indices for r in book_regions(table1)]
    assert idx == sorted(idx)
    assert idx[0] == (1, 1, 1, 1, 1)


def test_pinned_region_is_feasible(table1):
    region = region_at(table1, (1, 2, 2, 2, 1))
    assert region.cells[1:4] == (Cell(0.18, 0.18),) * 3
    assert region_feasible(region, table1.securities, 5)


def test_overpriced_pin_is_infeasible():
    secs = arrow_debreu_securities(5)
    region = Region((2,) * 5, (Cell(0.25, 0.25),) * 5)
    assert not region_feasible(region, secs, 5)


def test_whole_simplex_is_feasible():
    secs = arrow_debreu_securities(4)
    assert region_feasible(Region((1,) * 4, (Cell(0.0, 1.0),) * 4), secs, 4)


def test_forced_fills_of_the_worked_region(table1):
    fills = forced_fills(region_at(table1, (1, 2, 2, 2, 1)), table1)
    assert fills.statuses == (FULL, FREE, FREE, FREE, FULL, FULL, FULL)
    np.testing.assert_array_equal(fills.fixed_fills(table1.quantities), [0.001, 0, 0, 0, 0.002, 0.001, 0.001])
    np.testing.assert_array_equal(fills.free, [1, 2, 3])


def test_pin_at_bid_frees_the_order():
    book = OrderBook.from_rows(2, [(1, 1.0, 1, 0.4, "buy")])
    region = region_at(book, (2, 1))
    assert forced_fills(region, book).statuses == (FREE,)


def test_sell_orders_flip_the_classification():
    book = OrderBook.from_rows(2, [(1, 1.0, 1, 0.4, "sell")])
    below, _, above = (region_at(book, (k, 1)) for k in (1, 2, 3))
    assert forced_fills(below, book).statuses == (ZERO,)
    assert forced_fills(above, book).statuses == (FULL,)


def test_infeasible_region_is_refused(table1):
    region = Region((1,) * 5, region_at(table1, (1, 1, 1, 1, 1)).cells, feasible=False)
    with pytest.raises(ValueError, match="infeasible"):
        forced_fills(region, table1)


def test_fixed_assignments_obey_the_fill_rule(table1):
    rng = np.random.default_rng(1)
    checked = 0
    for region in book_regions(table1):
        if not region_feasible(region, table1.securities, 5):
            continue
        fills = forced_fills(region, table1)
        free = fills.free
        for _ in range(5):
            xi = rng.dirichlet(np.ones(5))
            prices = xi[:4]
            inside = all(c.lo - 1e-12 <= p <= c.hi + 1e-12 for c, p in zip(region.cells, prices))
            if not inside:
                continue
            x = fills.fixed_fills(table1.quantities)
            mask = np.ones(table1.n_orders, dtype=bool)
            mask[free] = False
            sub = OrderBook(5, table1.securities, tuple(o for o, m in zip(table1.orders, mask) if m))
            assert book_residual(sub, xi, x[mask], 1e-12) <= 1e-12
            checked += 1
    assert checked > 0
