import numpy as np
import pytest

from parimutuel.cpcam import CpcamError, delta_path, limit_logic_residual, lp_value, solve_cpcam, solve_cpcam_lp
from parimutuel.oracles import lp_vertex_value
from parimutuel.orderbook import OrderBook, arrow_debreu_securities


def single_order(bid, n=2, qty=1.0):
    return OrderBook.from_rows(n, [(1, qty, 1, bid, "buy")])


def stationary_point(bid, delta):
    """Interior optimum of b*x - M + delta*(log(M - x) + log M) for one order on state 1."""
    M = delta / (1 - bid)
    return M - delta / bid, M


def check_invariants(book, sol):
    A = book.A
    np.testing.assert_allclose(A @ sol.fills + sol.slack, sol.M, atol=1e-8)
    assert np.all(sol.fills >= 0) and np.all(sol.fills <= book.quantities)
    assert np.all(sol.slack > 0)
    np.testing.assert_allclose(sol.state_prices, sol.delta / sol.slack, rtol=1e-12)
    assert sol.price_sum == pytest.approx(1.0, abs=1e-6)
    assert limit_logic_residual(book, sol) <= 1e-5


def test_empty_book():
    book = OrderBook(3, tuple(arrow_debreu_securities(3)))
    sol = solve_cpcam(book, 0.01)
    assert sol.fills.size == 0
    assert sol.M == pytest.approx(0.03, rel=1e-9)
    np.testing.assert_allclose(sol.state_prices, [1 / 3] * 3, rtol=1e-9)


@pytest.mark.parametrize("delta", [1e-2, 1e-3, 1e-6])
def test_single_order_matches_stationary_point(delta):
    book = single_order(0.6)
    sol = solve_cpcam(book, delta)
    x, M = stationary_point(0.6, delta)
    assert sol.fills[0] == pytest.approx(x, rel=1e-7)
    assert sol.M == pytest.approx(M, rel=1e-7)
    np.testing.assert_allclose(sol.state_prices, [0.6, 0.4], atol=1e-7)
    check_invariants(book, sol)


def test_bid_at_one_half_stays_unfilled():
    # the stationary point sits exactly on x = 0 with a zero multiplier, so
    # barrier iterates only approach it like t**-0.5
    book = single_order(0.5)
    sol = solve_cpcam(book, 1e-3)
    assert sol.fills[0] == pytest.approx(0.0, abs=1e-4 * 1e-3)
    assert sol.M == pytest.approx(2e-3, rel=1e-4)
    np.testing.assert_allclose(sol.state_prices, [0.5, 0.5], atol=1e-4)
    check_invariants(book, sol)


def test_table5_fills_vanish(table5):
    sol = solve_cpcam(table5, 1e-4)
    assert np.abs(sol.fills).max() <= 1e-6
    check_invariants(table5, sol)


def test_sell_orders_are_rejected():
    book = OrderBook.from_rows(2, [(1, 1.0, 1, 0.5, "sell")])
    with pytest.raises(CpcamError, match="buy orders"):
        solve_cpcam(book, 0.1)
    with pytest.raises(CpcamError):
        solve_cpcam_lp(book)


@pytest.mark.parametrize("delta", [0.0, -1.0, np.inf, [0.1, 0.1]])
def test_bad_delta(delta):
    with pytest.raises(CpcamError):
        solve_cpcam(single_order(0.6), delta)


def test_lp_table5_is_zero(table5):
    x = solve_cpcam_lp(table5)
    value, x_vertex = lp_vertex_value(table5.A, table5.bids, table5.quantities)
    np.testing.assert_allclose(x, 0.0, atol=1e-9)
    assert value == pytest.approx(0.0, abs=1e-12)
    assert lp_value(table5, x) == pytest.approx(0.0, abs=1e-9)


def test_lp_rejects_expensive_single_order():
    x = solve_cpcam_lp(single_order(0.9))
    assert x[0] == pytest.approx(0.0, abs=1e-9)


def test_lp_fills_complementary_orders():
    book = OrderBook.from_rows(2, [(1, 1.0, 1, 0.6, "buy"), (2, 1.0, 2, 0.6, "buy")])
    x = solve_cpcam_lp(book)
    value, _ = lp_vertex_value(book.A, book.bids, book.quantities)
    np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-8)
    assert value == pytest.approx(0.2)
    assert lp_value(book, x) == pytest.approx(0.2, abs=1e-8)


def test_lp_matches_vertex_enumeration_on_random_books():
    rng = np.random.default_rng(5)
    for _ in range(10):
        n, J = int(rng.integers(2, 4)), int(rng.integers(1, 4))
        rows = [(j + 1, float(rng.integers(1, 4)), int(rng.integers(1, n + 1)), round(rng.uniform(0.2, 0.9), 2), "buy")
                for j in range(J)]
        book = OrderBook.from_rows(n, rows)
        value, _ = lp_vertex_value(book.A, book.bids, book.quantities)
        assert lp_value(book, solve_cpcam_lp(book)) == pytest.approx(value, abs=1e-7)
        assert value >= 0


def test_delta_path_on_table5(table5):
    path = delta_path(table5, [1e-2, 1e-3, 1e-4, 1e-5])
    dist = [d for _, d in path]
    assert all(b <= a for a, b in zip(dist, dist[1:]))
    assert dist[-1] <= 1e-3


def test_delta_path_single_and_empty():
    assert len(delta_path(single_order(0.6), [1e-3])) == 1
    empty = OrderBook(2, tuple(arrow_debreu_securities(2)))
    assert [d for _, d in delta_path(empty, [1e-2, 1e-3])] == [0.0, 0.0]


def test_delta_path_needs_decreasing_deltas():
    with pytest.raises(CpcamError, match="decreasing"):
        delta_path(single_order(0.6), [1e-3, 1e-2])


def test_fills_approach_the_limit():
    book = OrderBook.from_rows(2, [(1, 1.0, 1, 0.6, "buy"), (2, 1.0, 2, 0.6, "buy")])
    dist = [d for _, d in delta_path(book, [1e-1, 1e-2, 1e-3, 1e-4])]
    assert all(b <= a for a, b in zip(dist, dist[1:]))
    assert dist[-1] <= 1e-3
