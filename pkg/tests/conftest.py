import numpy as np
import pytest

from parimutuel.orderbook import OrderBook
from parimutuel.samples import load_sample


@pytest.fixture(scope="session")
def table1():
    return load_sample("table1")


@pytest.fixture(scope="session")
def table3():
    return load_sample("table3")


@pytest.fixture(scope="session")
def table5():
    return load_sample("table5")


def random_buy_book(rng, n_states, n_orders, price_grid=None):
    """Arrow-Debreu buy orders with random states, prices and sizes."""
    rows = []
    for j in range(n_orders):
        price = rng.choice(price_grid) if price_grid is not None else round(rng.uniform(0.05, 0.95), 2)
        rows.append((j + 1, round(rng.uniform(0.5, 2.0), 3), int(rng.integers(1, n_states + 1)), float(price), "buy"))
    return OrderBook.from_rows(n_states, rows)


def random_simplex(rng, n):
    return rng.dirichlet(np.ones(n))



_criteria: dict[int, bool] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    report = outcome.get_result()
    if marker is None or report.when == "teardown":
        return
    n = marker.args[0]
    if report.when == "call" or report.failed:
        _criteria[n] = _criteria.get(n, True) and report.passed


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if _criteria[n] else 'FAIL'}")
