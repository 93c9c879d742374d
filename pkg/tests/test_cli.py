import csv
import io
import json

import numpy as np
import pytest

from parimutuel import cli
from parimutuel.kpm import SolverFailure
from parimutuel.samples import load_sample

HEADER = "order_id,limit_quantity,security_id,limit_price,side\n"


@pytest.fixture
def write(tmp_path):
    def _write(name, text):
        path = tmp_path / name
        path.write_text(text)
        return str(path)
    return _write


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def sweep_rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_clear_table5_uniform_is_empty(capsys, write):
    cfg = write("run.cfg", "alpha = 1\nomega = 2\nprior = uniform\n")
    code, out, _ = run(capsys, "clear", "--book", "sample:table5", "--config", cfg)
    assert code == 0
    doc = json.loads(out)
    assert doc["fills"] == [0.0] * 5
    assert doc["utility"] == -1.0
    assert cli.validate_result(doc, load_sample("table5")) == []


def test_clear_empty_book(capsys, write):
    book = write("empty.csv", HEADER)
    code, out, _ = run(capsys, "clear", "--book", book, "--states", "3")
    assert code == 0
    doc = json.loads(out)
    assert doc["fills"] == []
    assert doc["utility"] == -1.0
    assert doc["mu"] is None  # zero radius: the dual variable is unbounded


def test_missing_book_is_an_input_error(capsys, tmp_path):
    code, _, err = run(capsys, "clear", "--book", str(tmp_path / "nope.csv"))
    assert code == 1
    assert "cannot read book" in err


@pytest.mark.parametrize("text, message", [
    ("alpha = 1\ncolour = red\n", "unknown key"),
    ("alpha = -1\n", "alpha must be positive"),
    ("omega = x\n", "omega must be a number"),
    ("prior = 1, 2\n", "prior has 2 weights"),
    ("mechanism = lmsr\n", "mechanism must be one of"),
    ("inventory = 1 2\n", "inventory has 2 entries"),
    ("[section]\nalpha = 1\n", "config"),
])
def test_bad_config_is_an_input_error(capsys, write, text, message):
    cfg = write("run.cfg", text)
    code, _, err = run(capsys, "clear", "--book", "sample:table5", "--config", cfg)
    assert code == 1
    assert message in err


def test_bad_book_row_is_an_input_error(capsys, write):
    book = write("bad.csv", HEADER + "1,0.001,9,0.18,buy\n")
    code, _, err = run(capsys, "clear", "--book", book, "--states", "5")
    assert code == 1
    assert "row 2" in err


def test_solver_failure_exits_2(capsys, monkeypatch, table1):
    from parimutuel.solver import SolverReport

    def fail(book, params, tol):
        region = next(iter(cli.book_regions(book)))
        raise SolverFailure(region, SolverReport(np.zeros(1), 0.0, 1.0, 0.0, 0.0, 500, "max_iter"))

    monkeypatch.setattr(cli, "clear_market_kpm", fail)
    code, _, err = run(capsys, "clear", "--book", "sample:table1")
    assert code == 2
    assert "max_iter" in err


def test_cpcam_clear(capsys):
    code, out, _ = run(capsys, "clear", "--book", "sample:table5", "--mechanism", "cpcam")
    assert code == 0
    doc = json.loads(out)
    assert doc["price_sum"] == pytest.approx(1.0, abs=1e-6)
    assert max(doc["fills"]) <= 1e-6
    assert cli.validate_result(doc, load_sample("table5")) == []


def test_cpcam_rejects_sell_orders(capsys, write):
    book = write("sell.csv", HEADER + "1,1,1,0.4,sell\n")
    code, _, err = run(capsys, "clear", "--book", book, "--states", "2", "--mechanism", "cpcam")
    assert code == 1
    assert "buy orders only" in err


def test_result_round_trip_and_determinism(capsys, write, tmp_path):
    book = write("book.csv", HEADER + "1,1,1,0.2,sell\n2,1,2,0.3,buy\n")
    cfg = write("run.cfg", "alpha = 1\nomega = 0.1\nprior = 0.6, 0.4\n")
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for p in paths:
        assert run(capsys, "clear", "--book", book, "--config", cfg, "--out", str(p))[0] == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()
    doc = json.loads(paths[0].read_text())
    assert list(doc)[:4] == ["mechanism", "n_states", "n_orders", "alpha"]
    assert 0 < doc["fills"][0] < 1
    assert cli.validate_result(doc, cli.load_book(book, hint=2)) == []


def test_validate_result_catches_tampering(capsys, write):
    book = write("book.csv", HEADER + "1,1,1,0.2,sell\n2,1,2,0.3,buy\n")
    cfg = write("run.cfg", "alpha = 1\nomega = 0.1\nprior = 0.6, 0.4\n")
    _, out, _ = run(capsys, "clear", "--book", book, "--config", cfg)
    doc = json.loads(out)
    bad = dict(doc, utility=doc["utility"] + 0.01)
    assert cli.validate_result(bad, cli.load_book(book, hint=2))
    bad = dict(doc, fills=[2.0, 0.0])
    assert cli.validate_result(bad, cli.load_book(book, hint=2))


@pytest.mark.slow
def test_sweep_omega_table3(capsys, write):
    cfg = write("run.cfg", "alpha = 1\nprior = exponential\n")
    code, out, _ = run(capsys, "sweep", "--book", "sample:table3", "--config", cfg,
                       "--param", "omega", "--values", "0,0.2,0.4,1,2")
    assert code == 0
    rows = sweep_rows(out)
    assert [r["value"] for r in rows] == ["0", "0.2", "0.4", "1", "2"]
    totals = [float(r["total_fill"]) for r in rows]
    assert all(b <= a for a, b in zip(totals, totals[1:])), totals


@pytest.mark.slow
def test_sweep_prior_table5(capsys, write):
    cfg = write("run.cfg", "alpha = 1\nomega = 2\n")
    code, out, _ = run(capsys, "sweep", "--book", "sample:table5", "--config", cfg,
                       "--param", "prior", "--values", "uniform,exponential")
    assert code == 0
    uniform, skewed = sweep_rows(out)
    assert [float(uniform[f"x_{j}"]) for j in range(1, 6)] == [0.0] * 5
    np.testing.assert_allclose([float(skewed[f"x_{j}"]) for j in range(1, 6)], [1e-3] * 3 + [0, 0], atol=1e-6)


def test_sweep_single_value(capsys):
    code, out, _ = run(capsys, "sweep", "--book", "sample:table5", "--param", "omega", "--values", "0.5")
    assert code == 0
    rows = sweep_rows(out)
    assert len(rows) == 1
    assert list(rows[0]) == ["value", "x_1", "x_2", "x_3", "x_4", "x_5", "total_fill", "worst_case_pnl", "utility"]


def test_sweep_explicit_prior_vectors(capsys):
    code, out, _ = run(capsys, "sweep", "--book", "sample:table5", "--param", "prior",
                       "--values", "[1 1 1 1 1],[1 2 3 4 5]")
    assert code == 0
    assert [r["value"] for r in sweep_rows(out)] == ["1,1,1,1,1", "1,2,3,4,5"]


def test_sweep_unknown_param(capsys):
    code, _, err = run(capsys, "sweep", "--book", "sample:table5", "--param", "alpha", "--values", "1")
    assert code == 1
    assert "sweep parameter" in err


@pytest.mark.parametrize("book, count", [("sample:table1", 189), ("sample:table3", 243)])
def test_regions_count(capsys, book, count):
    code, out, _ = run(capsys, "regions", "--book", book)
    assert code == 0
    assert out == f"regions: {count}\n"


def test_regions_empty_book(capsys, write):
    code, out, _ = run(capsys, "regions", "--book", write("empty.csv", HEADER))
    assert (code, out) == (0, "regions: 1\n")


def test_regions_verbose(capsys):
    _, out, _ = run(capsys, "regions", "--book", "sample:table1", "--verbose")
    assert "E(1, 2, 2, 2, 1): P1.xi in [0, 0.18], P2.xi =0.18" in out
    assert "fills: 1:full 2:free 3:free 4:free 5:full 6:full 7:full" in out


def test_worst_case_command(capsys, write):
    cfg = write("run.cfg", "alpha = 1\nomega = 0.1\nprior = 0.5, 0.5\n")
    book = write("book.csv", HEADER + "1,1,1,0.5,buy\n")
    code, out, _ = run(capsys, "worst-case", "--book", book, "--config", cfg, "--prices", "0.5,0.5", "--fills", "1")
    assert code == 0
    doc = json.loads(out)
    assert doc["pnl"] == [-0.5, 0.5]
    assert doc["worst_case_prior"][0] > 0.5


def test_worst_case_size_mismatch(capsys):
    code, _, err = run(capsys, "worst-case", "--book", "sample:table5", "--prices", "0.5,0.5")
    assert code == 1
    assert "expected 5 prices" in err


def test_config_parsing_defaults_and_comments():
    cfg = cli.parse_config("# comment\nmechanism = CPCAM\ndelta = 1e-3  ; seed\ninventory = 0.1, -0.2\n")
    assert cfg.mechanism == "cpcam"
    assert cfg.delta == 1e-3
    np.testing.assert_array_equal(cfg.inventory, [0.1, -0.2])
    assert cfg.alpha == 1.0 and cfg.omega == 0.0 and cfg.prior == "uniform"
