"""Command-line front end: clear, sweep, regions and worst-case queries.

Result files are JSON with a fixed key order and numbers rounded to 12
significant digits, so identical inputs give byte-identical output. Sweeps
emit CSV for plotting. Exit codes: 0 success, 1 input error, 2 solver failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ambiguity import AmbiguitySet, kl_divergence, worst_case_distribution
from .cpcam import CpcamError, lp_value, solve_cpcam
from .kpm import MarketParams, SolverFailure, clear_market_kpm, state_pnl
from .orderbook import BookError, OrderBook, book_residual, parse_order_book, parse_securities
from .partition import book_regions, forced_fills, region_feasible
from .samples import SAMPLE_BOOKS, SAMPLE_STATES, parse_prior, sample_book_text

EXIT_OK, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2
MECHANISMS = ("kpm", "cpcam")
SWEEP_PARAMS = ("omega", "prior")
CONFIG_KEYS = ("mechanism", "alpha", "omega", "prior", "inventory", "delta", "tol", "out")
DIGITS = 12


class InputError(Exception):
    """Bad command-line, config or book input (exit code 1)."""


class SolveError(Exception):
    """A clearing solve failed (exit code 2)."""


@dataclass
class RunConfig:
    mechanism: str = "kpm"
    alpha: float = 1.0
    omega: float = 0.0
    prior: str = "uniform"
    inventory: np.ndarray | None = None
    delta: float = 1e-4
    tol: float = 1e-8
    out: str | None = None

    def validate(self, n_states: int) -> None:
        if self.mechanism not in MECHANISMS:
            raise InputError(f"mechanism must be one of {', '.join(MECHANISMS)}, got {self.mechanism!r}")
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise InputError(f"alpha must be positive, got {self.alpha}")
        if not (self.omega >= 0 and math.isfinite(self.omega)):
            raise InputError(f"omega must be non-negative, got {self.omega}")
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise InputError(f"delta must be positive, got {self.delta}")
        if not (0 < self.tol < 1):
            raise InputError(f"tol must lie in (0, 1), got {self.tol}")
        self.prior_vector(n_states)
        if self.inventory is not None and self.inventory.size != n_states:
            raise InputError(f"inventory has {self.inventory.size} entries, expected {n_states}")

    def prior_vector(self, n_states: int) -> np.ndarray:
        try:
            return parse_prior(self.prior, n_states)
        except ValueError as exc:
            raise InputError(str(exc)) from None

    def params(self, n_states: int, prior: str | None = None, omega: float | None = None) -> MarketParams:
        q = parse_prior(prior, n_states) if prior is not None else self.prior_vector(n_states)
        radius = self.omega if omega is None else omega
        return MarketParams.create(self.alpha, q, radius, self.inventory)


def _vector(text: str) -> np.ndarray:
    try:
        v = np.array([float(t) for t in text.replace(",", " ").split()], dtype=float)
    except ValueError:
        raise InputError(f"cannot parse vector {text!r}") from None
    if not np.all(np.isfinite(v)):
        raise InputError(f"vector entries must be finite: {text!r}")
    return v


def _number(key: str, text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise InputError(f"{key} must be a number, got {text!r}") from None


def parse_config(text: str) -> RunConfig:
    """Parse ``key = value`` lines; ``#`` and ``;`` start comments."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise InputError(f"config: {exc}") from None
    if parser.sections() != ["run"]:
        raise InputError("config: section headers are not supported")
    raw = dict(parser["run"])
    unknown = sorted(set(raw) - set(CONFIG_KEYS))
    if unknown:
        raise InputError(f"config: unknown key(s) {', '.join(unknown)}")
    cfg = RunConfig()
    if "mechanism" in raw:
        cfg.mechanism = raw["mechanism"].strip().lower()
    for key in ("alpha", "omega", "delta", "tol"):
        if key in raw:
            setattr(cfg, key, _number(key, raw[key]))
    if "prior" in raw:
        cfg.prior = raw["prior"].strip()
    if "inventory" in raw:
        cfg.inventory = _vector(raw["inventory"])
    if "out" in raw:
        cfg.out = raw["out"].strip()
    return cfg


def _read(path: str, what: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {what} {path!r}: {exc.strerror or exc}") from None


def _max_security_id(text: str) -> int:
    rows = csv.reader(io.StringIO(text))
    header = next((r for r in rows if any(c.strip() for c in r)), None)
    if header is None:
        return 0
    names = [c.strip().lower() for c in header]
    if "security_id" not in names:
        return 0
    k = names.index("security_id")
    ids = []
    for r in rows:
        try:
            ids.append(int(r[k]))
        except (IndexError, ValueError):
            continue
    return max(ids, default=0)


def load_book(path: str, states: int | None = None, securities: str | None = None,
              hint: int | None = None) -> OrderBook:
    """Load a book file or a bundled sample (``sample:table1``).

    The state count comes from the securities file, then ``states``, then
    ``hint`` (five for the samples, else e.g. the length of an explicit
    prior), then the largest security id.
    """
    if path.startswith("sample:"):
        name = path.split(":", 1)[1]
        if name not in SAMPLE_BOOKS:
            raise InputError(f"unknown sample book {name!r}; choose from {', '.join(SAMPLE_BOOKS)}")
        text = sample_book_text(name)
        hint = SAMPLE_STATES
    else:
        text = _read(path, "book")
    secs = None
    try:
        if securities is not None:
            n, secs = parse_securities(_read(securities, "securities file"))
            if states is not None and states != n:
                raise InputError(f"--states {states} disagrees with the securities file ({n} states)")
        else:
            n = states or hint or max(_max_security_id(text), 1)
        return parse_order_book(text, n, secs)
    except BookError as exc:
        raise InputError(f"{path}: {exc}") from None


def _num(v):
    v = float(v)
    return float(f"{v:.{DIGITS}g}") if math.isfinite(v) else None


def _vec(v):
    return [_num(t) for t in np.asarray(v, dtype=float).ravel()]


def _diagnostics(rep) -> dict:
    if rep is None:
        return None
    return {
        "status": rep.status,
        "iterations": int(rep.iterations),
        "stationarity": _num(rep.stationarity),
        "primal_feasibility": _num(rep.primal_feasibility),
        "complementarity": _num(rep.complementarity),
        "polished": bool(rep.polished),
    }


def _explicit_states(cfg: RunConfig) -> int | None:
    """State count implied by an explicit prior or inventory vector."""
    key = cfg.prior.strip().lower()
    if not (key == "uniform" or key.startswith("exponential")):
        try:
            return _vector(key).size
        except InputError:
            return None
    return cfg.inventory.size if cfg.inventory is not None else None


def clear(book: OrderBook, cfg: RunConfig) -> dict:
    """Run one clearing and return the result document."""
    n = book.n_states
    cfg.validate(n)
    w = np.zeros(n) if cfg.inventory is None else cfg.inventory
    if cfg.mechanism == "cpcam":
        try:
            sol = solve_cpcam(book, cfg.delta, tol=min(cfg.tol, 1e-10))
        except CpcamError as exc:
            raise InputError(str(exc)) from None
        except RuntimeError as exc:
            raise SolveError(str(exc)) from None
        pnl = state_pnl(book, sol.state_prices, sol.fills, w)
        return {
            "mechanism": "cpcam",
            "n_states": n,
            "n_orders": book.n_orders,
            "delta": _num(cfg.delta),
            "fills": _vec(sol.fills),
            "state_prices": _vec(sol.state_prices),
            "price_sum": _num(sol.price_sum),
            "slack": _vec(sol.slack),
            "pool": _num(sol.M),
            "pnl": _vec(pnl),
            "worst_case_pnl": _num(pnl.min()),
            "lp_value": _num(lp_value(book, sol.fills)),
            "limit_residual": _num(book_residual(book, sol.state_prices, sol.fills, 1e-6)),
            "diagnostics": _diagnostics(sol.report),
        }
    params = cfg.params(n)
    try:
        res = clear_market_kpm(book, params, tol=cfg.tol)
    except SolverFailure as exc:
        raise SolveError(str(exc)) from None
    best = res.best
    return {
        "mechanism": "kpm",
        "n_states": n,
        "n_orders": book.n_orders,
        "alpha": _num(params.alpha),
        "omega": _num(params.omega),
        "prior": _vec(params.ambiguity.pivot),
        "inventory": _vec(params.inventory),
        "fills": _vec(res.fills),
        "state_prices": _vec(res.state_prices),
        "worst_case_prior": _vec(res.worst_case.distribution),
        "pnl": _vec(res.pnl),
        "worst_case_pnl": _num(res.pnl.min()),
        "objective": _num(res.objective),
        "utility": _num(res.utility),
        "mu": _num(best.mu),
        "region": list(best.region.indices),
        "regions_total": res.regions_total,
        "regions_feasible": res.regions_feasible,
        "limit_residual": _num(book_residual(book, res.state_prices, res.fills, 1e-6)),
        "diagnostics": _diagnostics(best.report),
    }


def dump_result(doc: dict) -> str:
    return json.dumps(doc, indent=2) + "\n"


def validate_result(doc: dict, book: OrderBook, tol: float = 1e-6) -> list[str]:
    """Re-check a result document against the book; returns the violations."""
    errors = []
    n, J = book.n_states, book.n_orders
    Q = book.quantities
    x = np.array(doc["fills"], dtype=float)
    xi = np.array(doc["state_prices"], dtype=float)
    if x.shape != (J,):
        return [f"fills has {x.size} entries, expected {J}"]
    if xi.shape != (n,):
        return [f"state_prices has {xi.size} entries, expected {n}"]
    if np.any(x < -tol) or np.any(x > Q + tol):
        errors.append("fills outside [0, Q]")
    if np.any(xi < -tol) or abs(xi.sum() - 1.0) > tol:
        errors.append("state prices are not a distribution")
    if book_residual(book, xi, x, tol) > tol:
        errors.append("fills violate the limit order logic")
    w = np.array(doc.get("inventory") or np.zeros(n), dtype=float)
    pnl = state_pnl(book, xi, x, w)
    if np.abs(pnl - np.array(doc["pnl"], dtype=float)).max(initial=0.0) > tol:
        errors.append("pnl does not match fills and prices")
    if abs(float(doc["worst_case_pnl"]) - pnl.min()) > tol:
        errors.append("worst_case_pnl is not the minimum pnl")
    if doc["mechanism"] == "kpm":
        q = np.array(doc["prior"], dtype=float)
        p = np.array(doc["worst_case_prior"], dtype=float)
        omega, alpha = float(doc["omega"]), float(doc["alpha"])
        if np.any(p < -tol) or abs(p.sum() - 1.0) > tol or kl_divergence(np.clip(p, 0, None), q) > omega + tol:
            errors.append("worst-case prior lies outside the ambiguity ball")
        if abs(float(doc["utility"]) + float(doc["objective"])) > 1e-8:
            errors.append("utility is not -objective")
        d = -np.exp(-alpha * pnl)
        value = worst_case_distribution(d, AmbiguitySet(q, omega)).value
        if abs(value - float(doc["utility"])) > tol:
            errors.append("utility differs from the worst-case expected utility of the clearing")
        if abs(float(p @ d) - float(doc["utility"])) > tol:
            errors.append("worst-case prior does not attain the reported utility")
    else:
        if abs(float(doc["price_sum"]) - 1.0) > tol:
            errors.append("state prices do not sum to one")
    return errors


def sweep(book: OrderBook, cfg: RunConfig, param: str, values: list[str]) -> str:
    """CSV rows of value, fills, total fill, worst-case PnL and utility."""
    if param not in SWEEP_PARAMS:
        raise InputError(f"sweep parameter must be one of {', '.join(SWEEP_PARAMS)}, got {param!r}")
    if not values:
        raise InputError("no sweep values given")
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["value", *(f"x_{o.id}" for o in book.orders), "total_fill", "worst_case_pnl", "utility"])
    for value in values:
        run = RunConfig(**{k: getattr(cfg, k) for k in ("mechanism", "alpha", "omega", "prior", "inventory",
                                                            "delta", "tol")})
        if param == "omega":
            run.omega = _number("omega", value)
        else:
            run.prior = value
        doc = clear(book, run)
        util = doc.get("utility")
        out.writerow([value, *(_fmt(v) for v in doc["fills"]), _fmt(sum(doc["fills"])),
                      _fmt(doc["worst_case_pnl"]), _fmt(util) if util is not None else ""])
    return buf.getvalue()


def _fmt(v) -> str:
    return "" if v is None else f"{v:.{DIGITS}g}"


def regions_listing(book: OrderBook, verbose: bool = False) -> str:
    regions = list(book_regions(book))
    lines = [f"regions: {len(regions)}"]
    if verbose:
        for region in regions:
            feasible = region_feasible(region, book.securities, book.n_states)
            lines.append(f"{region.describe(book.securities)}  [{'feasible' if feasible else 'empty'}]")
            if feasible:
                fs = forced_fills(region, book)
                lines.append("  fills: " + " ".join(f"{o.id}:{s.value}" for o, s in zip(book.orders, fs.statuses)))
    return "\n".join(lines) + "\n"


def _split_values(text: str) -> list[str]:
    # a comma list, except that commas inside brackets belong to one value
    out, depth, cur = [], 0, ""
    for ch in text:
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        if ch in ",;" and depth == 0:
            out.append(cur.strip())
            cur = ""
        else:
            cur += ch
    if cur.strip():
        out.append(cur.strip())
    return [v.strip("[]").replace(" ", ",") if v.startswith("[") else v for v in out]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="parimutuel", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def book_args(p, config=True):
        p.add_argument("--book", required=True, help="order-book CSV, or sample:table1|table3|table5")
        p.add_argument("--states", type=int, help="number of states for Arrow-Debreu books")
        p.add_argument("--securities", help="CSV of security_id,p_1,...,p_N payoff rows")
        if config:
            p.add_argument("--config", help="key = value run configuration")
            p.add_argument("--mechanism", choices=MECHANISMS, help="override the configured mechanism")
        p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("clear", help="clear a book and write a JSON result")
    book_args(p)
    p.add_argument("--out", help="result path (default: stdout)")

    p = sub.add_parser("sweep", help="clear a book over omega or prior values, emitting CSV")
    book_args(p)
    p.add_argument("--param", required=True, help="omega or prior")
    p.add_argument("--values", required=True, help="comma list; bracket explicit priors, e.g. [1 2 3]")
    p.add_argument("--out", help="CSV path (default: stdout)")

    p = sub.add_parser("regions", help="count the regions of the state-price partition")
    book_args(p, config=False)

    p = sub.add_parser("worst-case", help="worst-case prior and expected utility of a given clearing")
    book_args(p)
    p.add_argument("--prices", required=True, help="state prices, comma list")
    p.add_argument("--fills", help="fills per order, comma list (default: no fills)")
    p.add_argument("--out", help="result path (default: stdout)")
    return parser


def _write(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot write {path!r}: {exc.strerror or exc}") from None


def _config(args) -> RunConfig:
    cfg = parse_config(_read(args.config, "config")) if args.config else RunConfig()
    if args.mechanism:
        cfg.mechanism = args.mechanism
    return cfg


def worst_case(book: OrderBook, cfg: RunConfig, prices: str, fills: str | None) -> dict:
    n = book.n_states
    cfg.validate(n)
    xi = _vector(prices)
    x = _vector(fills) if fills else np.zeros(book.n_orders)
    if xi.size != n or x.size != book.n_orders:
        raise InputError(f"expected {n} prices and {book.n_orders} fills")
    params = cfg.params(n)
    pnl = state_pnl(book, xi, x, params.inventory)
    wc = worst_case_distribution(-np.exp(-params.alpha * pnl), params.ambiguity)
    return {
        "alpha": _num(params.alpha),
        "omega": _num(params.omega),
        "prior": _vec(params.ambiguity.pivot),
        "state_prices": _vec(xi),
        "fills": _vec(x),
        "pnl": _vec(pnl),
        "worst_case_pnl": _num(pnl.min()),
        "worst_case_prior": _vec(wc.distribution),
        "utility": _num(wc.value),
        "mu": _num(wc.mu),
    }


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "regions":
            book = load_book(args.book, args.states, args.securities)
            _write(regions_listing(book, args.verbose), None)
            return EXIT_OK
        cfg = _config(args)
        book = load_book(args.book, args.states, args.securities, _explicit_states(cfg))
        out = args.out or cfg.out
        if args.command == "clear":
            doc = clear(book, cfg)
            if args.verbose:
                print(f"region {doc.get('region')} solved; utility {doc.get('utility')}", file=sys.stderr)
            _write(dump_result(doc), out)
        elif args.command == "sweep":
            _write(sweep(book, cfg, args.param, _split_values(args.values)), out)
        else:
            _write(dump_result(worst_case(book, cfg, args.prices, args.fills)), out)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolveError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
