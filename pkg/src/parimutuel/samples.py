"""Bundled sample books and named prior generators."""

from __future__ import annotations

import math
import re
from importlib import resources

import numpy as np

from .orderbook import OrderBook, parse_order_book

SAMPLE_BOOKS = ("table1", "table3", "table5")
SAMPLE_STATES = 5


def sample_book_text(name: str) -> str:
    if name not in SAMPLE_BOOKS:
        raise KeyError(f"unknown sample book {name!r}; choose from {', '.join(SAMPLE_BOOKS)}")
    return resources.files("parimutuel").joinpath("data").joinpath(f"{name}.csv").read_text(encoding="utf-8")


def load_sample(name: str) -> OrderBook:
    """Five-state Arrow-Debreu sample books: table1, table3 or table5."""
    return parse_order_book(sample_book_text(name), SAMPLE_STATES)


_EXP = re.compile(r"^exponential(?:\(\s*([^)]*)\s*\))?$")


def uniform_prior(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def exponential_prior(n: int, rate: float = 1.0) -> np.ndarray:
    """q_i proportional to exp(rate * i) for i = 1..n."""
    w = np.exp(rate * (np.arange(1, n + 1) - n))
    return w / w.sum()


def parse_prior(text: str, n: int | None = None) -> np.ndarray:
    """Prior from ``uniform``, ``exponential``, ``exponential(rate)`` or a weight list.

    Weight lists are comma or whitespace separated and are normalised.
    Named generators need ``n``.
    """
    key = text.strip().lower()
    if key == "uniform" or (m := _EXP.match(key)):
        if n is None:
            raise ValueError(f"prior {text!r} needs the number of states")
        if key == "uniform":
            return uniform_prior(n)
        rate = float(m.group(1)) if m.group(1) else 1.0
        if not math.isfinite(rate):
            raise ValueError(f"exponential rate must be finite, got {rate}")
        return exponential_prior(n, rate)
    try:
        w = np.array([float(v) for v in re.split(r"[,\s]+", key) if v], dtype=float)
    except ValueError:
        raise ValueError(f"cannot parse prior {text!r}") from None
    if w.size == 0 or not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise ValueError(f"prior weights must be positive and finite: {text!r}")
    if n is not None and w.size != n:
        raise ValueError(f"prior has {w.size} weights, expected {n}")
    return w / w.sum()
