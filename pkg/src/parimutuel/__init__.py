"""Robust pari-mutuel clearing of contingent-claim call auctions."""

from .ambiguity import AmbiguitySet, WorstCase, dual_objective, kl_divergence, worst_case_distribution
from .cpcam import CpcamSolution, delta_path, solve_cpcam, solve_cpcam_lp
from .kpm import (
    ClearingResult,
    MarketParams,
    RegionSolution,
    SolverFailure,
    clear_market_kpm,
    evaluate_primal_objective,
    solve_region,
    worst_case_pnl,
)
from .orderbook import BookError, Order, OrderBook, PriceLadder, Security, Side, parse_order_book, payoff_matrix, price_ladders
from .partition import FillSet, FillStatus, Region, enumerate_regions, forced_fills, region_feasible
from .solver import ConvexProgram, SolverReport, minimize, perspective_lse, perspective_lse_derivatives

__version__ = "0.1.0"
