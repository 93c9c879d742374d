"""KL ambiguity ball and the worst-case expectation over it.

The inner problem ``min_{p in ball} d.p`` is solved through its one-dimensional
Lagrangian dual ``l(mu) = mu*Omega + mu*log(sum q_i exp(-d_i/mu))``. Its
derivative is ``Omega - KL(p_mu || q)`` where ``p_mu`` is the exponential tilt
of ``q`` by ``-d/mu``, so the minimiser is the root of a monotone function and
plain bisection finds it reliably.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, rel_entr


@dataclass(frozen=True)
class AmbiguitySet:
    pivot: np.ndarray
    radius: float

    def __post_init__(self):
        q = np.asarray(self.pivot, dtype=float)
        if q.ndim != 1 or q.size == 0:
            raise ValueError("pivot prior must be a non-empty vector")
        if not np.all(np.isfinite(q)) or np.any(q <= 0):
            raise ValueError("pivot prior must be strictly positive")
        if abs(q.sum() - 1.0) > 1e-12:
            raise ValueError(f"pivot prior must sum to 1 (got {q.sum():.15g})")
        if not (self.radius >= 0 and math.isfinite(self.radius)):
            raise ValueError(f"radius must be finite and >= 0, got {self.radius}")
        q.setflags(write=False)
        object.__setattr__(self, "pivot", q)
        object.__setattr__(self, "radius", float(self.radius))

    @classmethod
    def normalized(cls, weights, radius: float) -> "AmbiguitySet":
        w = np.asarray(weights, dtype=float)
        return cls(w / w.sum(), radius)

    @property
    def n_states(self) -> int:
        return self.pivot.size

    def contains(self, p, tol: float = 1e-8) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(
            p.shape == self.pivot.shape
            and np.all(p >= -tol)
            and abs(p.sum() - 1.0) <= tol
            and kl_divergence(np.clip(p, 0, None), self.pivot) <= self.radius + tol
        )


@dataclass(frozen=True)
class WorstCase:
    distribution: np.ndarray
    value: float
    mu: float
    nu: float


def kl_divergence(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    if np.any(q <= 0):
        raise ValueError("reference distribution must be strictly positive")
    return float(max(rel_entr(p, q).sum(), 0.0))


def dual_objective(mu: float, d, amb: AmbiguitySet) -> float:
    d = np.asarray(d, dtype=float)
    if mu == 0:
        return float(-d.min())
    return float(mu * amb.radius + mu * logsumexp(-d / mu, b=amb.pivot))


def _tilt(mu: float, d: np.ndarray, q: np.ndarray) -> tuple[np.ndarray, float]:
    """Exponential tilt p_mu and KL(p_mu || q)."""
    u = -(d - d.min()) / mu
    lz = logsumexp(u, b=q)
    logp_over_q = u - lz
    p = q * np.exp(logp_over_q)
    p /= p.sum()
    kl = float(max(np.dot(p, logp_over_q), 0.0))
    return p, kl


def _vertex_solution(d: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Mass on argmin d, split in proportion to q."""
    mask = d == d.min()
    p = np.where(mask, q, 0.0)
    return p / p.sum()


def worst_case_distribution(d, amb: AmbiguitySet, iterations: int = 200) -> WorstCase:
    """Minimise ``d.p`` over the ambiguity ball; returns p*, value and duals."""
    d = np.asarray(d, dtype=float)
    q = amb.pivot
    if d.shape != q.shape:
        raise ValueError(f"payoff vector has length {d.size}, ball has {q.size} states")
    if not np.all(np.isfinite(d)):
        raise ValueError("payoff vector must be finite")
    omega = amb.radius
    if omega == 0.0:
        return WorstCase(q.copy(), float(q @ d), math.inf, math.nan)

    dmin = d.min()
    span = d.max() - dmin
    p0 = _vertex_solution(d, q)
    if span == 0.0 or kl_divergence(p0, q) <= omega:
        return WorstCase(p0, float(p0 @ d), 0.0, float(-dmin))

    # KL(p_mu) falls from -log q(argmin) > omega to 0 as mu grows: bracket the crossing
    # Hoeffding: KL(p_mu) <= (span / mu)**2 / 8, so KL(p_hi) <= omega / 4 exactly; the
    # computed KL may not show it when omega is below rounding level
    hi = 2.0 * span / math.sqrt(8.0 * omega)
    lo = hi / 2.0
    while lo > 1e-300 and _tilt(lo, d, q)[1] <= omega:
        hi, lo = lo, lo / 2.0
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if _tilt(mid, d, q)[1] > omega:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    mu = hi
    p, _ = _tilt(mu, d, q)
    nu = -mu + mu * float(logsumexp(-d / mu, b=q))
    return WorstCase(p, float(p @ d), mu, nu)
