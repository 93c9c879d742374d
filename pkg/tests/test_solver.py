import math

import numpy as np
import pytest
from scipy.special import logsumexp

from parimutuel.oracles import box_qp_bruteforce
from parimutuel.solver import (
    INFEASIBLE,
    OPTIMAL,
    ConvexProgram,
    NonConvexError,
    exp_constraint_hessian,
    is_feasible,
    minimize,
    perspective_lse,
    perspective_lse_derivatives,
)


def quadratic(P, r):
    P = np.asarray(P, dtype=float)
    r = np.asarray(r, dtype=float)
    return lambda y: (float(0.5 * y @ P @ y + r @ y), P @ y + r, P)


def linear(c):
    c = np.asarray(c, dtype=float)
    zero = np.zeros((c.size, c.size))
    return lambda y: (float(c @ y), c, zero)


def test_active_bound():
    rep = minimize(ConvexProgram(1, quadratic([[2.0]], [0.0]), lower=[1.0]))
    assert rep.status == OPTIMAL
    assert rep.solution[0] == 1.0
    assert rep.objective == pytest.approx(1.0, abs=1e-8)
    assert max(rep.residuals) <= 1e-8


def test_lp_vertex_on_simplex():
    prog = ConvexProgram(3, linear([0.3, 0.1, 0.2]), eq_matrix=[[1, 1, 1]], eq_rhs=[1.0], lower=np.zeros(3))
    rep = minimize(prog)
    assert rep.ok
    np.testing.assert_allclose(rep.solution, [0, 1, 0], atol=1e-9)
    assert rep.objective == pytest.approx(0.1, abs=1e-8)


def test_log_sum_exp_with_equality():
    def f(y):
        p = np.exp(y - logsumexp(y))
        return float(logsumexp(y)), p, np.diag(p) - np.outer(p, p)

    rep = minimize(ConvexProgram(2, f, eq_matrix=[[1, 1]], eq_rhs=[0.0]))
    assert rep.ok
    np.testing.assert_allclose(rep.solution, [0, 0], atol=1e-8)
    assert rep.objective == pytest.approx(math.log(2), abs=1e-10)
    # stationarity on the line x + y = 0 by central differences
    h = 1e-6
    slope = (f(rep.solution + [h, -h])[0] - f(rep.solution - [h, -h])[0]) / (2 * h)
    assert abs(slope) < 1e-8


def test_infeasible_constraints():
    prog = ConvexProgram(2, linear([1, 1]), eq_matrix=[[1, 1]], eq_rhs=[3.0], upper=[1.0, 1.0])
    assert minimize(prog).status == INFEASIBLE
    assert not is_feasible(prog)


def test_implicit_equality_is_detected():
    # x + y <= 1 together with x, y >= 0 and x + y >= 1 pins the line
    prog = ConvexProgram(2, quadratic(np.eye(2), [0, 0]), ineq_matrix=[[1, 1], [-1, -1]], ineq_rhs=[1, -1],
                         lower=np.zeros(2))
    rep = minimize(prog)
    assert rep.ok
    np.testing.assert_allclose(rep.solution, [0.5, 0.5], atol=1e-8)


def test_non_convex_objective_is_flagged():
    prog = ConvexProgram(1, quadratic([[-1.0]], [0.0]), lower=[-1.0], upper=[2.0])
    with pytest.raises(NonConvexError):
        minimize(prog)


def test_nonlinear_constraint():
    # min -x - y on the unit disc
    def disc(y):
        return np.array([y @ y - 1.0]), 2 * y[None, :], 2 * np.eye(2)[None]

    rep = minimize(ConvexProgram(2, linear([-1, -1]), constraints=disc, x0=np.zeros(2)))
    assert rep.ok
    np.testing.assert_allclose(rep.solution, [math.sqrt(0.5)] * 2, atol=1e-7)
    assert rep.constraint_multipliers[0] == pytest.approx(1 / math.sqrt(2), abs=1e-6)


def test_constraint_start_must_be_interior():
    def disc(y):
        return np.array([y @ y - 1.0]), 2 * y[None, :], 2 * np.eye(2)[None]

    with pytest.raises(ValueError, match="strictly feasible"):
        minimize(ConvexProgram(2, linear([1, 0]), constraints=disc, x0=np.array([2.0, 0.0])))


def test_dimension_checks():
    with pytest.raises(ValueError):
        ConvexProgram(2, linear([1, 1]), eq_matrix=[[1, 1, 1]], eq_rhs=[1.0])
    with pytest.raises(ValueError):
        ConvexProgram(2, linear([1, 1]), lower=[0.0])


def test_max_iter_is_reported():
    prog = ConvexProgram(3, linear([0.3, 0.1, 0.2]), eq_matrix=[[1, 1, 1]], eq_rhs=[1.0], lower=np.zeros(3))
    assert minimize(prog, max_iter=2).status == "max_iter"


def test_box_qp_against_active_set_enumeration():
    rng = np.random.default_rng(3)
    for _ in range(10):
        n = int(rng.integers(1, 6))
        B = rng.normal(size=(n, n))
        P = B @ B.T + 0.1 * np.eye(n)
        r = rng.normal(size=n) * 3
        lo, hi = -rng.uniform(0.1, 1, n), rng.uniform(0.1, 1, n)
        rep = minimize(ConvexProgram(n, quadratic(P, r), lower=lo, upper=hi))
        value, x = box_qp_bruteforce(P, r, lo, hi)
        assert rep.ok
        assert rep.objective == pytest.approx(value, abs=1e-6)
        np.testing.assert_allclose(rep.solution, x, atol=1e-6)


# ---------------------------------------------------------------- perspective lse


def test_perspective_lse_at_zero_is_max():
    assert perspective_lse(0.0, [1, 5, 2], [0.3, 0.3, 0.3]) == 5.0


def test_perspective_lse_single_term():
    assert perspective_lse(0.7, [1.5], [0.2]) == pytest.approx(0.7 * math.log(0.2) + 1.5)


def test_perspective_lse_uniform():
    assert perspective_lse(2.0, np.zeros(4), np.ones(4)) == pytest.approx(2 * math.log(4))


def test_perspective_lse_rejects_negative_mu():
    with pytest.raises(ValueError):
        perspective_lse(-1.0, [1.0], [1.0])


def test_derivatives_need_positive_mu():
    with pytest.raises(ValueError):
        perspective_lse_derivatives(0.0, [1.0, 2.0], [0.5, 0.5])


def test_derivatives_closed_form():
    mu, w, th = 0.8, np.array([0.2, -0.4, 1.1]), np.array([0.3, 0.5, 0.9])
    grad, hess = perspective_lse_derivatives(mu, w, th)
    e = th * np.exp(w / mu)
    p = e / e.sum()
    np.testing.assert_allclose(grad[:3], p, rtol=1e-13)
    assert grad[3] == pytest.approx(math.log(e.sum()) - p @ w / mu, rel=1e-13)
    np.testing.assert_allclose(hess[:3, :3], (np.diag(p) - np.outer(p, p)) / mu, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(hess, hess.T)


def test_exp_constraint_hessian_is_psd():
    H = exp_constraint_hessian(0.3, -1.2, -2.0)
    assert np.linalg.eigvalsh(H).min() >= 0
    assert H[1, 1] == pytest.approx(2 * math.exp(-1.2))
