"""Tests for the closed forms, the leg decomposition and the constrained solver."""

import numpy as np
import pytest
from scipy.optimize import minimize

from online_portfolio.errors import ConfigError, InfeasibleConstraintsError, SingularMatrixError
from online_portfolio.model.portfolio import (
    ConstraintSet,
    decompose,
    gmv_weights,
    kkt_residuals,
    mv_closed_form,
    solve_constrained_mv,
)


def _problem(rng, n, mu_scale=0.1):
    a = rng.normal(size=(n, n))
    sigma = a @ a.T / n + 0.05 * np.eye(n)
    return mu_scale * rng.normal(size=n), sigma


def _reference(mu, sigma, gamma, constraints):
    """Split-variable SLSQP optimum of the same problem."""
    n = len(mu)
    lb, ub = constraints.bounds(n)

    def objective(x):
        w = x[:n] - x[n:]
        return 0.5 * gamma * w @ sigma @ w - mu @ w

    cons = [
        {'type': 'eq', 'fun': lambda x: (x[:n] - x[n:]).sum() - 1.0},
        {'type': 'ineq', 'fun': lambda x: constraints.max_leverage - x.sum()},
    ]
    if np.isfinite(lb).any():
        cons.append({'type': 'ineq', 'fun': lambda x: (x[:n] - x[n:]) - np.where(np.isfinite(lb), lb, -1e9)})
    if np.isfinite(ub).any():
        cons.append({'type': 'ineq', 'fun': lambda x: np.where(np.isfinite(ub), ub, 1e9) - (x[:n] - x[n:])})
    x0 = np.concatenate([np.full(n, 1.0 / n), np.zeros(n)])
    res = minimize(objective, x0, constraints=cons, bounds=[(0, None)] * (2 * n),
                   method="SLSQP", options={'maxiter': 1000, 'ftol': 1e-14})
    w = res.x[:n] - res.x[n:]
    return float(mu @ w - 0.5 * gamma * w @ sigma @ w)


# ============================================================================
# CLOSED FORMS
# ============================================================================

def test_closed_form_satisfies_first_order_conditions(rng):
    for _ in range(1000):
        n = int(rng.integers(2, 51))
        mu, sigma = _problem(rng, n)
        gamma = float(rng.uniform(1.0, 100.0))
        w = mv_closed_form(mu, sigma, gamma)
        assert w.sum() == pytest.approx(1.0, abs=1e-10)
        grad = mu - gamma * sigma @ w
        np.testing.assert_allclose(grad, grad.mean(), atol=1e-8 * max(1.0, np.abs(grad).max()))


def test_gmv_minimises_variance(rng):
    _, sigma = _problem(rng, 8)
    w = gmv_weights(sigma)
    assert w.sum() == pytest.approx(1.0)
    for _ in range(20):
        d = rng.normal(size=8)
        d -= d.mean()
        v = w + 0.01 * d
        assert v @ sigma @ v >= w @ sigma @ w


def test_singular_covariance_is_reported():
    with pytest.raises(SingularMatrixError):
        gmv_weights(np.zeros((3, 3)))


def test_non_positive_risk_aversion_is_rejected(rng):
    mu, sigma = _problem(rng, 3)
    with pytest.raises(ConfigError):
        mv_closed_form(mu, sigma, 0.0)


# ============================================================================
# DECOMPOSITION
# ============================================================================

def test_decomposition_reassembles_closed_form(rng):
    for _ in range(1000):
        n = int(rng.integers(2, 31))
        pi, sigma = _problem(rng, n)
        alpha = 0.05 * rng.normal(size=n)
        gamma = float(rng.uniform(1.0, 100.0))
        dec = decompose(pi, alpha, sigma, sigma, gamma, gamma)
        np.testing.assert_allclose(dec.total, mv_closed_form(pi + alpha, sigma, gamma), atol=1e-10)


def test_legs_sum_to_one_and_zero(rng):
    pi, sigma_s = _problem(rng, 6)
    alpha, sigma_a = _problem(rng, 6)
    dec = decompose(pi, alpha, sigma_s, sigma_a, 20.0, 80.0)
    assert dec.gmv.sum() == pytest.approx(1.0)
    assert dec.systematic.sum() == pytest.approx(0.0, abs=1e-12)
    assert dec.active.sum() == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(dec.total, dec.gmv + dec.systematic + dec.active)


def test_each_leg_depends_only_on_its_inputs(rng):
    pi, sigma_s = _problem(rng, 5)
    alpha, sigma_a = _problem(rng, 5)
    base = decompose(pi, alpha, sigma_s, sigma_a, 20.0, 40.0)
    moved = decompose(pi, 3.0 * alpha, sigma_s, 2.0 * sigma_a, 20.0, 10.0)
    np.testing.assert_array_equal(base.gmv, moved.gmv)
    np.testing.assert_array_equal(base.systematic, moved.systematic)


# ============================================================================
# CONSTRAINED SOLVER
# ============================================================================

def test_long_only_minimum_variance_example():
    sigma = np.array([[1.0, 1.2, 0.0], [1.2, 4.0, 0.0], [0.0, 0.0, 10.0]])
    solution = solve_constrained_mv(np.zeros(3), sigma, 1.0, ConstraintSet(max_leverage=1.0))
    np.testing.assert_allclose(solution.weights, [10 / 11, 0.0, 1 / 11], atol=1e-10)
    assert solution.method == "active_set"
    assert kkt_residuals(solution, np.zeros(3), sigma, 1.0, ConstraintSet(max_leverage=1.0))['stationarity'] < 1e-10


def test_slack_constraints_return_closed_form(rng):
    mu, sigma = _problem(rng, 6, mu_scale=1e-3)
    constraints = ConstraintSet(max_leverage=1e6)
    solution = solve_constrained_mv(mu, sigma, 10.0, constraints)
    assert solution.method == "closed_form"
    np.testing.assert_allclose(solution.weights, mv_closed_form(mu, sigma, 10.0))


@pytest.mark.parametrize("seed", range(40))
def test_leverage_constrained_optimum(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 16))
    mu, sigma = _problem(rng, n)
    constraints = ConstraintSet(max_leverage=1.5)
    solution = solve_constrained_mv(mu, sigma, 1.0, constraints)

    assert constraints.violation(solution.weights) <= 1e-8
    assert solution.objective(mu, sigma, 1.0) >= _reference(mu, sigma, 1.0, constraints) - 1e-7
    if solution.method != "slsqp":
        kkt = kkt_residuals(solution, mu, sigma, 1.0, constraints)
        assert kkt['stationarity'] < 1e-8
        assert kkt['complementary'] < 1e-8


@pytest.mark.parametrize("seed", range(10))
def test_per_asset_bounds(seed):
    rng = np.random.default_rng(100 + seed)
    n = int(rng.integers(3, 10))
    mu, sigma = _problem(rng, n)
    constraints = ConstraintSet(max_leverage=2.0, lower=-0.2, upper=0.5)
    solution = solve_constrained_mv(mu, sigma, 1.0, constraints)

    assert constraints.violation(solution.weights) <= 1e-8
    assert np.all(solution.weights >= -0.2 - 1e-9) and np.all(solution.weights <= 0.5 + 1e-9)
    assert solution.objective(mu, sigma, 1.0) >= _reference(mu, sigma, 1.0, constraints) - 1e-7


def test_warm_start_gives_same_optimum(rng):
    mu, sigma = _problem(rng, 8)
    constraints = ConstraintSet(max_leverage=1.2)
    cold = solve_constrained_mv(mu, sigma, 1.0, constraints)
    warm = solve_constrained_mv(mu, sigma, 1.0, constraints, warm_start=np.eye(8)[0])
    np.testing.assert_allclose(warm.weights, cold.weights, atol=1e-8)


def test_infeasible_bounds_name_the_constraint():
    with pytest.raises(InfeasibleConstraintsError) as excinfo:
        ConstraintSet(max_leverage=2.0, lower=np.full(3, 0.5), upper=np.ones(3))
    assert excinfo.value.constraint == "bounds"

    with pytest.raises(InfeasibleConstraintsError) as excinfo:
        ConstraintSet(max_leverage=1.0, lower=-1.0, upper=np.array([-0.5, 1.0, 1.0]))
    assert excinfo.value.constraint == "max_leverage"


def test_leverage_below_one_is_rejected():
    with pytest.raises(ConfigError):
        ConstraintSet(max_leverage=0.5)
