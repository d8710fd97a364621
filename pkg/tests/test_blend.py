"""Tests for the mixed estimate, forecast uncertainty and the covariance stack."""

import numpy as np
import pytest

from online_portfolio.errors import DataError, SingularMatrixError
from online_portfolio.model.blend import (
    UncertaintyState,
    build_covariance_stack,
    conditional_covariance,
    mixed_estimate,
    nearest_psd,
    shrink_covariance,
    shrinkage_target,
    update_uncertainty,
)


def _spd(rng, n, floor=0.1):
    a = rng.normal(size=(n, n))
    return a @ a.T / n + floor * np.eye(n)


# ============================================================================
# MIXED ESTIMATE
# ============================================================================

def test_equal_uncertainty_gives_midpoint(rng):
    n = 6
    pi, mu = rng.normal(size=n), rng.normal(size=n)
    omega = _spd(rng, n)
    blend = mixed_estimate(pi, mu, omega, omega)
    np.testing.assert_allclose(blend.mu_bl, 0.5 * (pi + mu), atol=1e-10)
    np.testing.assert_allclose(blend.psi, 0.5 * np.eye(n), atol=1e-10)


def test_uncertain_active_forecast_is_ignored(rng):
    n = 5
    pi, mu = rng.normal(size=n), rng.normal(size=n)
    omega = _spd(rng, n)
    blend = mixed_estimate(pi, mu, omega, 1e6 * omega)
    assert np.linalg.norm(blend.alpha_bl) < 1e-4 * np.linalg.norm(mu - pi)


def test_blend_matches_precision_weighting(rng):
    n = 4
    pi, mu = rng.normal(size=n), rng.normal(size=n)
    omega_pi, omega_mu = _spd(rng, n), _spd(rng, n)
    blend = mixed_estimate(pi, mu, omega_pi, omega_mu, ridge=0.0)

    inv_pi, inv_mu = np.linalg.inv(omega_pi), np.linalg.inv(omega_mu)
    omega_bl = np.linalg.inv(inv_pi + inv_mu)
    np.testing.assert_allclose(blend.mu_bl, omega_bl @ (inv_pi @ pi + inv_mu @ mu), atol=1e-10)
    np.testing.assert_allclose(blend.psi, omega_pi @ np.linalg.inv(omega_pi + omega_mu), atol=1e-10)
    np.testing.assert_allclose(blend.omega_bl, omega_bl, atol=1e-10)
    np.testing.assert_allclose(blend.mu_bl, pi + blend.alpha_bl)


def test_blend_rejects_indefinite_uncertainty():
    with pytest.raises(SingularMatrixError):
        mixed_estimate(np.zeros(2), np.ones(2), -np.eye(2), np.zeros((2, 2)))


# ============================================================================
# FORECAST UNCERTAINTY
# ============================================================================

def test_uncertainty_skips_flagged_assets(rng):
    state = UncertaintyState.create(3, lam_s=0.9, lam_a=0.8)
    for _ in range(5):
        state = update_uncertainty(state, rng.normal(size=3), rng.normal(size=3), np.zeros(3, dtype=bool))
    before = state.omega_pi.cov.copy()
    flags = np.array([False, True, False])
    state = update_uncertainty(state, rng.normal(size=3), rng.normal(size=3), flags)
    assert state.omega_pi.cov[1, 1] == before[1, 1]
    assert state.omega_pi.count[1] == 5


def test_diagonal_uncertainty_drops_covariances(rng):
    state = UncertaintyState.create(3, lam_s=0.9, lam_a=0.8, diagonal=True)
    full = UncertaintyState.create(3, lam_s=0.9, lam_a=0.8, diagonal=False)
    for _ in range(10):
        e_pi, e_mu = rng.normal(size=3), rng.normal(size=3)
        state = update_uncertainty(state, e_pi, e_mu, np.zeros(3, dtype=bool))
        full = update_uncertainty(full, e_pi, e_mu, np.zeros(3, dtype=bool))
    off = ~np.eye(3, dtype=bool)
    assert np.all(state.omega_mu.cov[off] == 0.0)
    assert np.any(full.omega_mu.cov[off] != 0.0)


# ============================================================================
# COVARIANCE STACK
# ============================================================================

def test_conditional_covariance():
    B = np.array([[1.0, 0.5], [0.8, -0.2], [1.1, 0.0]])
    sigma_f = np.array([[4e-4, 1e-5], [1e-5, 2e-4]])
    eps = np.array([1e-3, 2e-3, 3e-3])
    sigma = conditional_covariance(B, sigma_f, eps)
    np.testing.assert_allclose(sigma, B @ sigma_f @ B.T + np.diag(eps))
    with pytest.raises(DataError):
        conditional_covariance(B, sigma_f, eps[:2])


def test_shrinkage_extremes(rng):
    sigma = _spd(rng, 5)
    np.testing.assert_allclose(shrink_covariance(sigma, 0.0), sigma)
    np.testing.assert_allclose(shrink_covariance(sigma, 1.0), np.mean(np.diag(sigma)) * np.eye(5))
    with pytest.raises(DataError):
        shrink_covariance(sigma, 1.5)


def test_constant_correlation_target(rng):
    sigma = _spd(rng, 4)
    target = shrinkage_target(sigma, "constant_correlation")
    np.testing.assert_allclose(np.diag(target), np.diag(sigma))
    sd = np.sqrt(np.diag(sigma))
    corr = target / np.outer(sd, sd)
    off = corr[~np.eye(4, dtype=bool)]
    np.testing.assert_allclose(off, off[0])
    full_corr = sigma / np.outer(sd, sd)
    assert off[0] == pytest.approx(full_corr[~np.eye(4, dtype=bool)].mean())


def test_shrunk_covariance_is_positive_definite():
    singular = np.ones((3, 3))
    shrunk = shrink_covariance(singular, 0.0)
    assert np.linalg.eigvalsh(shrunk)[0] > 0


def test_stack_adds_uncertainty(rng):
    sigma, omega_pi, omega_bl = _spd(rng, 3), 0.01 * np.eye(3), 0.02 * np.eye(3)
    stack = build_covariance_stack(sigma, omega_pi, omega_bl, kappa_s=0.5, kappa_a=1.0)
    np.testing.assert_allclose(stack.sigma_strategic, shrink_covariance(sigma, 0.5) + omega_pi)
    np.testing.assert_allclose(stack.sigma_active, np.mean(np.diag(sigma)) * np.eye(3) + omega_bl)


def test_nearest_psd_clips_negative_eigenvalues():
    a = np.array([[1.0, 2.0], [2.0, 1.0]])
    fixed = nearest_psd(a)
    assert np.linalg.eigvalsh(fixed)[0] >= -1e-12
    np.testing.assert_allclose(fixed, fixed.T)
