"""
Blending of systematic and active forecasts, and the covariance stack.

The mixed estimate is the precision-weighted average of π and μ:
    μ_bl = [Ω_π⁻¹ + Ω_μ⁻¹]⁻¹ [Ω_π⁻¹π + Ω_μ⁻¹μ] = π + Ψ(μ − π)
with Ψ = [Ω_π⁻¹ + Ω_μ⁻¹]⁻¹ Ω_μ⁻¹ = Ω_π (Ω_π + Ω_μ)⁻¹. All inverses are
Cholesky solves on ridged matrices.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from ..errors import DataError, SingularMatrixError
from .filters import EwmaCovState, ewma_cov_update_masked

logger = logging.getLogger(__name__)


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def nearest_psd(a: np.ndarray) -> np.ndarray:
    """Clip negative eigenvalues of a symmetric matrix to zero."""
    vals, vecs = np.linalg.eigh(_sym(a))
    if vals.min() >= 0:
        return _sym(a)
    return _sym((vecs * np.maximum(vals, 0.0)) @ vecs.T)


# ============================================================================
# FORECAST UNCERTAINTY
# ============================================================================

@dataclass
class UncertaintyState:
    """
    EWMA covariances of the two forecast-error streams.

    Attributes:
        omega_pi: Ω_π over e_π (memory λ_s)
        omega_mu: Ω_μ over e_μ (memory λ_a)
        diagonal: Keep only the diagonals
    """
    omega_pi: EwmaCovState
    omega_mu: EwmaCovState
    diagonal: bool = True

    @classmethod
    def create(cls, n_assets: int, lam_s: float, lam_a: float, ridge: float = 1e-6, diagonal: bool = True) -> "UncertaintyState":
        return cls(
            omega_pi=EwmaCovState.create(n_assets, lam_s, ridge),
            omega_mu=EwmaCovState.create(n_assets, lam_a, ridge),
            diagonal=diagonal,
        )


def update_uncertainty(state: UncertaintyState, e_pi, e_mu, flags) -> UncertaintyState:
    """
    Update Ω_π and Ω_μ with this period's forecast errors.

    Flagged assets keep their rows and columns unchanged.

    Args:
        state: Current state
        e_pi: Length-N systematic forecast errors
        e_mu: Length-N characteristic forecast errors
        flags: Length-N booleans from record_forecast_errors (True = skip)

    Returns:
        New state
    """
    use = ~np.asarray(flags, dtype=bool)
    omega_pi = ewma_cov_update_masked(state.omega_pi, e_pi, use)
    omega_mu = ewma_cov_update_masked(state.omega_mu, e_mu, use)
    if state.diagonal:
        omega_pi.cov = np.diag(np.diag(omega_pi.cov))
        omega_mu.cov = np.diag(np.diag(omega_mu.cov))
    return replace(state, omega_pi=omega_pi, omega_mu=omega_mu)


# ============================================================================
# MIXED ESTIMATE
# ============================================================================

@dataclass
class BlendedForecast:
    """
    Attributes:
        mu_bl: Blended expected excess returns
        psi: N×N confidence matrix Ψ
        alpha_bl: Shrunk alphas Ψ(μ − π)
        omega_bl: Uncertainty of the blend [Ω_π⁻¹ + Ω_μ⁻¹]⁻¹
    """
    mu_bl: np.ndarray
    psi: np.ndarray
    alpha_bl: np.ndarray
    omega_bl: np.ndarray


def mixed_estimate(pi, mu, omega_pi, omega_mu, ridge: float = 1e-10) -> BlendedForecast:
    """
    Precision-weighted blend of π and μ.

    Args:
        pi: Length-N systematic forecasts
        mu: Length-N characteristic forecasts
        omega_pi: N×N uncertainty of π
        omega_mu: N×N uncertainty of μ
        ridge: Added to both diagonals before factorising

    Returns:
        BlendedForecast with mu_bl = pi + alpha_bl

    Raises:
        SingularMatrixError: Ω_π + Ω_μ not positive definite after ridging
    """
    pi = np.asarray(pi, dtype=float)
    mu = np.asarray(mu, dtype=float)
    n = len(pi)
    eye = np.eye(n)
    A = _sym(np.asarray(omega_pi, dtype=float)) + ridge * eye
    B = _sym(np.asarray(omega_mu, dtype=float)) + ridge * eye
    S = A + B
    try:
        factor = cho_factor(S)
    except LinAlgError:
        raise SingularMatrixError("Ω_π + Ω_μ is not positive definite", np.linalg.cond(S)) from None

    psi = cho_solve(factor, A).T
    alpha_bl = A @ cho_solve(factor, mu - pi)
    omega_bl = _sym(psi @ B)
    return BlendedForecast(mu_bl=pi + alpha_bl, psi=psi, alpha_bl=alpha_bl, omega_bl=omega_bl)


# ============================================================================
# COVARIANCE STACK
# ============================================================================

@dataclass
class CovarianceStack:
    """
    Attributes:
        sigma_cond: Conditional covariance Σ_|π
        sigma_target: Shrinkage target Σ*
        sigma_strategic: Shrunk (κ_s) covariance plus Ω_π, used for the GMV and systematic legs
        sigma_active: Shrunk (κ_a) covariance plus Ω_bl, used for the active leg
        kappa_s, kappa_a: Shrinkage intensities
    """
    sigma_cond: np.ndarray
    sigma_target: np.ndarray
    sigma_strategic: np.ndarray
    sigma_active: np.ndarray
    kappa_s: float
    kappa_a: float


def conditional_covariance(B, sigma_f, sigma_eps_diag) -> np.ndarray:
    """
    Σ_|π = B Σ_f Bᵀ + diag(σ²_ε).

    Args:
        B: N×P betas
        sigma_f: P×P factor covariance
        sigma_eps_diag: Length-N idiosyncratic variances

    Returns:
        N×N symmetric matrix
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    sigma_f = np.atleast_2d(np.asarray(sigma_f, dtype=float))
    eps = np.asarray(sigma_eps_diag, dtype=float)
    if sigma_f.shape != (B.shape[1], B.shape[1]) or eps.shape != (B.shape[0],):
        raise DataError(f"dimension mismatch: B {B.shape}, Σ_f {sigma_f.shape}, Σ_ε {eps.shape}")
    return _sym(B @ sigma_f @ B.T + np.diag(eps))


def shrinkage_target(sigma: np.ndarray, target: str = "identity") -> np.ndarray:
    """
    Structured target Σ*.

    'identity' is mean(diag Σ)·I; 'constant_correlation' keeps the variances and
    replaces every correlation by the average off-diagonal correlation.
    """
    n = sigma.shape[0]
    var = np.diag(sigma)
    if target == "identity" or n == 1:
        return np.mean(var) * np.eye(n)
    if target == "constant_correlation":
        sd = np.sqrt(np.maximum(var, 0.0))
        outer = np.outer(sd, sd)
        with np.errstate(invalid="ignore", divide="ignore"):
            corr = np.where(outer > 0, sigma / outer, 0.0)
        rbar = (corr.sum() - np.trace(corr)) / (n * (n - 1))
        out = rbar * outer
        np.fill_diagonal(out, var)
        return out
    raise DataError(f"unknown shrinkage target {target!r}")


def shrink_covariance(sigma, kappa: float, target: str = "identity", floor_scale: float = 1e-8) -> np.ndarray:
    """
    Σ_t = κ·Σ* + (1−κ)·Σ, then ridged so the smallest eigenvalue is at least
    floor_scale·trace(Σ_t)/N.

    Args:
        sigma: N×N covariance
        kappa: Shrinkage intensity κ ∈ [0,1]
        target: 'identity' or 'constant_correlation'
        floor_scale: Relative eigenvalue floor

    Returns:
        N×N symmetric positive definite matrix
    """
    if not 0 <= kappa <= 1:
        raise DataError(f"kappa must be in [0, 1], got {kappa}")
    sigma = _sym(np.asarray(sigma, dtype=float))
    shrunk = _sym(kappa * shrinkage_target(sigma, target) + (1.0 - kappa) * sigma)
    n = shrunk.shape[0]
    floor = floor_scale * max(np.trace(shrunk), 0.0) / n
    floor = max(floor, 1e-300)
    low = np.linalg.eigvalsh(shrunk)[0]
    if low < floor:
        shrunk = shrunk + (floor - low) * np.eye(n)
    return shrunk


def adjust_for_uncertainty(sigma, omega) -> np.ndarray:
    """Σ + Ω."""
    return _sym(np.asarray(sigma, dtype=float) + np.asarray(omega, dtype=float))


def build_covariance_stack(
    sigma_cond,
    omega_pi,
    omega_bl,
    kappa_s: float,
    kappa_a: float,
    target: str = "identity",
) -> CovarianceStack:
    """
    Strategic and active covariances from one conditional covariance.

    Returns:
        CovarianceStack
    """
    sigma_cond = _sym(np.asarray(sigma_cond, dtype=float))
    return CovarianceStack(
        sigma_cond=sigma_cond,
        sigma_target=shrinkage_target(sigma_cond, target),
        sigma_strategic=adjust_for_uncertainty(shrink_covariance(sigma_cond, kappa_s, target), omega_pi),
        sigma_active=adjust_for_uncertainty(shrink_covariance(sigma_cond, kappa_a, target), omega_bl),
        kappa_s=kappa_s,
        kappa_a=kappa_a,
    )
