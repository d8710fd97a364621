"""
Online estimators used in place of batch regressions.

- EWMA mean and covariance (with per-coordinate freezing)
- Recursive least squares with exponential forgetting
- Robust least-M adaptive (RLMA) filter: normalised gradient step with
  Huber-style clipping of the residual at c × (EWMA of |residual|)
- Per-period cross-sectional least squares

States are small value objects; each update returns a new state and keeps no
history.
"""

import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ..errors import FilterStateError

logger = logging.getLogger(__name__)

SCALE_FLOOR = 1e-12


def _check_finite(name: str, *arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise FilterStateError(f"{name}: non-finite input")


# ============================================================================
# EWMA
# ============================================================================

@dataclass
class EwmaMeanState:
    """
    Exponentially weighted mean.

    Attributes:
        mean: Length-d estimate
        lam: Memory factor λ ∈ [0,1)
        initialized: False until the first update
    """
    mean: np.ndarray
    lam: float
    initialized: bool = False

    @classmethod
    def create(cls, d: int, lam: float) -> "EwmaMeanState":
        return cls(mean=np.zeros(d), lam=lam)


def ewma_update(state: EwmaMeanState, x) -> EwmaMeanState:
    """
    One EWMA step: mean' = λ·mean + (1−λ)·x; the first call sets mean' = x.

    Raises:
        FilterStateError: non-finite x
    """
    x = np.asarray(x, dtype=float)
    _check_finite("ewma_update", x)
    if not state.initialized:
        return replace(state, mean=x.copy(), initialized=True)
    return replace(state, mean=state.lam * state.mean + (1.0 - state.lam) * x)


@dataclass
class EwmaCovState:
    """
    Exponentially weighted mean and covariance.

    Attributes:
        mean: Length-d mean
        cov: d×d covariance (starts at ridge·I)
        lam: Memory factor
        ridge: Initial diagonal
        count: Per-coordinate number of updates
    """
    mean: np.ndarray
    cov: np.ndarray
    lam: float
    ridge: float = 1e-6
    count: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.count is None:
            self.count = np.zeros(len(self.mean), dtype=int)

    @classmethod
    def create(cls, d: int, lam: float, ridge: float = 1e-6) -> "EwmaCovState":
        return cls(mean=np.zeros(d), cov=ridge * np.eye(d), lam=lam, ridge=ridge)

    @property
    def initialized(self) -> bool:
        return bool(len(self.count)) and bool(np.all(self.count > 0))


def ewma_cov_update_masked(state: EwmaCovState, x, mask) -> EwmaCovState:
    """
    EWMA covariance step restricted to coordinates where mask is True.

    Rows and columns of masked-out coordinates are left exactly as they were.
    A coordinate's first update only sets its mean.

    Args:
        state: Current state
        x: Length-d observation (values outside mask are ignored)
        mask: Length-d booleans, True = update

    Returns:
        New EwmaCovState
    """
    mask = np.asarray(mask, dtype=bool)
    idx = np.flatnonzero(mask)
    x = np.asarray(x, dtype=float)
    _check_finite("ewma_cov_update", x[idx])

    mean = state.mean.copy()
    cov = state.cov.copy()
    count = state.count.copy()

    fresh = idx[count[idx] == 0]
    seen = idx[count[idx] > 0]
    mean[fresh] = x[fresh]
    if len(seen):
        lam = state.lam
        mean[seen] = lam * mean[seen] + (1.0 - lam) * x[seen]
        d = x[seen] - mean[seen]
        block = np.ix_(seen, seen)
        updated = lam * cov[block] + (1.0 - lam) * np.outer(d, d)
        cov[block] = 0.5 * (updated + updated.T)
    count[idx] += 1
    return replace(state, mean=mean, cov=cov, count=count)


def ewma_cov_update(state: EwmaCovState, x) -> EwmaCovState:
    """
    EWMA covariance step.

    mean' = λ·mean + (1−λ)·x and cov' = λ·cov + (1−λ)·(x−mean')(x−mean')ᵀ;
    the first call sets mean' = x and cov' = ridge·I.

    Raises:
        FilterStateError: non-finite x
    """
    x = np.asarray(x, dtype=float)
    _check_finite("ewma_cov_update", x)
    if not state.initialized:
        d = len(x)
        return replace(state, mean=x.copy(), cov=state.ridge * np.eye(d), count=state.count + 1)
    return ewma_cov_update_masked(state, x, np.ones(len(x), dtype=bool))


# ============================================================================
# RECURSIVE LEAST SQUARES
# ============================================================================

@dataclass
class RlsState:
    """
    Exponentially weighted recursive least squares.

    Attributes:
        coef: Length-d coefficients (start at 0)
        precision_proxy: d×d inverse-Gram recursion state P (starts at I/ridge)
        lam: Forgetting factor λ ∈ (0,1]
        ridge: Initialisation scale
        n_updates: Number of updates applied
    """
    coef: np.ndarray
    precision_proxy: np.ndarray
    lam: float = 1.0
    ridge: float = 1e-4
    n_updates: int = 0

    @classmethod
    def create(cls, d: int, lam: float = 1.0, ridge: float = 1e-4) -> "RlsState":
        return cls(coef=np.zeros(d), precision_proxy=np.eye(d) / ridge, lam=lam, ridge=ridge)


def rls_update(state: RlsState, features, target: float, lam: Optional[float] = None):
    """
    One RLS step.

    k = Pφ / (λ + φᵀPφ); coef' = coef + k·(y − φᵀcoef); P' = (P − kφᵀP)/λ.

    Args:
        state: Current state
        features: Length-d regressor φ
        target: Scalar y
        lam: Optional forgetting factor overriding state.lam for this step

    Returns:
        (new state, pre-update residual)

    Raises:
        FilterStateError: non-finite input or non-positive gain denominator
    """
    phi = np.asarray(features, dtype=float)
    _check_finite("rls_update", phi, target)
    lam = state.lam if lam is None else lam
    P = state.precision_proxy
    P_phi = P @ phi
    denom = lam + phi @ P_phi
    if not np.isfinite(denom) or denom <= 1e-300:
        raise FilterStateError(f"rls_update: gain denominator {denom!r} not positive; state corrupted")
    gain = P_phi / denom
    resid = float(target - phi @ state.coef)
    coef = state.coef + gain * resid
    P_new = (P - np.outer(gain, P_phi)) / lam
    P_new = 0.5 * (P_new + P_new.T)
    return replace(state, coef=coef, precision_proxy=P_new, n_updates=state.n_updates + 1), resid


# ============================================================================
# ROBUST LEAST-M ADAPTIVE FILTER
# ============================================================================

@dataclass
class RlmaState:
    """
    Robust adaptive filter for one asset's alpha and beta terms.

    Attributes:
        coef: Length-d coefficients
        step: Learning rate of the normalised gradient step
        huber_c: Clipping threshold in units of resid_scale
        resid_scale: EWMA of |residual| (0 before the first update)
        scale_memory: Memory of the resid_scale EWMA
        eps: Regulariser of the step normalisation
        n_updates: Number of updates applied
    """
    coef: np.ndarray
    step: float = 0.05
    huber_c: float = 2.0
    resid_scale: float = 0.0
    scale_memory: float = 0.95
    eps: float = 1e-8
    n_updates: int = 0

    @classmethod
    def create(cls, d: int, step: float = 0.05, huber_c: float = 2.0, scale_memory: float = 0.95) -> "RlmaState":
        return cls(coef=np.zeros(d), step=step, huber_c=huber_c, scale_memory=scale_memory)


def rlma_update(state: RlmaState, features, target: float, precond=None):
    """
    One RLMA step.

    e = y − φᵀcoef; ψ = clip(e, ±c·scale) (no clipping before the first update);
    coef' = coef + step·ψ·D⁻¹φ / (ε + φᵀD⁻¹φ); scale' = EWMA of |e|.
    D is an optional positive per-feature preconditioner (identity by default).

    Returns:
        (new state, pre-update residual)
    """
    phi = np.asarray(features, dtype=float)
    _check_finite("rlma_update", phi, target)
    scaled = phi if precond is None else phi / np.asarray(precond, dtype=float)
    resid = float(target - phi @ state.coef)
    if state.n_updates > 0:
        bound = state.huber_c * state.resid_scale
        psi = min(max(resid, -bound), bound)
    else:
        psi = resid
    coef = state.coef + state.step * psi * scaled / (state.eps + phi @ scaled)
    if state.n_updates > 0:
        scale = state.scale_memory * state.resid_scale + (1.0 - state.scale_memory) * abs(resid)
    else:
        scale = abs(resid)
    return replace(state, coef=coef, resid_scale=max(scale, SCALE_FLOOR), n_updates=state.n_updates + 1), resid


def rlma_update_many(
    coef: np.ndarray,
    resid_scale: np.ndarray,
    n_updates: np.ndarray,
    features: np.ndarray,
    targets: np.ndarray,
    mask: np.ndarray,
    step: float,
    huber_c: float,
    scale_memory: float,
    precond=None,
    eps: float = 1e-8,
):
    """
    Bank form of rlma_update for N assets at once.

    Args:
        coef: N×d coefficients
        resid_scale: Length-N residual scales
        n_updates: Length-N update counts
        features: N×d regressors
        targets: Length-N targets
        mask: Length-N booleans; False rows are left unchanged
        step, huber_c, scale_memory, eps: Filter settings
        precond: Optional length-d positive preconditioner

    Returns:
        (coef, resid_scale, n_updates, residuals) with NaN residuals on masked rows
    """
    coef = coef.copy()
    resid_scale = resid_scale.copy()
    n_updates = n_updates.copy()
    residuals = np.full(len(targets), np.nan)
    rows = np.flatnonzero(mask)
    if len(rows) == 0:
        return coef, resid_scale, n_updates, residuals

    phi = features[rows]
    y = targets[rows]
    _check_finite("rlma_update_many", phi, y)
    scaled = phi if precond is None else phi / np.asarray(precond, dtype=float)
    e = y - np.einsum("ij,ij->i", phi, coef[rows])
    started = n_updates[rows] > 0
    bound = huber_c * resid_scale[rows]
    psi = np.where(started, np.clip(e, -bound, bound), e)
    norm = eps + np.einsum("ij,ij->i", phi, scaled)
    coef[rows] = coef[rows] + step * (psi / norm)[:, None] * scaled
    scale = np.where(started, scale_memory * resid_scale[rows] + (1.0 - scale_memory) * np.abs(e), np.abs(e))
    resid_scale[rows] = np.maximum(scale, SCALE_FLOOR)
    n_updates[rows] += 1
    residuals[rows] = e
    return coef, resid_scale, n_updates, residuals


# ============================================================================
# CROSS-SECTIONAL REGRESSION
# ============================================================================

def cross_sectional_regress(characteristics, targets, mask) -> Optional[np.ndarray]:
    """
    Least squares of targets on [1, characteristics] over unmasked rows.

    Rank-deficient designs get the minimum-norm solution.

    Args:
        characteristics: N×M exposures
        targets: Length-N targets
        mask: Length-N booleans, True = use row

    Returns:
        Length-(M+1) payoffs (intercept first), or None with fewer than M+2 usable rows
    """
    X = np.asarray(characteristics, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(targets, dtype=float)
    rows = np.flatnonzero(np.asarray(mask, dtype=bool))
    rows = rows[np.all(np.isfinite(X[rows]), axis=1) & np.isfinite(y[rows])]
    M = X.shape[1]
    if len(rows) < M + 2:
        logger.debug("cross_sectional_regress: %d usable rows, need %d", len(rows), M + 2)
        return None
    design = np.column_stack([np.ones(len(rows)), X[rows]])
    payoffs, *_ = np.linalg.lstsq(design, y[rows], rcond=None)
    return payoffs
