"""
Conditional factor pricing and characteristic return models.

The systematic model regresses each asset's excess return on the factor
returns with a robust adaptive filter; its coefficient vector is laid out as
[a0, b0 (P), b1 (P×M, factor-major), b2 (P×K)], giving conditional betas
β_i = b0 + b1·θ_i + b2·z. The intercept a0 is the asset's time-varying alpha
and is not part of the systematic forecast π.

The active model forecasts returns from characteristic exposures with payoffs
estimated either per period (cross-sectional least squares, smoothed by an
EWMA) or pooled across periods (recursive least squares with forgetting).
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..errors import LookAheadError, NotInitializedError
from .active_models import ACTIVE_MODELS, model_characteristics
from .filters import (
    EwmaCovState,
    EwmaMeanState,
    RlsState,
    cross_sectional_regress,
    ewma_cov_update,
    ewma_update,
    rlma_update_many,
    rls_update,
)

logger = logging.getLogger(__name__)

PRECOND_FLOOR = 1e-10


# ============================================================================
# SYSTEMATIC (FACTOR) MODEL
# ============================================================================

@dataclass
class FactorModelState:
    """
    Per-asset robust beta filters plus factor premia and covariance.

    Attributes:
        coef: N×d filter coefficients
        resid_scale: Length-N EWMA of |residual|
        n_updates: Length-N update counts
        idio_var: Length-N EWMA of squared residuals (diagonal of Σ_ε)
        premia: EWMA of factor returns (λ_s)
        factor_cov: EWMA covariance of factor returns Σ_f (λ_s)
        feature_power: EWMA of mean squared features, used to precondition the step
        P, M, K: Factor, interaction-characteristic and macro counts
        interactions: Whether f⊗θ and f⊗z terms are present
        lam: Strategic memory λ_s
        step, huber_c, scale_memory: RLMA settings
    """
    coef: np.ndarray
    resid_scale: np.ndarray
    n_updates: np.ndarray
    idio_var: np.ndarray
    premia: EwmaMeanState
    factor_cov: EwmaCovState
    feature_power: EwmaMeanState
    P: int
    M: int = 0
    K: int = 0
    interactions: bool = False
    lam: float = 0.99
    step: float = 0.05
    huber_c: float = 2.0
    scale_memory: float = 0.95

    @classmethod
    def create(
        cls,
        n_assets: int,
        n_factors: int,
        lam: float,
        n_chars: int = 0,
        n_macro: int = 0,
        interactions: bool = False,
        step: float = 0.05,
        huber_c: float = 2.0,
        scale_memory: float = 0.95,
        cov_ridge: float = 1e-6,
    ) -> "FactorModelState":
        M = n_chars if interactions else 0
        K = n_macro if interactions else 0
        d = 1 + n_factors * (1 + M + K)
        return cls(
            coef=np.zeros((n_assets, d)),
            resid_scale=np.zeros(n_assets),
            n_updates=np.zeros(n_assets, dtype=int),
            idio_var=np.zeros(n_assets),
            premia=EwmaMeanState.create(n_factors, lam),
            factor_cov=EwmaCovState.create(n_factors, lam, cov_ridge),
            feature_power=EwmaMeanState.create(d, lam),
            P=n_factors, M=M, K=K, interactions=interactions,
            lam=lam, step=step, huber_c=huber_c, scale_memory=scale_memory,
        )

    @property
    def initialized(self) -> bool:
        return self.premia.initialized

    @property
    def B(self) -> np.ndarray:
        """N×P unconditional part of the betas (b0)."""
        return self.coef[:, 1:1 + self.P]

    @property
    def alpha(self) -> np.ndarray:
        """Length-N filter intercepts a0."""
        return self.coef[:, 0]


def _features(state: FactorModelState, f: np.ndarray, chars: Optional[np.ndarray], macro: Optional[np.ndarray], n: int) -> np.ndarray:
    """N×d regressors [1, f, f⊗θ_i, f⊗z]."""
    parts = [np.ones((n, 1)), np.tile(f, (n, 1))]
    if macro is None:
        macro = np.zeros(state.K)
    if state.interactions:
        if state.M:
            parts.append((f[None, :, None] * chars[:, None, :]).reshape(n, -1))
        if state.K:
            parts.append(np.tile(np.outer(f, macro).reshape(-1), (n, 1)))
    return np.hstack(parts)


def betas(state: FactorModelState, chars_t: Optional[np.ndarray] = None, macro_t: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Conditional betas β_{i,p} = b0_{i,p} + Σ_m b1_{i,p,m}·θ_{i,m} + Σ_k b2_{i,p,k}·z_k.

    Args:
        state: Factor model state
        chars_t: N×M exposures (required when interactions use characteristics)
        macro_t: Length-K information variables

    Returns:
        N×P betas (rows with missing exposures fall back to b0)
    """
    P, M, K = state.P, state.M, state.K
    beta = state.B.copy()
    if state.interactions and M:
        b1 = state.coef[:, 1 + P:1 + P + P * M].reshape(-1, P, M)
        theta = np.nan_to_num(np.asarray(chars_t, dtype=float), nan=0.0)
        beta += np.einsum("ipm,im->ip", b1, theta)
    if state.interactions and K:
        start = 1 + P + P * M
        b2 = state.coef[:, start:start + P * K].reshape(-1, P, K)
        z = np.zeros(K) if macro_t is None else np.asarray(macro_t, dtype=float)
        beta += np.einsum("ipk,k->ip", b2, z)
    return beta


def update_factor_model(
    state: FactorModelState,
    factor_returns_t,
    excess_returns_t,
    macro_t=None,
    chars_t=None,
    mask=None,
) -> FactorModelState:
    """
    Feed one period of realised returns into the factor model.

    Each unmasked asset gets one RLMA step on [1, f, f⊗θ, f⊗z] with target r^e;
    idiosyncratic variances, premia and Σ_f are updated by EWMA on the same period.

    Args:
        state: Current state
        factor_returns_t: Length-P realised factor returns
        excess_returns_t: Length-N realised excess returns
        macro_t: Length-K information variables known before the period
        chars_t: N×M exposures known before the period (interaction terms)
        mask: Length-N booleans, True = asset may be updated

    Returns:
        New state; the input state when the factor return is undefined
    """
    f = np.asarray(factor_returns_t, dtype=float)
    if not np.all(np.isfinite(f)):
        logger.debug("Factor return undefined; factor model frozen")
        return state
    n = state.coef.shape[0]
    mask = np.ones(n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool).copy()
    if state.interactions and state.M:
        mask &= np.all(np.isfinite(chars_t), axis=1)
    r = np.where(mask, excess_returns_t, 0.0)

    phi = _features(state, f, chars_t, macro_t, n)
    if mask.any():
        power = ewma_update(state.feature_power, np.mean(phi[mask] ** 2, axis=0))
    else:
        power = state.feature_power
    precond = np.maximum(power.mean, PRECOND_FLOOR) if power.initialized else None

    coef, scale, counts, resid = rlma_update_many(
        state.coef, state.resid_scale, state.n_updates, phi, r, mask,
        state.step, state.huber_c, state.scale_memory, precond=precond,
    )
    idio = state.idio_var.copy()
    first = mask & (state.n_updates == 0)
    later = mask & (state.n_updates > 0)
    idio[first] = resid[first] ** 2
    idio[later] = state.lam * idio[later] + (1.0 - state.lam) * resid[later] ** 2

    return replace(
        state,
        coef=coef, resid_scale=scale, n_updates=counts, idio_var=idio,
        premia=ewma_update(state.premia, f),
        factor_cov=ewma_cov_update(state.factor_cov, f),
        feature_power=power,
    )


def forecast_systematic(state: FactorModelState, chars_t=None, macro_t=None, mask=None) -> np.ndarray:
    """
    Systematic expected excess returns π_i = β_i · Ê[f].

    The filter intercepts (asset alphas) are excluded.

    Returns:
        Length-N vector, NaN outside mask

    Raises:
        NotInitializedError: premia never updated
    """
    if not state.initialized:
        raise NotInitializedError("factor model has no premia estimate yet")
    pi = betas(state, chars_t, macro_t) @ state.premia.mean
    if mask is not None:
        pi = np.where(mask, pi, np.nan)
    return pi


# ============================================================================
# ACTIVE (CHARACTERISTIC) MODEL
# ============================================================================

@dataclass
class CharModelState:
    """
    Characteristic payoff model.

    Attributes:
        model_id: Key into ACTIVE_MODELS
        payoff_ewma: EWMA (λ_a) of payoffs δ (intercept first, length M+1)
        last_exposures: N×(M+1) design [1, θ] from the previous period
        last_mask: Rows of last_exposures that may be used
        rls: Pooled RLS state for the 'pooled_rls' estimator
    """
    model_id: str
    payoff_ewma: EwmaMeanState
    last_exposures: Optional[np.ndarray] = None
    last_mask: Optional[np.ndarray] = None
    rls: Optional[RlsState] = None
    n_regressions: int = 0

    @classmethod
    def create(cls, model_id: str, lam: float, ridge: float = 1e-4) -> "CharModelState":
        M = len(model_characteristics(model_id))
        rls = None
        if ACTIVE_MODELS[model_id]['estimator'] == 'pooled_rls':
            rls = RlsState.create(M + 1, lam=lam, ridge=ridge)
        return cls(model_id=model_id, payoff_ewma=EwmaMeanState.create(M + 1, lam), rls=rls)

    @property
    def characteristics(self) -> tuple:
        return model_characteristics(self.model_id)

    @property
    def initialized(self) -> bool:
        return self.payoff_ewma.initialized


def update_characteristic_model(state: CharModelState, exposures_t, excess_returns_t, mask_t) -> CharModelState:
    """
    Regress this period's excess returns on last period's exposures, then
    store this period's exposures for the next call.

    Args:
        state: Current state
        exposures_t: N×M exposures observed at the end of this period
        excess_returns_t: Length-N realised excess returns of this period
        mask_t: Length-N rows with an available return this period

    Returns:
        New state
    """
    exposures_t = np.asarray(exposures_t, dtype=float)
    design_t = np.column_stack([np.ones(len(exposures_t)), exposures_t])
    rows_t = np.all(np.isfinite(design_t), axis=1)
    payoff = state.payoff_ewma
    rls = state.rls
    count = state.n_regressions

    if state.last_exposures is not None:
        mask = state.last_mask & np.asarray(mask_t, dtype=bool)
        if rls is None:
            delta = cross_sectional_regress(state.last_exposures[:, 1:], excess_returns_t, mask)
            if delta is not None:
                payoff = ewma_update(payoff, delta)
                count += 1
        else:
            rows = np.flatnonzero(mask)
            if len(rows) >= design_t.shape[1] + 1:
                lam_row = rls.lam ** (1.0 / len(rows))
                for i in rows:
                    rls, _ = rls_update(rls, state.last_exposures[i], excess_returns_t[i], lam=lam_row)
                payoff = replace(payoff, mean=rls.coef.copy(), initialized=True)
                count += 1

    return replace(
        state, payoff_ewma=payoff, rls=rls, n_regressions=count,
        last_exposures=design_t, last_mask=rows_t,
    )


def forecast_characteristic(state: CharModelState, exposures_t, mask=None) -> np.ndarray:
    """
    Characteristic-model forecasts μ_i = [1, θ_i] · smoothed payoffs.

    Returns:
        Length-N vector, NaN outside mask

    Raises:
        NotInitializedError: no payoff estimate yet
    """
    if not state.initialized:
        raise NotInitializedError(f"active model {state.model_id!r} has no payoff estimate yet")
    exposures_t = np.asarray(exposures_t, dtype=float)
    mu = state.payoff_ewma.mean[0] + exposures_t @ state.payoff_ewma.mean[1:]
    if mask is not None:
        mu = np.where(mask, mu, np.nan)
    return mu


# ============================================================================
# FORECASTS & ERRORS
# ============================================================================

@dataclass
class ReturnForecast:
    """
    Forecasts issued at the end of period t for period t+1.

    Attributes:
        pi: Systematic forecasts π
        mu: Characteristic forecasts μ
        t: Issue period
        mask: Assets the forecast covers
    """
    pi: np.ndarray
    mu: np.ndarray
    t: int
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.mask is None:
            self.mask = np.isfinite(self.pi) & np.isfinite(self.mu)

    @property
    def alpha(self) -> np.ndarray:
        """α = μ − π."""
        return self.mu - self.pi


def record_forecast_errors(forecast: ReturnForecast, realized, mask, period: int):
    """
    Forecast errors against realised excess returns.

    Args:
        forecast: Forecast issued at period−1
        realized: Length-N realised excess returns at `period`
        mask: Length-N assets with an available return
        period: Period of the realisation

    Returns:
        (e_pi, e_mu, flags); flagged entries are 0 and must be skipped

    Raises:
        LookAheadError: forecast.t + 1 != period
    """
    if forecast.t + 1 != period:
        raise LookAheadError(f"forecast issued at {forecast.t} scored against period {period}")
    valid = np.asarray(mask, dtype=bool) & forecast.mask
    r = np.where(valid, realized, 0.0)
    e_pi = np.where(valid, r - np.where(valid, forecast.pi, 0.0), 0.0)
    e_mu = np.where(valid, r - np.where(valid, forecast.mu, 0.0), 0.0)
    return e_pi, e_mu, ~valid
