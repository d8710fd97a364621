"""
Strategy agents for the online backtest.

Every agent holds a weight vector over the panel's assets (the remainder is
cash earning the risk-free rate). Each period the model calls:
    step()    realise the period's return, update estimates, decide new weights
    advance() commit the new weights and measure turnover against drifted weights
"""

import logging
from typing import TYPE_CHECKING, Optional

import mesa
import numpy as np

from ..errors import ConfigError
from .active_models import model_characteristics
from .blend import (
    UncertaintyState,
    build_covariance_stack,
    conditional_covariance,
    mixed_estimate,
    nearest_psd,
    update_uncertainty,
)
from .data import characteristic_exposures, investible_universe
from .filters import EwmaCovState, ewma_cov_update_masked
from .hyperparams import HyperParams
from .portfolio import ConstraintSet, constrained_mv, decompose, gmv_weights
from .pricing import (
    CharModelState,
    FactorModelState,
    ReturnForecast,
    betas,
    forecast_characteristic,
    forecast_systematic,
    record_forecast_errors,
    update_characteristic_model,
    update_factor_model,
)

if TYPE_CHECKING:
    from .backtest import BacktestModel

logger = logging.getLogger(__name__)

# Floor on a period's total return; keeps the equity curve positive
WIPEOUT_FLOOR = -1.0 + 1e-6


class StrategyAgent(mesa.Agent):
    """
    Base agent with the shared holding-period accounting.

    Attributes:
        name (str): Strategy key ('algo', 'nd', 'cap', 'rfr')
        weights (np.ndarray): Asset weights held during the current period
        period (int | None): Last realised period
        period_return (float): Total return of the last realised period
        excess_return (float): period_return − rf
        turnover (float): Turnover of the rebalance into the last realised period
    """

    records_legs = False

    def __init__(self, model: 'BacktestModel', name: str):
        super().__init__(model)
        self.name = name
        n = model.panel.N

        self.weights = np.zeros(n)
        self.holding = False
        self.next_weights: Optional[np.ndarray] = None
        self.drifted = np.zeros(n)
        self.pending_turnover = 0.0
        self.next_legs = None
        self.legs = None

        # Reporter fields (NaN until the first realised period)
        self.period = None
        self.period_return = np.nan
        self.excess_return = np.nan
        self.turnover = np.nan

        # Per-period history
        self.history_periods = []
        self.history_returns = []
        self.history_excess = []
        self.history_turnover = []
        self.history_weights = []
        self.history_components = []
        self.warnings = []

    # ============================================================================
    # SIMULATION METHODS
    # ============================================================================

    def step(self):
        """Realise the period, update internal state, decide weights for the next period."""
        t = self.model.t
        if self.holding:
            self._realize(t)
        else:
            self.drifted = np.zeros_like(self.weights)
        self.update(t)
        if self.model.is_trade_date(t):
            self.next_weights = self.decide(t)

    def advance(self):
        """Commit the decided weights."""
        if self.next_weights is None:
            return
        self.pending_turnover = float(np.abs(self.next_weights - self.drifted).sum())
        self.weights = self.next_weights
        self.legs = self.next_legs
        self.next_weights = None
        self.next_legs = None
        self.holding = True

    def update(self, t: int):
        """Estimator updates with data of period t (none for benchmarks)."""

    def decide(self, t: int) -> np.ndarray:
        raise NotImplementedError

    # ============================================================================
    # ACCOUNTING
    # ============================================================================

    def _realize(self, t: int):
        panel = self.model.panel
        rf = panel.rf[t]
        avail = panel.available[t]
        r = np.where(avail, panel.returns[t], rf)
        w = self.weights
        cash = 1.0 - w.sum()
        total = float(w @ r + cash * rf)
        wiped_out = total < WIPEOUT_FLOOR
        if wiped_out:
            self._warn(t, f"period {t}: portfolio return {total:.4f} floored at {WIPEOUT_FLOOR:.6f}, "
                          "positions liquidated")
            total = WIPEOUT_FLOOR

        gone = (w != 0) & ~avail
        if gone.any():
            logger.debug("%s: %d held assets unavailable at %d, liquidated to cash", self.name, int(gone.sum()), t)

        self.drifted = np.zeros_like(w) if wiped_out else w * (1.0 + r) / (1.0 + total)
        self.period = t
        self.period_return = total
        self.excess_return = total - rf
        self.turnover = self.pending_turnover

        self.history_periods.append(t)
        self.history_returns.append(total)
        self.history_excess.append(total - rf)
        self.history_turnover.append(self.pending_turnover)
        self.history_weights.append(w.copy())
        if self.records_legs:
            legs = self.legs if self.legs is not None else (w, np.zeros_like(w), np.zeros_like(w))
            gmv, sys_leg, act_leg = legs
            self.history_components.append((
                float(gmv @ r + (1.0 - gmv.sum()) * rf),
                float(sys_leg @ r - sys_leg.sum() * rf),
                float(act_leg @ r - act_leg.sum() * rf),
            ))

    def _hold_survivors(self, t: int) -> np.ndarray:
        """Drifted weights on assets still available, renormalised; cash when none survive."""
        survivors = np.where(self.model.panel.available[t], self.drifted, 0.0)
        total = survivors.sum()
        message = f"period {t}: empty investible universe"
        if abs(total) > 1e-12:
            out = survivors / total
            message += ", holding surviving positions renormalised"
        else:
            out = np.zeros_like(survivors)
            message += ", holding cash"
        self._warn(t, message)
        self.next_legs = None
        return out

    def _warn(self, t: int, message: str):
        logger.warning("%s: %s", self.name, message)
        self.warnings.append({'period': t, 'strategy': self.name, 'message': message})


class BenchmarkAgent(StrategyAgent):
    """
    Naive diversification (nd), market-cap weighting (cap) or risk-free accrual (rfr).
    """

    KINDS = ('nd', 'cap', 'rfr')

    def __init__(self, model: 'BacktestModel', kind: str):
        kind = kind.lower()
        if kind not in self.KINDS:
            raise ConfigError(f"unknown benchmark {kind!r}; choose from {self.KINDS}", field='benchmarks')
        super().__init__(model, kind)

    def decide(self, t: int) -> np.ndarray:
        panel = self.model.panel
        w = np.zeros(panel.N)
        if self.name == 'rfr':
            return w
        universe = investible_universe(panel, t, self.model.universe_size)
        if len(universe) == 0:
            return self._hold_survivors(t)
        if self.name == 'nd':
            w[universe] = 1.0 / len(universe)
        else:
            mv = panel.char('MV')[t, universe]
            w[universe] = mv / mv.sum()
        return w


class AdaptiveStrategyAgent(StrategyAgent):
    """
    The online algorithm: factor and characteristic models, forecast blending,
    covariance stack and leverage-constrained decomposition.

    Attributes:
        hp (HyperParams): Configuration
        factor_model (FactorModelState): Systematic model
        char_model (CharModelState): Active model
        uncertainty (UncertaintyState): Ω_π and Ω_μ
        return_cov (EwmaCovState): Σ_u, the risk model when unconditional and the
            minimum-variance fallback before the factor model is initialised
        forecast (ReturnForecast | None): Last issued forecast
    """

    records_legs = True

    def __init__(self, model: 'BacktestModel', hp: HyperParams, name: str = 'algo'):
        super().__init__(model, name)
        self.hp = hp
        panel = model.panel
        self.char_names = model_characteristics(hp.active_model)
        self.constraints = ConstraintSet(max_leverage=hp.max_leverage)

        self.factor_model = FactorModelState.create(
            n_assets=panel.N,
            n_factors=model.factors.P,
            lam=hp.lambda_s,
            n_chars=len(self.char_names),
            n_macro=panel.K,
            interactions=hp.interactions,
            step=hp.rlma_step,
            huber_c=hp.huber_c,
            scale_memory=hp.resid_memory,
            cov_ridge=hp.cov_ridge,
        )
        self.char_model = CharModelState.create(hp.active_model, hp.lambda_a, hp.rls_ridge)
        self.uncertainty = UncertaintyState.create(panel.N, hp.lambda_s, hp.lambda_a, hp.cov_ridge, hp.diagonal_uncertainty)
        self.return_cov = EwmaCovState.create(panel.N, hp.lambda_s, hp.cov_ridge)

        self.forecast: Optional[ReturnForecast] = None
        self.prev_exposures: Optional[np.ndarray] = None
        self.exposures: Optional[np.ndarray] = None
        self.blend = None

    # ============================================================================
    # MODEL UPDATES
    # ============================================================================

    def update(self, t: int):
        """
        Feed period t into every estimator, then issue forecasts for t+1.
        """
        panel = self.model.panel
        avail = panel.available[t]
        excess = np.where(avail, panel.excess_returns[t], 0.0)

        # Forecast errors of the forecast issued at t−1
        if self.forecast is not None:
            e_pi, e_mu, flags = record_forecast_errors(self.forecast, excess, avail, t)
            self.uncertainty = update_uncertainty(self.uncertainty, e_pi, e_mu, flags)

        # Factor model on the period's factor returns
        macro_prev = panel.macro[t - 1] if (panel.K and t > 0) else None
        prev = self.prev_exposures
        if prev is None:
            prev = np.full((panel.N, len(self.char_names)), np.nan)
        self.factor_model = update_factor_model(
            self.factor_model,
            self.model.factors.factor_returns[t],
            excess,
            macro_t=macro_prev,
            chars_t=prev,
            mask=avail,
        )

        # Characteristic model: regress this period on last period's exposures
        self.exposures = characteristic_exposures(panel, t, self.char_names, avail)
        self.char_model = update_characteristic_model(self.char_model, self.exposures, excess, avail)
        self.prev_exposures = self.exposures

        self.return_cov = ewma_cov_update_masked(self.return_cov, excess, avail)

        self.forecast = self._issue_forecast(t)

    def _issue_forecast(self, t: int) -> Optional[ReturnForecast]:
        if not self.factor_model.initialized:
            return None
        panel = self.model.panel
        universe = investible_universe(panel, t, self.hp.universe_size)
        mask = np.zeros(panel.N, dtype=bool)
        mask[universe] = True
        macro_t = panel.macro[t] if panel.K else None

        pi = forecast_systematic(self.factor_model, self.exposures, macro_t, mask)
        if self.char_model.initialized:
            mu = forecast_characteristic(self.char_model, self.exposures, mask)
            mu = np.where(mask & ~np.isfinite(mu), pi, mu)
        else:
            mu = pi.copy()
        return ReturnForecast(pi=pi, mu=mu, t=t, mask=mask)

    # ============================================================================
    # PORTFOLIO DECISION
    # ============================================================================

    def _minimum_variance(self, t: int, idx: np.ndarray) -> np.ndarray:
        """Minimum-variance weights under Σ_u while no return forecast exists."""
        hp = self.hp
        sigma = nearest_psd(self.return_cov.cov[np.ix_(idx, idx)]) + hp.cov_ridge * np.eye(len(idx))
        gmv = gmv_weights(sigma)
        if np.abs(gmv).sum() > hp.max_leverage:
            gmv = constrained_mv(hp.gamma_s * sigma @ gmv, sigma, hp.gamma_s, self.constraints)
        self._warn(t, f"period {t}: factor model not initialised, holding minimum-variance weights")
        w = np.zeros(self.model.panel.N)
        w[idx] = gmv
        self.next_legs = (w.copy(), np.zeros_like(w), np.zeros_like(w))
        return w

    def _omega(self, state: EwmaCovState, idx: np.ndarray) -> np.ndarray:
        omega = state.cov[np.ix_(idx, idx)]
        return omega if self.hp.diagonal_uncertainty else nearest_psd(omega)

    def decide(self, t: int) -> np.ndarray:
        """
        Blend forecasts, build the covariance stack, decompose and project onto
        the leverage constraint.

        Returns:
            Length-N weights (zero outside the investible universe)
        """
        panel = self.model.panel
        hp = self.hp
        w = np.zeros(panel.N)
        if self.forecast is None:
            universe = investible_universe(panel, t, hp.universe_size)
            if len(universe) == 0:
                return self._hold_survivors(t)
            return self._minimum_variance(t, universe)
        if not self.forecast.mask.any():
            return self._hold_survivors(t)
        idx = np.flatnonzero(self.forecast.mask)

        pi = self.forecast.pi[idx]
        mu = self.forecast.mu[idx]
        omega_pi = self._omega(self.uncertainty.omega_pi, idx)
        omega_mu = self._omega(self.uncertainty.omega_mu, idx)
        blend = mixed_estimate(pi, mu, omega_pi, omega_mu)
        self.blend = blend

        if hp.risk_model == 'unconditional':
            sigma = nearest_psd(self.return_cov.cov[np.ix_(idx, idx)])
        else:
            macro_t = panel.macro[t] if panel.K else None
            B = betas(self.factor_model, self.exposures, macro_t)[idx]
            sigma = conditional_covariance(B, self.factor_model.factor_cov.cov, self.factor_model.idio_var[idx])
        stack = build_covariance_stack(sigma, omega_pi, blend.omega_bl, hp.kappa_s, hp.kappa_a, hp.shrink_target)

        dec = decompose(pi, blend.alpha_bl, stack.sigma_strategic, stack.sigma_active, hp.gamma_s, hp.gamma_a)
        gmv, sys_leg, act_leg = dec.gmv, dec.systematic, dec.active
        if hp.leg_leverage is not None:
            sys_leg = sys_leg * min(1.0, hp.leg_leverage / max(np.abs(sys_leg).sum(), 1e-300))
            act_leg = act_leg * min(1.0, hp.leg_leverage / max(np.abs(act_leg).sum(), 1e-300))
        total = gmv + sys_leg + act_leg

        warm = self.drifted[idx] if self.holding else None
        projected = constrained_mv(hp.gamma_s * stack.sigma_strategic @ total, stack.sigma_strategic,
                                   hp.gamma_s, self.constraints, warm_start=warm)

        # Projection adjustment shared by the two zero-sum legs in proportion to gross size
        adjustment = projected - total
        gross_s, gross_a = np.abs(sys_leg).sum(), np.abs(act_leg).sum()
        if gross_s + gross_a > 0:
            sys_leg = sys_leg + adjustment * gross_s / (gross_s + gross_a)
            act_leg = act_leg + adjustment * gross_a / (gross_s + gross_a)
        else:
            gmv = gmv + adjustment

        w[idx] = projected
        legs = []
        for leg in (gmv, sys_leg, act_leg):
            full = np.zeros(panel.N)
            full[idx] = leg
            legs.append(full)
        self.next_legs = tuple(legs)
        return w
