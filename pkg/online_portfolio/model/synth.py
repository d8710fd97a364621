"""
Synthetic weekly equity market with known parameters.

Excess returns follow the factor model with a planted characteristic payoff:
    r^e_{i,t} = δ_t · [1, z(BVTP_{i,t−1}), z(log MV_{i,t−1})] + β_i · f_t + ε_{i,t}
where z(·) is a cross-sectional z-score and δ_t optionally decays with a
half-life. Book-to-price follows a log-AR(1); market value compounds with the
asset's return.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from ..errors import ConfigError
from .data import AssetPanel, FactorSeries, panel_from_arrays

logger = logging.getLogger(__name__)

INNOVATIONS = ("gaussian", "student_t")


@dataclass
class GeneratorSpec:
    """
    Attributes:
        n_assets (int): N
        n_periods (int): T
        n_factors (int): P
        true_betas (np.ndarray | None): N×P betas (drawn from the seed when None)
        factor_mean (np.ndarray | None): Length-P factor premia per period
        factor_vol (np.ndarray | None): Length-P factor volatilities (> 0)
        idio_vol (float | np.ndarray): Idiosyncratic volatility per asset (≥ 0)
        planted_payoffs (np.ndarray): Payoffs on [1, z(BVTP), z(log MV)]
        half_life (float | None): Payoff half-life in periods (None = constant)
        innovations (str): 'gaussian' or 'student_t'
        df (float): Degrees of freedom of Student-t innovations (> 2)
        rf (float): Risk-free return per period
        missing_rate (float): Probability that a price is missing
        n_macro (int): Number of AR(1) macro information variables K (not priced)
        bvtp_persistence (float): AR(1) coefficient of log BVTP
        bvtp_vol (float): Innovation volatility of log BVTP
        start_date (str): First period stamp (weekly, Fridays)
        seed (int): Random seed
    """
    n_assets: int = 50
    n_periods: int = 500
    n_factors: int = 2
    true_betas: Optional[np.ndarray] = None
    factor_mean: Optional[np.ndarray] = None
    factor_vol: Optional[np.ndarray] = None
    idio_vol: float = 0.03
    planted_payoffs: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.004, 0.0]))
    half_life: Optional[float] = None
    innovations: str = "gaussian"
    df: float = 5.0
    rf: float = 0.0005
    missing_rate: float = 0.0
    n_macro: int = 0
    bvtp_persistence: float = 0.98
    bvtp_vol: float = 0.05
    start_date: str = "2000-01-07"
    seed: int = 0

    def __post_init__(self):
        """Validate dimensions and ranges."""
        if self.n_assets < 1 or self.n_periods < 2 or self.n_factors < 1:
            raise ConfigError("need n_assets >= 1, n_periods >= 2, n_factors >= 1", field='synth')
        if self.factor_mean is None:
            self.factor_mean = np.full(self.n_factors, 0.001)
        if self.factor_vol is None:
            self.factor_vol = np.full(self.n_factors, 0.02)
        self.factor_mean = np.asarray(self.factor_mean, dtype=float).reshape(-1)
        self.factor_vol = np.asarray(self.factor_vol, dtype=float).reshape(-1)
        self.planted_payoffs = np.asarray(self.planted_payoffs, dtype=float).reshape(-1)
        if self.factor_mean.shape != (self.n_factors,) or self.factor_vol.shape != (self.n_factors,):
            raise ConfigError(f"factor_mean and factor_vol need {self.n_factors} values", field='factor_vol')
        if np.any(self.factor_vol <= 0):
            raise ConfigError(f"must be > 0, got {self.factor_vol}", field='factor_vol')
        if np.any(np.asarray(self.idio_vol) < 0):
            raise ConfigError(f"must be >= 0, got {self.idio_vol}", field='idio_vol')
        if self.planted_payoffs.shape != (3,):
            raise ConfigError("planted_payoffs needs 3 values (intercept, BVTP, MV)", field='planted_payoffs')
        if self.true_betas is not None:
            self.true_betas = np.asarray(self.true_betas, dtype=float)
            if self.true_betas.shape != (self.n_assets, self.n_factors):
                raise ConfigError(f"must be {self.n_assets}×{self.n_factors}", field='true_betas')
        if self.half_life is not None and self.half_life <= 0:
            raise ConfigError(f"must be > 0, got {self.half_life}", field='half_life')
        if self.innovations not in INNOVATIONS:
            raise ConfigError(f"must be one of {INNOVATIONS}", field='innovations')
        if self.innovations == "student_t" and self.df <= 2:
            raise ConfigError(f"must be > 2, got {self.df}", field='df')
        if not 0 <= self.missing_rate < 1:
            raise ConfigError(f"must be in [0, 1), got {self.missing_rate}", field='missing_rate')
        if self.n_macro < 0:
            raise ConfigError(f"must be >= 0, got {self.n_macro}", field='n_macro')

    def payoff_path(self) -> np.ndarray:
        """T×3 planted payoffs δ_t."""
        t = np.arange(self.n_periods, dtype=float)
        decay = np.ones_like(t) if self.half_life is None else 0.5 ** (t / self.half_life)
        return decay[:, None] * self.planted_payoffs[None, :]


@dataclass
class GeneratorTruth:
    """
    Parameters that generated a synthetic panel.

    Attributes:
        betas: N×P
        factor_returns: T×P
        payoffs: T×3 planted payoffs (row t applies to the return of period t)
        idio_vol: Length-N
        factor_mean: Length-P
        factor_vol: Length-P
        idio_returns: T×N idiosyncratic shocks
    """
    betas: np.ndarray
    factor_returns: np.ndarray
    payoffs: np.ndarray
    idio_vol: np.ndarray
    factor_mean: np.ndarray
    factor_vol: np.ndarray
    idio_returns: np.ndarray


def _zscore(x: np.ndarray) -> np.ndarray:
    std = x.std()
    return (x - x.mean()) / std if std > 1e-12 else np.zeros_like(x)


def _shocks(rng: np.random.Generator, spec: GeneratorSpec, shape) -> np.ndarray:
    """Unit-variance innovations."""
    if spec.innovations == "student_t":
        return rng.standard_t(spec.df, size=shape) / np.sqrt(spec.df / (spec.df - 2.0))
    return rng.standard_normal(shape)


def generate(spec: GeneratorSpec):
    """
    Draw a synthetic market.

    Args:
        spec: Generator parameters

    Returns:
        (AssetPanel, FactorSeries of the true factors, GeneratorTruth)
    """
    rng = np.random.default_rng(spec.seed)
    N, T, P = spec.n_assets, spec.n_periods, spec.n_factors

    if spec.true_betas is None:
        loc = np.zeros(P)
        loc[0] = 1.0
        betas = loc + rng.normal(0.0, 0.3, size=(N, P))
    else:
        betas = spec.true_betas.copy()
    idio_vol = np.broadcast_to(np.asarray(spec.idio_vol, dtype=float), (N,)).copy()

    factors = spec.factor_mean + spec.factor_vol * _shocks(rng, spec, (T, P))
    idio = idio_vol * _shocks(rng, spec, (T, N))
    payoffs = spec.payoff_path()

    log_bvtp = np.empty((T, N))
    log_bvtp[0] = rng.normal(-0.5, 0.5, size=N)
    bvtp_level = log_bvtp[0].copy()
    bvtp_noise = rng.normal(0.0, spec.bvtp_vol, size=(T, N))
    mv = np.empty((T, N))
    mv[0] = np.exp(rng.normal(7.0, 1.0, size=N))
    prices = np.empty((T, N))
    prices[0] = 100.0
    excess = np.zeros((T, N))

    for t in range(1, T):
        phi = spec.bvtp_persistence
        log_bvtp[t] = phi * log_bvtp[t - 1] + (1.0 - phi) * bvtp_level + bvtp_noise[t]
        design = np.column_stack([np.ones(N), _zscore(log_bvtp[t - 1]), _zscore(np.log(mv[t - 1]))])
        excess[t] = design @ payoffs[t] + betas @ factors[t] + idio[t]
        total = np.maximum(excess[t] + spec.rf, -0.95)
        excess[t] = total - spec.rf
        prices[t] = prices[t - 1] * (1.0 + total)
        mv[t] = mv[t - 1] * (1.0 + total)

    bvtp = np.exp(log_bvtp)
    observed = prices.copy()
    if spec.missing_rate > 0:
        gaps = rng.random((T, N)) < spec.missing_rate
        gaps[0] = False
        observed[gaps] = np.nan
        logger.debug("Synthetic panel: %d missing prices", int(gaps.sum()))

    dates = pd.date_range(spec.start_date, periods=T, freq="W-FRI")
    asset_ids = [f"A{i:03d}" for i in range(N)]
    macro = None
    if spec.n_macro:
        macro = np.zeros((T, spec.n_macro))
        macro_noise = rng.standard_normal((T, spec.n_macro))
        for t in range(1, T):
            macro[t] = 0.9 * macro[t - 1] + np.sqrt(1.0 - 0.81) * macro_noise[t]
    panel = panel_from_arrays(dates, asset_ids, observed, bvtp, mv, np.full(T, spec.rf), macro=macro)

    factor_returns = factors.copy()
    factor_returns[0] = np.nan
    names = tuple(f"F{p + 1}" for p in range(P))
    truth = GeneratorTruth(
        betas=betas, factor_returns=factors, payoffs=payoffs, idio_vol=idio_vol,
        factor_mean=spec.factor_mean.copy(), factor_vol=spec.factor_vol.copy(), idio_returns=idio,
    )
    return panel, FactorSeries(factor_returns, names, np.full((T, 3), np.nan)), truth
