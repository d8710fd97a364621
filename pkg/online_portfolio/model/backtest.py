"""
Online backtest of the adaptive strategy and its benchmarks.

One model step is one period t:
- every agent realises the return of the weights it held into t
- the adaptive agent feeds back forecast errors, updates its factor and
  characteristic models and issues forecasts for t+1
- on trade dates every agent decides new weights
- all agents then commit their weights simultaneously
Trading starts after a burn-in of model updates. Returns are gross of costs.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from mesa import DataCollector, Model

from ..errors import ConfigError, DataError, ZeroVarianceError
from .active_models import model_characteristics
from .agent import AdaptiveStrategyAgent, BenchmarkAgent
from .data import AssetPanel, FactorSeries, build_factor_portfolios, compute_momentum
from .hyperparams import HyperParams

logger = logging.getLogger(__name__)

PERIODS_PER_YEAR = 52


# ============================================================================
# RESULTS
# ============================================================================

def _equity(returns: np.ndarray) -> np.ndarray:
    return np.concatenate([[1.0], np.cumprod(1.0 + returns)])


@dataclass
class BacktestResult:
    """
    Realised performance of one strategy.

    Attributes:
        strategy: Strategy key
        periods: Length-T' period indices into the panel
        dates: Period stamps
        period_returns: Total simple returns per period
        excess_returns: period_returns − rf
        rf: Risk-free returns of the same periods
        weights: T'×N weights held during each period
        turnover_series: Σ|w − w_drifted| at the rebalance into each period
        component_returns: T'×3 leg attribution (gmv, sys, act); empty for benchmarks
        config_digest: Digest of the HyperParams (benchmark name for benchmarks)
        asset_ids: Column labels of `weights`
        warnings: Degraded-period records
        equity_curve: Length T'+1, starts at 1
    """
    strategy: str
    periods: np.ndarray
    dates: pd.DatetimeIndex
    period_returns: np.ndarray
    excess_returns: np.ndarray
    rf: np.ndarray
    weights: np.ndarray
    turnover_series: np.ndarray
    component_returns: np.ndarray
    config_digest: str
    asset_ids: tuple = ()
    warnings: list = field(default_factory=list)
    equity_curve: np.ndarray = field(init=False)

    def __post_init__(self):
        self.equity_curve = _equity(self.period_returns)

    @property
    def n_periods(self) -> int:
        return len(self.period_returns)

    def slice(self, first: int, last: int) -> "BacktestResult":
        """
        Sub-result covering panel periods first ≤ t < last.

        The equity curve restarts at 1.
        """
        keep = (self.periods >= first) & (self.periods < last)
        comps = self.component_returns[keep] if len(self.component_returns) else self.component_returns
        return BacktestResult(
            strategy=self.strategy,
            periods=self.periods[keep],
            dates=self.dates[keep],
            period_returns=self.period_returns[keep],
            excess_returns=self.excess_returns[keep],
            rf=self.rf[keep],
            weights=self.weights[keep],
            turnover_series=self.turnover_series[keep],
            component_returns=comps,
            config_digest=self.config_digest,
            asset_ids=self.asset_ids,
            warnings=[w for w in self.warnings if first <= w['period'] < last],
        )


@dataclass
class PerformanceStats:
    """
    Attributes:
        sr: Per-period (weekly) Sharpe ratio of excess returns
        mean_turnover: Mean turnover per period
        ann_return: Annualised compounded total return
        ann_vol: Annualised volatility of total returns
        max_drawdown: Largest peak-to-trough loss of the equity curve
        n_periods: Number of periods
    """
    sr: float
    mean_turnover: float
    ann_return: float
    ann_vol: float
    max_drawdown: float
    n_periods: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def sharpe_ratio(excess_returns) -> float:
    """
    Mean over sample standard deviation of per-period excess returns.

    Returns 0 for a constant zero series.

    Raises:
        DataError: fewer than 2 periods
        ZeroVarianceError: constant non-zero series
    """
    x = np.asarray(excess_returns, dtype=float)
    if len(x) < 2:
        raise DataError(f"Sharpe ratio needs at least 2 periods, got {len(x)}")
    mean = float(np.mean(x))
    std = float(np.std(x, ddof=1))
    if std <= 1e-14 * max(1.0, abs(mean)):
        if abs(mean) <= 1e-14:
            return 0.0
        raise ZeroVarianceError(f"constant excess return {mean:.6g}: Sharpe ratio undefined")
    return mean / std


def performance_stats(result: BacktestResult, rf=None, periods_per_year: int = PERIODS_PER_YEAR) -> PerformanceStats:
    """
    Summary statistics of a backtest.

    Args:
        result: Backtest result
        rf: Optional risk-free series overriding result.rf
        periods_per_year: Annualisation factor (52 for weekly data)

    Returns:
        PerformanceStats
    """
    excess = result.excess_returns if rf is None else result.period_returns - np.asarray(rf, dtype=float)
    sr = sharpe_ratio(excess)
    equity = result.equity_curve
    drawdown = 1.0 - equity / np.maximum.accumulate(equity)
    n = result.n_periods
    return PerformanceStats(
        sr=sr,
        mean_turnover=float(np.mean(result.turnover_series)),
        ann_return=float(equity[-1] ** (periods_per_year / n) - 1.0),
        ann_vol=float(np.std(result.period_returns, ddof=1) * np.sqrt(periods_per_year)),
        max_drawdown=float(np.max(drawdown)),
        n_periods=n,
    )


# ============================================================================
# MODEL
# ============================================================================

def prepare_panel(panel: AssetPanel, names: Sequence[str] = ()) -> AssetPanel:
    """Add momentum characteristics when any requested name is missing."""
    if any(name not in panel.char_names for name in names):
        panel = compute_momentum(panel)
    return panel


class BacktestModel(Model):
    """
    Mesa model stepping strategy agents through the panel one period at a time.

    Attributes:
        panel: Asset panel (momentum added when needed)
        factors: Factor-mimicking portfolio returns
        hp: Configuration of the adaptive agent (None for benchmarks only)
        start: First period fed to the models
        end: One past the last period
        burn_in: Periods of updates before the first trade
        universe_size: Investible universe size U
        datacollector: Per-agent Return, Excess and Turnover by period
    """

    def __init__(
        self,
        panel: AssetPanel,
        factors: Optional[FactorSeries] = None,
        hp: Optional[HyperParams] = None,
        benchmarks: Sequence[str] = ('nd', 'cap', 'rfr'),
        start: int = 0,
        end: Optional[int] = None,
        burn_in: Optional[int] = None,
        universe_size: Optional[int] = None,
        seed: Optional[int] = None,
    ):
        """
        Initialize the backtest.

        Args:
            panel: Asset panel
            factors: Factor returns (built from the panel when None)
            hp: Hyper-parameters; the adaptive agent is created only when given
            benchmarks: Benchmark kinds to run alongside
            start: First period processed
            end: One past the last period (panel length when None)
            burn_in: Update-only periods before the first trade (hp.burn_in or 52)
            universe_size: Universe size (hp.universe_size or 100)
            seed: Passed to mesa.Model; the backtest itself draws no random numbers
        """
        super().__init__(seed=seed)

        names = model_characteristics(hp.active_model) if hp is not None else ()
        self.panel = prepare_panel(panel, names)
        self.factors = factors if factors is not None else build_factor_portfolios(self.panel)
        if len(self.factors.factor_returns) != self.panel.T:
            raise DataError(f"factor series has {len(self.factors.factor_returns)} periods, panel has {self.panel.T}")

        self.hp = hp
        self.start = start
        self.end = self.panel.T if end is None else end
        self.burn_in = burn_in if burn_in is not None else (hp.burn_in if hp is not None else 52)
        self.universe_size = universe_size if universe_size is not None else (hp.universe_size if hp is not None else 100)
        if not 0 <= self.start < self.end <= self.panel.T:
            raise ConfigError(f"invalid period range [{self.start}, {self.end}) for {self.panel.T} periods", field='start')
        if self.start + self.burn_in >= self.end - 1:
            raise ConfigError(
                f"burn-in of {self.burn_in} leaves no trading periods in [{self.start}, {self.end})",
                field='burn_in',
            )
        self.t = self.start

        self.strategies = {}
        if hp is not None:
            self.strategies['algo'] = AdaptiveStrategyAgent(self, hp)
        for kind in benchmarks:
            self.strategies[kind] = BenchmarkAgent(self, kind)

        self.datacollector = DataCollector(
            model_reporters={
                "Period": lambda m: m.t,
                "Rf": lambda m: float(m.panel.rf[m.t]),
            },
            agent_reporters={
                "Strategy": "name",
                "Period": "period",
                "Return": "period_return",
                "Excess": "excess_return",
                "Turnover": "turnover",
            },
        )

    # ============================================================================
    # SIMULATION METHODS
    # ============================================================================

    def is_trade_date(self, t: int) -> bool:
        """Weights are decided at the end of t for t+1, from start + burn_in on."""
        return self.start + self.burn_in <= t < self.end - 1

    def step(self):
        """
        Run one period with simultaneous activation: all agents step, then all advance.
        """
        for agent in self.agents:
            agent.step()
        for agent in self.agents:
            agent.advance()
        self.datacollector.collect(self)
        self.t += 1

    def run(self):
        """Step through every period in [start, end)."""
        logger.info("Backtest %s over periods [%d, %d), burn-in %d",
                    self.hp.digest() if self.hp else "benchmarks", self.start, self.end, self.burn_in)
        while self.t < self.end:
            self.step()
        return self

    # ============================================================================
    # RESULTS
    # ============================================================================

    def result(self, name: str) -> BacktestResult:
        """BacktestResult of one strategy."""
        agent = self.strategies[name]
        periods = np.asarray(agent.history_periods, dtype=int)
        n = self.panel.N
        digest = self.hp.digest() if (name == 'algo' and self.hp is not None) else name
        return BacktestResult(
            strategy=name,
            periods=periods,
            dates=self.panel.dates[periods],
            period_returns=np.asarray(agent.history_returns, dtype=float),
            excess_returns=np.asarray(agent.history_excess, dtype=float),
            rf=np.asarray(self.panel.rf[periods], dtype=float),
            weights=np.asarray(agent.history_weights, dtype=float).reshape(-1, n),
            turnover_series=np.asarray(agent.history_turnover, dtype=float),
            component_returns=np.asarray(agent.history_components, dtype=float).reshape(-1, 3) if agent.records_legs else np.zeros((0, 3)),
            config_digest=digest,
            asset_ids=self.panel.asset_ids,
            warnings=list(agent.warnings),
        )

    def results(self) -> dict:
        return {name: self.result(name) for name in self.strategies}

    def performance_frame(self, value: str = "Return") -> pd.DataFrame:
        """
        Collected agent data pivoted to period × strategy.

        Args:
            value: 'Return', 'Excess' or 'Turnover'

        Returns:
            DataFrame indexed by period with one column per strategy
        """
        df = self.datacollector.get_agent_vars_dataframe().reset_index(drop=True)
        df = df.dropna(subset=["Period"])
        df["Period"] = df["Period"].astype(int)
        return df.pivot(index="Period", columns="Strategy", values=value)


# ============================================================================
# ENTRY POINTS
# ============================================================================

def run_backtest(
    panel: AssetPanel,
    factors: Optional[FactorSeries],
    hp: HyperParams,
    start: int = 0,
    end: Optional[int] = None,
) -> BacktestResult:
    """
    Run the adaptive strategy alone.

    Args:
        panel: Asset panel
        factors: Factor returns (built from the panel when None)
        hp: Hyper-parameters
        start: First period fed to the models
        end: One past the last period

    Returns:
        BacktestResult of the adaptive strategy
    """
    model = BacktestModel(panel, factors, hp, benchmarks=(), start=start, end=end)
    return model.run().result('algo')


def run_benchmark(
    panel: AssetPanel,
    kind: str,
    start: int = 0,
    end: Optional[int] = None,
    burn_in: int = 52,
    universe_size: int = 100,
    factors: Optional[FactorSeries] = None,
) -> BacktestResult:
    """
    Run one benchmark with the same accounting and trade dates as the algorithm.

    Args:
        panel: Asset panel
        kind: 'nd' (equal weights), 'cap' (MV weights) or 'rfr' (cash)
        start, end, burn_in: Period range and first trade offset
        universe_size: Universe size U
        factors: Unused by benchmarks; avoids rebuilding when supplied

    Returns:
        BacktestResult
    """
    if factors is None:
        factors = FactorSeries(np.zeros((panel.T, 2)))
    model = BacktestModel(panel, factors, None, benchmarks=(kind,), start=start, end=end,
                          burn_in=burn_in, universe_size=universe_size)
    return model.run().result(kind.lower())


def run_strategies(
    panel: AssetPanel,
    factors: Optional[FactorSeries],
    hp: HyperParams,
    start: int = 0,
    end: Optional[int] = None,
    benchmarks: Sequence[str] = ('nd', 'cap', 'rfr'),
) -> BacktestModel:
    """Run the adaptive strategy and the benchmarks side by side in one model."""
    return BacktestModel(panel, factors, hp, benchmarks=benchmarks, start=start, end=end).run()
