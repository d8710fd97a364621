"""
Online portfolio engine - core model

Core components:
- AssetPanel / FactorSeries: aligned input data
- Recursive filters: EWMA, RLS, robust LMA
- Factor and characteristic return models
- Forecast blending and covariance stack
- Mean-variance decomposition and leverage-constrained solver
- BacktestModel: Mesa model stepping strategy agents
"""

from .active_models import ACTIVE_MODELS, LEG_LABELS, STRATEGY_COLORS, STRATEGY_LABELS
from .backtest import (
    BacktestModel,
    BacktestResult,
    PerformanceStats,
    performance_stats,
    run_backtest,
    run_benchmark,
    run_strategies,
    sharpe_ratio,
)
from .data import AssetPanel, FactorSeries, build_factor_portfolios, load_panel
from .hyperparams import HyperParams
from .synth import GeneratorSpec, GeneratorTruth, generate

__all__ = [
    'ACTIVE_MODELS',
    'LEG_LABELS',
    'STRATEGY_COLORS',
    'STRATEGY_LABELS',
    'AssetPanel',
    'FactorSeries',
    'build_factor_portfolios',
    'load_panel',
    'HyperParams',
    'BacktestModel',
    'BacktestResult',
    'PerformanceStats',
    'performance_stats',
    'run_backtest',
    'run_benchmark',
    'run_strategies',
    'sharpe_ratio',
    'GeneratorSpec',
    'GeneratorTruth',
    'generate',
]
