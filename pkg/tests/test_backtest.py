"""Tests for the online backtest, its accounting and the performance statistics."""

import numpy as np
import pytest

from online_portfolio.analysis.export import run_multiple_seeds
from online_portfolio.errors import ConfigError, DataError, ZeroVarianceError
from online_portfolio.model.agent import WIPEOUT_FLOOR, StrategyAgent
from online_portfolio.model.backtest import (
    BacktestModel,
    performance_stats,
    run_backtest,
    run_benchmark,
    run_strategies,
    sharpe_ratio,
)
from online_portfolio.model.data import FactorSeries
from online_portfolio.model.hyperparams import HyperParams
from online_portfolio.model.synth import GeneratorSpec, generate


@pytest.fixture(scope="module")
def side_by_side(small_market, fast_hp):
    panel, factors, _ = small_market
    return run_strategies(panel, factors, fast_hp)


# ============================================================================
# TRADE DATES AND ACCOUNTING
# ============================================================================

def test_strategies_share_trade_dates(side_by_side, small_market, fast_hp):
    panel = small_market[0]
    results = side_by_side.results()
    assert set(results) == {'algo', 'nd', 'cap', 'rfr'}
    expected = np.arange(fast_hp.burn_in + 1, panel.T)
    for result in results.values():
        np.testing.assert_array_equal(result.periods, expected)
        assert len(result.equity_curve) == len(expected) + 1
        assert result.equity_curve[0] == 1.0


def test_risk_free_benchmark_accrues_rf(side_by_side):
    rfr = side_by_side.result('rfr')
    np.testing.assert_allclose(rfr.excess_returns, 0.0, atol=1e-15)
    np.testing.assert_allclose(rfr.equity_curve[-1], np.prod(1.0 + rfr.rf))
    np.testing.assert_array_equal(rfr.turnover_series, 0.0)


def test_naive_diversification_weights(side_by_side, fast_hp):
    nd = side_by_side.result('nd')
    np.testing.assert_allclose(nd.weights.sum(axis=1), 1.0)
    np.testing.assert_allclose(nd.weights[0], 1.0 / fast_hp.universe_size)
    assert nd.turnover_series[0] == pytest.approx(1.0)
    assert np.all(nd.turnover_series[1:] < 1.0)


def test_cap_weights_follow_market_value(side_by_side, small_market, fast_hp):
    panel = small_market[0]
    cap = side_by_side.result('cap')
    t = fast_hp.burn_in
    mv = panel.char('MV')[t]
    np.testing.assert_allclose(cap.weights[0], mv / mv.sum())


def test_algorithm_respects_budget_and_leverage(side_by_side, fast_hp):
    algo = side_by_side.result('algo')
    np.testing.assert_allclose(algo.weights.sum(axis=1), 1.0, atol=1e-8)
    assert np.all(np.abs(algo.weights).sum(axis=1) <= fast_hp.max_leverage + 1e-8)
    assert algo.config_digest == fast_hp.digest()
    assert np.all(np.isfinite(algo.period_returns))


def test_leg_attribution_adds_up(side_by_side):
    algo = side_by_side.result('algo')
    assert algo.component_returns.shape == (algo.n_periods, 3)
    np.testing.assert_allclose(algo.component_returns.sum(axis=1), algo.period_returns, atol=1e-10)


def test_datacollector_matches_results(side_by_side):
    frame = side_by_side.performance_frame("Return")
    for name, result in side_by_side.results().items():
        np.testing.assert_allclose(frame.loc[result.periods, name].to_numpy(), result.period_returns)


def test_backtest_is_deterministic(small_market, fast_hp, side_by_side):
    panel, factors, _ = small_market
    again = run_backtest(panel, factors, fast_hp)
    np.testing.assert_array_equal(again.period_returns, side_by_side.result('algo').period_returns)


def test_no_look_ahead(small_market, fast_hp):
    panel, factors, _ = small_market
    full = run_backtest(panel, factors, fast_hp)
    k = 90
    part = run_backtest(panel.truncate(k), factors.truncate(k), fast_hp)
    n = part.n_periods
    np.testing.assert_array_equal(part.periods, full.periods[:n])
    np.testing.assert_array_equal(part.weights, full.weights[:n])
    np.testing.assert_array_equal(part.period_returns, full.period_returns[:n])


@pytest.mark.parametrize("model_id", ["value_size", "momentum", "pooled_rls"])
def test_every_active_model_runs(small_market, fast_hp, model_id):
    panel, factors, _ = small_market
    result = run_backtest(panel, factors, fast_hp.replace(active_model=model_id))
    assert np.all(np.isfinite(result.period_returns))


def test_unconditional_risk_model_and_leg_bound(small_market, fast_hp):
    panel, factors, _ = small_market
    hp = fast_hp.replace(risk_model="unconditional", leg_leverage=0.5, shrink_target="constant_correlation")
    result = run_backtest(panel, factors, hp)
    np.testing.assert_allclose(result.weights.sum(axis=1), 1.0, atol=1e-8)


def test_empty_universe_is_a_warning_not_a_failure(make_panel):
    prices = np.tile(1.0 + 0.01 * np.arange(12), (3, 1)).T.copy()
    prices[8] = np.nan
    panel = make_panel(prices)
    result = run_benchmark(panel, 'nd', burn_in=2, universe_size=3)
    periods = {w['period'] for w in result.warnings}
    assert {8, 9} <= periods
    assert np.all(np.isfinite(result.period_returns))
    np.testing.assert_array_equal(result.weights[result.periods == 9], 0.0)


def test_single_asset_universe_is_fully_invested(make_panel):
    growth = 1.0 + 0.01 * np.sin(np.arange(30))
    panel = make_panel(np.cumprod(growth)[:, None], rf=0.0005)
    result = run_backtest(panel, None, HyperParams(burn_in=5, universe_size=1))
    np.testing.assert_allclose(result.weights.sum(axis=1), 1.0)
    np.testing.assert_allclose(result.period_returns, panel.returns[result.periods, 0])
    assert result.equity_curve[-1] == pytest.approx(np.prod(1.0 + panel.returns[result.periods, 0]))
    assert result.warnings
    assert all("factor model not initialised" in w['message'] for w in result.warnings)


class LeveredAgent(StrategyAgent):
    """Holds twice the first asset, short the second."""

    def decide(self, t):
        return np.array([2.0, -1.0])


def test_wipeout_is_floored_and_liquidated(make_panel):
    prices = np.ones((6, 2))
    prices[3:, 0] = 0.05
    panel = make_panel(prices)
    model = BacktestModel(panel, FactorSeries(np.zeros((6, 2))), None, benchmarks=(), burn_in=1, universe_size=2)
    model.strategies['levered'] = LeveredAgent(model, 'levered')
    result = model.run().result('levered')

    assert np.all(result.equity_curve > 0)
    assert result.period_returns[result.periods == 3][0] == WIPEOUT_FLOOR
    assert [w['period'] for w in result.warnings] == [3]
    assert np.isfinite(performance_stats(result).ann_return)


def test_burn_in_longer_than_panel_is_rejected(small_market, fast_hp):
    panel, factors, _ = small_market
    with pytest.raises(ConfigError):
        BacktestModel(panel, factors, fast_hp.replace(burn_in=panel.T))


def test_unknown_benchmark_is_rejected(small_market):
    panel, factors, _ = small_market
    with pytest.raises(ConfigError):
        BacktestModel(panel, factors, None, benchmarks=('momentum',), burn_in=10)


# ============================================================================
# PERFORMANCE STATISTICS
# ============================================================================

def test_sharpe_ratio_uses_sample_deviation():
    x = np.array([0.01, 0.03, -0.01, 0.02])
    assert sharpe_ratio(x) == pytest.approx(x.mean() / x.std(ddof=1))


def test_sharpe_ratio_edge_cases():
    assert sharpe_ratio(np.zeros(10)) == 0.0
    with pytest.raises(ZeroVarianceError):
        sharpe_ratio(np.full(10, 0.01))
    with pytest.raises(DataError):
        sharpe_ratio([0.01])


def test_max_drawdown_and_slicing(side_by_side):
    nd = side_by_side.result('nd')
    stats = performance_stats(nd)
    equity = nd.equity_curve
    assert stats.max_drawdown == pytest.approx(np.max(1.0 - equity / np.maximum.accumulate(equity)))
    assert stats.n_periods == nd.n_periods

    first = int(nd.periods[10])
    part = nd.slice(first, first + 20)
    assert part.n_periods == 20
    assert part.equity_curve[0] == 1.0
    np.testing.assert_array_equal(part.period_returns, nd.period_returns[10:30])


# ============================================================================
# SYNTHETIC MARKETS
# ============================================================================

@pytest.mark.slow
def test_algorithm_captures_planted_value_premium():
    spec = GeneratorSpec(n_assets=50, n_periods=500, planted_payoffs=np.array([0.0, 0.004, 0.0]))
    hp = HyperParams(burn_in=52, universe_size=50, active_model="value_size")
    df = run_multiple_seeds(spec, hp, seeds=range(10))
    assert df['algo_sr'].mean() > df['nd_sr'].mean()


@pytest.mark.slow
def test_full_size_backtest_completes():
    panel, factors, _ = generate(GeneratorSpec(n_assets=100, n_periods=1200, seed=1))
    result = run_backtest(panel, factors, HyperParams())
    assert result.n_periods == 1200 - 52 - 1
    assert np.all(np.isfinite(result.period_returns))
    assert np.all(result.equity_curve > 0)
