"""Tests for splits, Sharpe ratio statistics, CSCV, the grid search and calibration."""

import json

import numpy as np
import pytest
from scipy.stats import norm

from online_portfolio.analysis import evaluate
from online_portfolio.analysis.evaluate import (
    GridSpec,
    SplitSpec,
    calibrate,
    cscv_pbo,
    deflated_sr,
    expected_max_sr,
    grid_search,
    haircut_sr,
    is_oos_regression,
    probabilistic_sr,
    split_periods,
    walk_forward_splits,
)
from online_portfolio.errors import (
    ConfigError,
    DegenerateRegressionError,
    NumericalError,
    SplitError,
)


# ============================================================================
# SPLITS
# ============================================================================

def test_walk_forward_blocks():
    splits = walk_forward_splits(100, 4, 60)
    assert [(v.start, v.stop) for _, v in splits] == [(60, 70), (70, 80), (80, 90), (90, 100)]
    assert all(tr.start == 0 and tr.stop == v.start for tr, v in splits)


def test_walk_forward_last_fold_absorbs_remainder():
    splits = walk_forward_splits(103, 4, 60)
    assert splits[-1][1] == range(90, 103)


def test_walk_forward_too_short():
    with pytest.raises(SplitError):
        walk_forward_splits(10, 4, 8)


def test_in_sample_segment_contains_burn_in():
    is_periods, oos_periods, splits = split_periods(200, 20, SplitSpec())
    assert is_periods[0] == 21 and is_periods[-1] == 119
    assert oos_periods[0] == 120 and oos_periods[-1] == 199
    assert splits[0][1].start == 21 + len(is_periods) // 2
    assert splits[-1][1].stop == 120


# ============================================================================
# SHARPE RATIO STATISTICS
# ============================================================================

def test_psr_is_one_half_at_the_benchmark():
    assert probabilistic_sr(0.1, 0.1, 100) == pytest.approx(0.5)
    assert probabilistic_sr(0.2, 0.0, 500) > 0.99


def test_psr_rejects_negative_variance_term():
    with pytest.raises(NumericalError):
        probabilistic_sr(1.0, 0.0, 100, skew=10.0, kurt=3.0)
    with pytest.raises(NumericalError):
        probabilistic_sr(0.1, 0.0, 1)


def test_expected_max_sharpe_ratio():
    g = np.euler_gamma
    expected = 0.1 * ((1 - g) * norm.ppf(1 - 1 / 100) + g * norm.ppf(1 - 1 / (100 * np.e)))
    assert expected_max_sr(100, 0.01) == pytest.approx(expected)
    assert expected_max_sr(1, 0.01) == 0.0


def test_deflation_with_one_trial_is_psr():
    assert deflated_sr(0.1, 300, -0.2, 4.0, 1, 0.01) == probabilistic_sr(0.1, 0.0, 300, -0.2, 4.0)


def test_deflation_penalises_many_trials():
    psr = probabilistic_sr(0.1, 0.0, 300, 0.0, 3.0)
    assert deflated_sr(0.1, 300, 0.0, 3.0, 1000, 0.002) < psr


def test_haircut_sharpe_ratio():
    assert haircut_sr(0.3, 700, 1) == 0.3
    hsr = haircut_sr(0.3, 700, 10800)
    assert 0.0 < hsr < 0.3
    assert haircut_sr(0.05, 100, 1000) == 0.0


# ============================================================================
# CSCV
# ============================================================================

def test_dominant_strategy_is_not_overfit(rng):
    M = rng.normal(size=(160, 10))
    M[:, 0] = 1.0 + 0.01 * rng.normal(size=160)
    result = cscv_pbo(M, S=16)
    assert result.pbo == 0.0
    assert not result.degenerate
    assert len(result.logits) == 12870
    assert result.prob_oos_loss == 0.0


def test_reversing_strategies_are_always_overfit():
    a = np.array([0.01, 0.02, -0.01, -0.02])
    result = cscv_pbo(np.column_stack([a, -a]), S=2)
    assert result.pbo == 1.0
    np.testing.assert_allclose(result.logits, np.log(0.5))


def test_pbo_is_scale_invariant(rng):
    M = rng.normal(size=(120, 8))
    np.testing.assert_allclose(cscv_pbo(2.0 * M, S=8).logits, cscv_pbo(M, S=8).logits)


def test_identical_columns_are_degenerate(rng):
    col = rng.normal(size=(40, 1))
    result = cscv_pbo(np.repeat(col, 5, axis=1), S=4)
    assert result.degenerate
    assert result.pbo == 0.5


def test_odd_block_count_is_rejected(rng):
    with pytest.raises(ConfigError):
        cscv_pbo(rng.normal(size=(40, 3)), S=5)
    with pytest.raises(ConfigError):
        cscv_pbo(rng.normal(size=(6, 3)), S=8)


@pytest.mark.slow
def test_pbo_of_pure_noise_is_one_half():
    pbos = [cscv_pbo(np.random.default_rng(seed).normal(size=(200, 100)), S=8).pbo for seed in range(50)]
    assert 0.4 <= np.mean(pbos) <= 0.6


# ============================================================================
# IS/OOS REGRESSION
# ============================================================================

def test_regression_recovers_exact_line():
    x = np.array([0.0, 1.0, 2.0, 3.0])
    fit = is_oos_regression(np.column_stack([x, 1.0 - x]))
    assert fit.slope == pytest.approx(-1.0)
    assert fit.intercept == pytest.approx(1.0)
    assert fit.r2 == pytest.approx(1.0)
    assert fit.n == 4


def test_regression_needs_variation():
    with pytest.raises(DegenerateRegressionError):
        is_oos_regression([[0.1, 0.2], [0.2, 0.1]])
    with pytest.raises(DegenerateRegressionError):
        is_oos_regression([[0.1, 0.2], [0.1, 0.1], [0.1, 0.3]])


# ============================================================================
# GRID
# ============================================================================

def test_grid_size_and_order(fast_hp):
    grid = GridSpec(axes={'lambda_s': [0.9, 0.95], 'gamma_a': [10.0, 20.0, 30.0]},
                    active_models=['momentum', 'full'], base=fast_hp)
    configs = list(grid.configs())
    assert grid.size == len(configs) == 12
    assert [c.active_model for c in configs[:6]] == ['momentum'] * 6
    assert configs[0].burn_in == fast_hp.burn_in
    assert len({c.digest() for c in configs}) == 12


@pytest.mark.parametrize("axes, models", [
    ({'not_a_field': [1]}, ['full']),
    ({'burn_in': [10, 20]}, ['full']),
    ({'lambda_s': []}, ['full']),
    ({}, ['nope']),
])
def test_invalid_grids_are_rejected(axes, models):
    with pytest.raises(ConfigError):
        GridSpec(axes=axes, active_models=models)


def test_full_scale_grid():
    grid = evaluate.full_scale_grid()
    assert grid.size == 10800
    assert grid.size // len(grid.active_models) == 2700


@pytest.fixture(scope="module")
def search_inputs(small_market, fast_hp):
    panel, factors, _ = small_market
    is_periods, oos_periods, splits = split_periods(panel.T, fast_hp.burn_in, SplitSpec())
    grid = GridSpec(axes={'gamma_a': [10.0, 40.0]}, base=fast_hp)
    return panel, factors, grid, splits, is_periods, oos_periods


def test_grid_search_is_reproducible(search_inputs):
    first = grid_search(*search_inputs)
    second = grid_search(*search_inputs)
    assert first.trials.digest() == second.trials.digest()
    assert first.trials.returns.shape == (len(search_inputs[4]), 2)
    assert first.oos.returns.shape == (len(search_inputs[5]), 2)
    assert [d for d, _ in first.ranking] == [d for d, _ in second.ranking]
    assert set(first.table['status']) == {'ok'}


def test_failed_trials_are_recorded(search_inputs, monkeypatch):
    real = evaluate.run_backtest

    def flaky(panel, factors, hp, *args, **kwargs):
        if hp.gamma_a == 40.0:
            raise NumericalError("solver diverged")
        return real(panel, factors, hp, *args, **kwargs)

    monkeypatch.setattr(evaluate, "run_backtest", flaky)
    result = grid_search(*search_inputs)
    assert len(result.failed) == 1
    assert "solver diverged" in result.failed[0][1]
    assert result.trials.n_trials == 1
    assert list(result.table['status']) == ['ok', 'failed']


@pytest.mark.slow
def test_parallel_grid_search_matches_serial(search_inputs):
    serial = grid_search(*search_inputs)
    parallel = grid_search(*search_inputs, parallel=2)
    assert parallel.trials.digest() == serial.trials.digest()


# ============================================================================
# CALIBRATION
# ============================================================================

def test_calibration_with_a_single_configuration(small_market, fast_hp):
    panel, factors, _ = small_market
    report = calibrate(panel, factors, GridSpec(base=fast_hp))
    assert report.n_trials == 1
    assert report.selected_digest == fast_hp.digest()
    assert report.pbo.degenerate and report.pbo.pbo == 0.5
    assert report.hsr == report.is_sr
    assert len(report.table) == 6
    assert [(row['segment'], row['strategy']) for row in report.table[:3]] == [('IS', 'Algo'), ('IS', 'ND'), ('IS', 'Cap')]
    assert 'dsr' in report.table[0] and 'psr' in report.table[3]
    json.dumps(report.to_dict(), allow_nan=False)


def test_calibration_ranks_two_configurations(small_market, fast_hp):
    panel, factors, _ = small_market
    grid = GridSpec(axes={'gamma_a': [10.0, 40.0]}, base=fast_hp)
    report = calibrate(panel, factors, grid, SplitSpec(cscv_blocks=8))
    assert report.n_trials == 2
    assert not report.pbo.degenerate
    assert 0.0 <= report.pbo.pbo <= 1.0
    assert len(report.pbo.logits) == 70
    assert report.selected_digest in {c.digest() for c in grid.configs()}
    assert report.var_trial_sr >= 0.0
