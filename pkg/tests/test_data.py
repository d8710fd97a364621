"""Tests for panel construction, CSV ingestion and factor portfolios."""

import logging

import numpy as np
import pytest

from online_portfolio.errors import DataError, PanelFormatError
from online_portfolio.model.data import (
    build_factor_portfolios,
    characteristic_exposures,
    compute_momentum,
    investible_universe,
    leg_weights,
    load_panel,
    write_panel_csv,
)
from online_portfolio.model.synth import GeneratorSpec, generate


# ============================================================================
# CONSTRUCTION
# ============================================================================

def test_missing_price_removes_both_adjacent_returns(make_panel):
    prices = np.array([
        [1.0, 1.0],
        [1.1, 1.2],
        [np.nan, 1.3],
        [1.2, 1.4],
        [1.3, 1.5],
    ])
    panel = make_panel(prices)
    np.testing.assert_array_equal(panel.available[:, 0], [False, True, False, False, True])
    np.testing.assert_array_equal(panel.available[:, 1], [False, True, True, True, True])
    assert np.isnan(panel.returns[2, 0]) and np.isnan(panel.returns[3, 0])
    assert panel.returns[1, 0] == pytest.approx(0.1)
    assert panel.returns[4, 0] == pytest.approx(1.3 / 1.2 - 1.0)


def test_excess_returns_subtract_rf(make_panel):
    prices = np.array([[1.0], [1.02], [1.05]])
    panel = make_panel(prices, rf=0.001)
    np.testing.assert_allclose(panel.excess_returns[1:], panel.returns[1:] - 0.001)


def test_assets_are_sorted_by_id(make_panel):
    prices = np.array([[1.0, 2.0], [1.1, 2.2]])
    panel = make_panel(prices, ids=["B", "A"])
    assert panel.asset_ids == ("A", "B")
    np.testing.assert_allclose(panel.prices[:, 0], [2.0, 2.2])


def test_non_positive_market_value_is_masked(make_panel, caplog):
    prices = np.ones((3, 2))
    mv = np.array([[-1.0, 5.0], [3.0, 5.0], [3.0, 5.0]])
    with caplog.at_level(logging.WARNING):
        panel = make_panel(prices, mv=mv)
    assert np.isnan(panel.char('MV')[0, 0])
    assert "non-positive MV" in caplog.text


def test_panel_arrays_are_read_only(make_panel):
    panel = make_panel(np.ones((3, 2)))
    with pytest.raises(ValueError):
        panel.returns[1, 0] = 0.5


def test_truncate_bounds(make_panel):
    panel = make_panel(np.ones((6, 2)))
    assert panel.truncate(4).T == 4
    with pytest.raises(IndexError):
        panel.truncate(0)
    with pytest.raises(IndexError):
        panel.truncate(7)


# ============================================================================
# CSV INGESTION
# ============================================================================

def test_csv_round_trip(tmp_path):
    panel, _, _ = generate(GeneratorSpec(n_assets=6, n_periods=30, missing_rate=0.05, seed=11))
    write_panel_csv(panel, tmp_path)
    loaded = load_panel(tmp_path / "prices.csv", tmp_path / "characteristics.csv", tmp_path / "rf.csv")

    assert loaded.asset_ids == panel.asset_ids
    assert (loaded.dates == panel.dates).all()
    np.testing.assert_array_equal(loaded.available, panel.available)
    np.testing.assert_allclose(loaded.prices, panel.prices, rtol=1e-10)
    np.testing.assert_allclose(loaded.char('MV'), panel.char('MV'), rtol=1e-10)
    np.testing.assert_allclose(loaded.rf, panel.rf, rtol=1e-10)


def _write_inputs(directory, rf_rows):
    (directory / "prices.csv").write_text(
        "date,asset_id,price\n2000-01-07,A,1.0\n2000-01-14,A,1.1\n", encoding="utf-8")
    (directory / "characteristics.csv").write_text(
        "date,asset_id,bvtp,mv\n2000-01-07,A,0.5,100\n2000-01-14,A,0.5,110\n", encoding="utf-8")
    (directory / "rf.csv").write_text("date,rf\n" + "".join(rf_rows), encoding="utf-8")
    return directory / "prices.csv", directory / "characteristics.csv", directory / "rf.csv"


def test_malformed_row_reports_path_and_line(tmp_path):
    paths = _write_inputs(tmp_path, ["2000-01-07,0.001\n", "2000-01-14,abc\n"])
    with pytest.raises(PanelFormatError) as excinfo:
        load_panel(*paths)
    assert excinfo.value.line == 3
    assert "rf.csv:3" in str(excinfo.value)


def test_date_missing_from_calendar(tmp_path):
    paths = _write_inputs(tmp_path, ["2000-01-07,0.001\n", "2000-01-21,0.001\n"])
    with pytest.raises(DataError, match="missing from"):
        load_panel(*paths)


def test_missing_file_names_path(tmp_path):
    paths = _write_inputs(tmp_path, ["2000-01-07,0.001\n", "2000-01-14,0.001\n"])
    with pytest.raises(DataError, match="nope.csv"):
        load_panel(tmp_path / "nope.csv", paths[1], paths[2])


def test_well_formed_inputs_load(tmp_path):
    paths = _write_inputs(tmp_path, ["2000-01-07,0.001\n", "2000-01-14,0.001\n"])
    panel = load_panel(*paths)
    assert (panel.T, panel.N) == (2, 1)
    assert panel.returns[1, 0] == pytest.approx(0.1)


# ============================================================================
# FEATURES
# ============================================================================

def test_momentum_needs_a_complete_window(make_panel):
    T = 60
    prices = np.tile(1.01 ** np.arange(T), (2, 1)).T
    panel = compute_momentum(make_panel(prices))
    moms = panel.char('MOMS')
    moml = panel.char('MOML')
    assert np.isnan(moms[12, 0])
    assert moms[13, 0] == pytest.approx(1.01 ** 13 - 1.0)
    assert np.isnan(moml[51, 0])
    assert moml[52, 1] == pytest.approx(1.01 ** 52 - 1.0)


def test_exposures_are_z_scores_with_log_size(make_panel):
    mv = np.tile(np.exp(np.arange(4.0)), (2, 1))
    panel = make_panel(np.ones((2, 4)), mv=mv)
    theta = characteristic_exposures(panel, 1, ['MV'], np.ones(4, dtype=bool))
    expected = (np.arange(4.0) - 1.5) / np.sqrt(1.25)
    np.testing.assert_allclose(theta[:, 0], expected)

    masked = characteristic_exposures(panel, 1, ['MV'], np.array([True, True, True, False]))
    assert np.isnan(masked[3, 0])
    assert np.nanmean(masked[:, 0]) == pytest.approx(0.0, abs=1e-12)


def _sorted_panel(make_panel):
    N = 10
    r = 0.01 * np.arange(N)
    prices = np.vstack([np.ones(N), 1.0 + r, 1.0 + r])
    mv = np.tile(10.0 - np.arange(N), (3, 1))
    bvtp = np.tile(np.arange(N) / 10.0 + 0.1, (3, 1))
    return make_panel(prices, bvtp=bvtp, mv=mv)


def test_leg_membership_uses_previous_characteristics(make_panel):
    legs = leg_weights(_sorted_panel(make_panel), 1)
    np.testing.assert_array_equal(np.flatnonzero(legs['small']), [5, 6, 7, 8, 9])
    np.testing.assert_array_equal(np.flatnonzero(legs['big']), [0, 1, 2, 3, 4])
    np.testing.assert_array_equal(np.flatnonzero(legs['growth']), [0, 1, 2])
    np.testing.assert_array_equal(np.flatnonzero(legs['value']), [7, 8, 9])
    assert legs['small'].sum() == pytest.approx(1.0)


def test_factor_returns_are_leg_differences(make_panel):
    factors = build_factor_portfolios(_sorted_panel(make_panel))
    assert np.all(np.isnan(factors.factor_returns[0]))
    assert factors.factor_returns[1, 0] == pytest.approx(0.05)
    assert factors.factor_returns[1, 1] == pytest.approx(0.07)


def test_size_ties_break_by_asset_id(make_panel):
    panel = make_panel(np.ones((2, 10)), mv=np.full((2, 10), 7.0))
    legs = leg_weights(panel, 1)
    np.testing.assert_array_equal(np.flatnonzero(legs['small']), [0, 1, 2, 3, 4])


def test_size_factor_hand_example(make_panel):
    prices = np.array([[1.0, 1.0, 1.0, 1.0], [1.02, 1.04, 1.00, 1.02]])
    factors = build_factor_portfolios(make_panel(prices))
    assert factors.factor_returns[1, 0] == pytest.approx(0.02)
    # floor(0.3 * 4) = 1 asset per value leg is too few
    assert np.isnan(factors.factor_returns[1, 1])


def test_single_asset_legs_leave_factor_undefined(make_panel):
    prices = np.array([[1.0, 1.0], [1.05, 1.01], [1.06, 1.03]])
    panel = make_panel(prices)
    assert leg_weights(panel, 1)['small'] is None
    assert np.all(np.isnan(build_factor_portfolios(panel).factor_returns[:, 0]))

    relaxed = build_factor_portfolios(panel, min_leg=1)
    assert relaxed.factor_returns[1, 0] == pytest.approx(0.04)


def test_single_asset_leaves_factor_undefined(make_panel):
    factors = build_factor_portfolios(make_panel(np.array([[1.0], [1.1], [1.2]])))
    assert not factors.available.any()


def test_factor_portfolios_ignore_future_rows(small_market):
    panel, _, _ = small_market
    full = build_factor_portfolios(panel)
    for k in (30, 77, panel.T):
        part = build_factor_portfolios(panel.truncate(k))
        np.testing.assert_array_equal(part.factor_returns, full.factor_returns[:k])


def test_investible_universe_takes_largest_available(make_panel):
    mv = np.tile([5.0, 1.0, 4.0, 2.0, 3.0], (2, 1))
    panel = make_panel(np.ones((2, 5)), mv=mv)
    np.testing.assert_array_equal(investible_universe(panel, 1, 3), [0, 2, 4])

    prices = np.ones((2, 5))
    prices[1, 0] = np.nan
    panel = make_panel(prices, mv=mv)
    np.testing.assert_array_equal(investible_universe(panel, 1, 3), [2, 3, 4])
    assert len(investible_universe(panel, 0, 3)) == 0
