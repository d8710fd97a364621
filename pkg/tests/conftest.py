"""
Shared fixtures: small synthetic markets and fast hyper-parameters.
"""

import numpy as np
import pandas as pd
import pytest

from online_portfolio.model.data import panel_from_arrays
from online_portfolio.model.hyperparams import HyperParams
from online_portfolio.model.synth import GeneratorSpec, generate


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_spec():
    return GeneratorSpec(n_assets=20, n_periods=160, seed=3)


@pytest.fixture(scope="session")
def small_market(small_spec):
    """(panel, factors, truth) of a 20-asset, 160-week market."""
    return generate(small_spec)


@pytest.fixture(scope="session")
def fast_hp():
    return HyperParams(burn_in=20, universe_size=20, gamma_s=10.0, gamma_a=10.0)


@pytest.fixture
def make_panel():
    """Build a panel from a price matrix with default characteristics."""

    def _make(prices, bvtp=None, mv=None, rf=0.0, ids=None, start="2000-01-07"):
        prices = np.asarray(prices, dtype=float)
        T, N = prices.shape
        dates = pd.date_range(start, periods=T, freq="W-FRI")
        ids = ids if ids is not None else [f"A{i:02d}" for i in range(N)]
        if bvtp is None:
            bvtp = np.tile(np.linspace(0.5, 1.5, N), (T, 1))
        if mv is None:
            mv = np.tile(np.arange(1.0, N + 1.0) * 100.0, (T, 1))
        rf = np.broadcast_to(np.asarray(rf, dtype=float), (T,)).copy()
        return panel_from_arrays(dates, ids, prices, np.asarray(bvtp, dtype=float), np.asarray(mv, dtype=float), rf)

    return _make
