"""
Panel data for the online portfolio algorithm.

Implements:
- CSV ingestion into an aligned period × asset panel with an availability mask
- The missing-price rule (no return into or out of a price gap)
- Momentum characteristics (quarterly MOMS, annual MOML)
- Size (SMB) and value (HML) factor-mimicking portfolios
- The time-varying investible universe
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from ..errors import DataError, PanelFormatError

logger = logging.getLogger(__name__)

BASE_CHARACTERISTICS = ('BVTP', 'MV')
MOMENTUM_WINDOWS = {'MOMS': 13, 'MOML': 52}
FACTOR_NAMES = ('SMB', 'HML')


def _frozen(array) -> np.ndarray:
    out = np.array(array, dtype=float, copy=True)
    out.setflags(write=False)
    return out


# ============================================================================
# DOMAIN TYPES
# ============================================================================

@dataclass(frozen=True)
class AssetPanel:
    """
    Aligned period × asset data. Immutable; safe to share across backtests.

    Cells with available=False hold NaN in returns and excess_returns and must
    never enter an estimate; consumers mask with `available`, not with isnan.

    Attributes:
        dates: Period stamps (weekly), length T
        asset_ids: Asset identifiers, sorted, length N
        prices: T×N prices (NaN where missing)
        returns: T×N simple total returns
        excess_returns: T×N returns minus rf
        characteristics: T×N×M characteristic values
        char_names: Names of the M characteristics
        available: T×N boolean mask
        rf: Length-T risk-free simple return per period
        macro: T×K information variables (K may be 0)
    """
    dates: pd.DatetimeIndex
    asset_ids: tuple
    prices: np.ndarray
    returns: np.ndarray
    excess_returns: np.ndarray
    characteristics: np.ndarray
    char_names: tuple
    available: np.ndarray
    rf: np.ndarray
    macro: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    @property
    def T(self) -> int:
        return len(self.dates)

    @property
    def N(self) -> int:
        return len(self.asset_ids)

    @property
    def K(self) -> int:
        return self.macro.shape[1] if self.macro.ndim == 2 else 0

    def char(self, name: str) -> np.ndarray:
        """T×N slice of one characteristic."""
        try:
            m = self.char_names.index(name)
        except ValueError:
            raise DataError(f"characteristic {name!r} not in panel {self.char_names}") from None
        return self.characteristics[:, :, m]

    def with_characteristics(self, names: Sequence[str], values: Sequence[np.ndarray]) -> "AssetPanel":
        """Copy with characteristics added or overwritten."""
        names_out = list(self.char_names)
        stack = [self.characteristics[:, :, m] for m in range(len(names_out))]
        for name, value in zip(names, values):
            if name in names_out:
                stack[names_out.index(name)] = np.asarray(value, dtype=float)
            else:
                names_out.append(name)
                stack.append(np.asarray(value, dtype=float))
        return replace(self, characteristics=_frozen(np.stack(stack, axis=2)), char_names=tuple(names_out))

    def truncate(self, end: int) -> "AssetPanel":
        """Prefix of the first `end` periods."""
        if not 0 < end <= self.T:
            raise IndexError(f"truncate end {end} outside (0, {self.T}]")
        macro = self.macro[:end] if self.K else np.zeros((end, 0))
        return AssetPanel(
            dates=self.dates[:end],
            asset_ids=self.asset_ids,
            prices=_frozen(self.prices[:end]),
            returns=_frozen(self.returns[:end]),
            excess_returns=_frozen(self.excess_returns[:end]),
            characteristics=_frozen(self.characteristics[:end]),
            char_names=self.char_names,
            available=_frozen_bool(self.available[:end]),
            rf=_frozen(self.rf[:end]),
            macro=_frozen(macro),
        )


def _frozen_bool(array) -> np.ndarray:
    out = np.array(array, dtype=bool, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class FactorSeries:
    """
    Factor-mimicking portfolio returns.

    Attributes:
        factor_returns: T×P returns (NaN where a leg was too small)
        names: Factor names
        breakpoints: T×3 sort thresholds (size split, value low, value high)
    """
    factor_returns: np.ndarray
    names: tuple = FACTOR_NAMES
    breakpoints: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    @property
    def P(self) -> int:
        return self.factor_returns.shape[1]

    @property
    def available(self) -> np.ndarray:
        """Length-T mask of periods where every factor return is defined."""
        return np.all(np.isfinite(self.factor_returns), axis=1)

    def truncate(self, end: int) -> "FactorSeries":
        return FactorSeries(_frozen(self.factor_returns[:end]), self.names, _frozen(self.breakpoints[:end]))


# ============================================================================
# CONSTRUCTION
# ============================================================================

def panel_from_arrays(
    dates,
    asset_ids: Sequence[str],
    prices: np.ndarray,
    bvtp: np.ndarray,
    mv: np.ndarray,
    rf: np.ndarray,
    macro: Optional[np.ndarray] = None,
) -> AssetPanel:
    """
    Build a panel from wide arrays and apply the missing-price rule.

    A return at t needs prices at t and t−1, so a missing price at t makes
    periods t and t+1 unavailable. The first period never has a return.

    Args:
        dates: Length-T period stamps
        asset_ids: Length-N identifiers (any order; sorted here)
        prices: T×N prices, NaN where missing
        bvtp: T×N book-to-price
        mv: T×N market value (non-positive values are masked)
        rf: Length-T risk-free returns
        macro: Optional T×K information variables

    Returns:
        AssetPanel with characteristics ('BVTP', 'MV')
    """
    dates = pd.DatetimeIndex(dates)
    prices = np.asarray(prices, dtype=float)
    T, N = prices.shape
    if len(dates) != T or len(asset_ids) != N:
        raise DataError(f"dimension mismatch: {len(dates)} dates, {len(asset_ids)} assets, prices {prices.shape}")
    rf = np.asarray(rf, dtype=float)
    if rf.shape != (T,) or not np.all(np.isfinite(rf)):
        raise DataError("risk-free series must be finite with one value per period")
    if T > 1 and not np.all(np.diff(dates.asi8) > 0):
        raise DataError("dates must be strictly increasing")

    order = np.argsort(np.asarray(asset_ids, dtype=str), kind="stable")
    ids = tuple(str(asset_ids[i]) for i in order)
    prices = prices[:, order]
    bvtp = np.asarray(bvtp, dtype=float)[:, order]
    mv = np.array(mv, dtype=float)[:, order]

    bad_mv = np.isfinite(mv) & (mv <= 0)
    if bad_mv.any():
        logger.warning("Masking %d non-positive MV cells", int(bad_mv.sum()))
        mv[bad_mv] = np.nan

    has_price = np.isfinite(prices) & (prices > 0)
    available = np.zeros((T, N), dtype=bool)
    available[1:] = has_price[1:] & has_price[:-1]

    returns = np.full((T, N), np.nan)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = prices[1:] / prices[:-1] - 1.0
    returns[1:][available[1:]] = ratio[available[1:]]
    excess = np.where(available, returns - rf[:, None], np.nan)

    if macro is None:
        macro = np.zeros((T, 0))
    macro = np.asarray(macro, dtype=float)
    if macro.ndim != 2 or macro.shape[0] != T:
        raise DataError(f"macro must be T×K, got {macro.shape}")

    return AssetPanel(
        dates=dates,
        asset_ids=ids,
        prices=_frozen(prices),
        returns=_frozen(returns),
        excess_returns=_frozen(excess),
        characteristics=_frozen(np.stack([bvtp, mv], axis=2)),
        char_names=BASE_CHARACTERISTICS,
        available=_frozen_bool(available),
        rf=_frozen(rf),
        macro=_frozen(macro),
    )


# ============================================================================
# CSV INGESTION
# ============================================================================

def _read_csv(path, columns: Sequence[str]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: file not found")
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.ParserError as exc:
        raise PanelFormatError(str(path), 1, f"unreadable CSV ({exc})") from exc
    df.columns = [c.strip().lower() for c in df.columns]
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise PanelFormatError(str(path), 1, f"missing column(s) {missing}")
    return df[list(columns)].apply(lambda s: s.str.strip())


def _parse_dates(df: pd.DataFrame, path) -> pd.Series:
    parsed = pd.to_datetime(df['date'], format="ISO8601", errors="coerce")
    bad = parsed.isna()
    if bad.any():
        i = int(np.flatnonzero(bad.to_numpy())[0])
        raise PanelFormatError(str(path), i + 2, f"invalid date {df['date'].iloc[i]!r}")
    return parsed


def _parse_numbers(df: pd.DataFrame, column: str, path, allow_empty: bool) -> np.ndarray:
    raw = df[column]
    values = pd.to_numeric(raw.where(raw != "", None), errors="coerce").to_numpy(dtype=float)
    empty = (raw == "").to_numpy()
    bad = (~empty & ~np.isfinite(values)) | (empty & (not allow_empty))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise PanelFormatError(str(path), i + 2, f"invalid {column} {raw.iloc[i]!r}")
    return values


def _check_long_order(dates: pd.Series, assets: pd.Series, path):
    steps = np.diff(dates.to_numpy().astype("datetime64[ns]").astype(np.int64))
    if (steps < 0).any():
        i = int(np.flatnonzero(steps < 0)[0]) + 1
        raise DataError(f"{path}:{i + 2}: dates are not in increasing order")
    dup = pd.DataFrame({'d': dates, 'a': assets}).duplicated()
    if dup.any():
        i = int(np.flatnonzero(dup.to_numpy())[0])
        raise PanelFormatError(str(path), i + 2, "duplicate (date, asset_id) row")


def load_panel(prices_path, characteristics_path, rf_path) -> AssetPanel:
    """
    Load the three input CSVs into an AssetPanel.

    Args:
        prices_path: CSV with columns date, asset_id, price
        characteristics_path: CSV with columns date, asset_id, bvtp, mv
        rf_path: CSV with columns date, rf (one row per period, defines the calendar)

    Returns:
        AssetPanel with characteristics ('BVTP', 'MV')

    Raises:
        PanelFormatError: malformed row (message carries path and line)
        DataError: missing file, non-monotone dates, dates absent from rf.csv
    """
    rf_df = _read_csv(rf_path, ['date', 'rf'])
    rf_dates = _parse_dates(rf_df, rf_path)
    rf = _parse_numbers(rf_df, 'rf', rf_path, allow_empty=False)
    steps = np.diff(rf_dates.to_numpy().astype("datetime64[ns]").astype(np.int64))
    if (steps <= 0).any():
        i = int(np.flatnonzero(steps <= 0)[0]) + 1
        raise DataError(f"{rf_path}:{i + 2}: dates must be strictly increasing")
    calendar = pd.DatetimeIndex(rf_dates)

    px_df = _read_csv(prices_path, ['date', 'asset_id', 'price'])
    px_dates = _parse_dates(px_df, prices_path)
    px = _parse_numbers(px_df, 'price', prices_path, allow_empty=True)
    nonpositive = np.isfinite(px) & (px <= 0)
    if nonpositive.any():
        i = int(np.flatnonzero(nonpositive)[0])
        raise PanelFormatError(str(prices_path), i + 2, f"price must be positive, got {px[i]}")
    _check_long_order(px_dates, px_df['asset_id'], prices_path)

    ch_df = _read_csv(characteristics_path, ['date', 'asset_id', 'bvtp', 'mv'])
    ch_dates = _parse_dates(ch_df, characteristics_path)
    bvtp = _parse_numbers(ch_df, 'bvtp', characteristics_path, allow_empty=True)
    mv = _parse_numbers(ch_df, 'mv', characteristics_path, allow_empty=True)
    _check_long_order(ch_dates, ch_df['asset_id'], characteristics_path)

    for label, dates in (('prices', px_dates), ('characteristics', ch_dates)):
        outside = ~dates.isin(calendar)
        if outside.any():
            i = int(np.flatnonzero(outside.to_numpy())[0])
            raise DataError(f"{label} row {i + 2}: date {dates.iloc[i].date()} missing from {rf_path}")

    asset_ids = sorted(set(px_df['asset_id']) | set(ch_df['asset_id']))
    wide = lambda d, a, v: (
        pd.DataFrame({'date': d, 'asset_id': a, 'v': v})
        .pivot(index='date', columns='asset_id', values='v')
        .reindex(index=calendar, columns=asset_ids)
        .to_numpy(dtype=float)
    )
    prices = wide(px_dates, px_df['asset_id'], px)
    bvtp_w = wide(ch_dates, ch_df['asset_id'], bvtp)
    mv_w = wide(ch_dates, ch_df['asset_id'], mv)

    panel = panel_from_arrays(calendar, asset_ids, prices, bvtp_w, mv_w, rf)
    logger.info("Loaded panel: %d periods × %d assets, %.1f%% available",
                panel.T, panel.N, 100.0 * panel.available.mean() if panel.available.size else 0.0)
    return panel


def write_panel_csv(panel: AssetPanel, directory) -> dict:
    """
    Persist a panel in the input schema.

    Args:
        panel: Panel to write (BVTP and MV are written; momentum is derived on load)
        directory: Output directory (created if needed)

    Returns:
        dict: Paths to created files
    """
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    date_str = panel.dates.strftime("%Y-%m-%d")
    grid = pd.MultiIndex.from_product([date_str, panel.asset_ids], names=['date', 'asset_id'])

    prices = pd.DataFrame({'price': panel.prices.reshape(-1)}, index=grid).reset_index()
    chars = pd.DataFrame({
        'bvtp': panel.char('BVTP').reshape(-1),
        'mv': panel.char('MV').reshape(-1),
    }, index=grid).reset_index()
    rf = pd.DataFrame({'date': date_str, 'rf': panel.rf})

    created = {
        'prices': out / "prices.csv",
        'characteristics': out / "characteristics.csv",
        'rf': out / "rf.csv",
    }
    prices.to_csv(created['prices'], index=False, float_format="%.12g")
    chars.to_csv(created['characteristics'], index=False, float_format="%.12g")
    rf.to_csv(created['rf'], index=False, float_format="%.12g")
    return {k: str(v) for k, v in created.items()}


# ============================================================================
# FEATURES
# ============================================================================

def compute_momentum(panel: AssetPanel) -> AssetPanel:
    """
    Add MOMS (13-week) and MOML (52-week) cumulative returns.

    MOM[t] = p[t] / p[t−w] − 1, defined only when all w returns ending at t
    are available; otherwise NaN.

    Args:
        panel: Panel with prices

    Returns:
        New panel with 'MOMS' and 'MOML' characteristics
    """
    avail = pd.DataFrame(panel.available.astype(float))
    values = []
    for name, window in MOMENTUM_WINDOWS.items():
        complete = (avail.rolling(window, min_periods=window).sum() == window).to_numpy()
        mom = np.full((panel.T, panel.N), np.nan)
        if panel.T > window:
            with np.errstate(invalid="ignore", divide="ignore"):
                ratio = panel.prices[window:] / panel.prices[:-window] - 1.0
            ok = complete[window:]
            mom[window:][ok] = ratio[ok]
        values.append(mom)
    return panel.with_characteristics(list(MOMENTUM_WINDOWS), values)


def characteristic_exposures(
    panel: AssetPanel,
    t: int,
    names: Sequence[str],
    mask: np.ndarray,
    standardize: bool = True,
    log_size: bool = True,
) -> np.ndarray:
    """
    Cross-sectional exposures θ at period t.

    Args:
        panel: Asset panel
        t: Period index
        names: Characteristics to use
        mask: Length-N rows to include
        standardize: Z-score each column over included rows
        log_size: Enter MV as log MV

    Returns:
        N×M matrix, NaN outside `mask` or where any characteristic is missing
    """
    cols = []
    for name in names:
        x = np.array(panel.char(name)[t], dtype=float)
        if name == 'MV' and log_size:
            with np.errstate(invalid="ignore", divide="ignore"):
                x = np.log(x)
        cols.append(x)
    theta = np.stack(cols, axis=1) if cols else np.zeros((panel.N, 0))
    rows = np.asarray(mask, dtype=bool) & np.all(np.isfinite(theta), axis=1)
    theta[~rows] = np.nan
    if standardize and rows.sum() > 1:
        sub = theta[rows]
        mean = sub.mean(axis=0)
        std = sub.std(axis=0)
        std[std < 1e-12] = np.inf
        theta[rows] = (sub - mean) / std
    return theta


def _legs(order: np.ndarray, n_leg: int):
    if n_leg < 1:
        return None, None
    return order[:n_leg], order[-n_leg:]


def leg_weights(
    panel: AssetPanel,
    t: int,
    size_fraction: float = 0.5,
    value_fraction: float = 0.3,
    min_leg: int = 2,
) -> dict:
    """
    Equal-weight leg portfolios formed for period t.

    Sorts use characteristics at t−1 over assets whose return at t is available;
    ties are broken by ascending asset id.

    Args:
        panel: Asset panel
        t: Period of the leg returns (t ≥ 1)
        size_fraction: Share of eligible assets in each size leg
        value_fraction: Share of eligible assets in each value leg
        min_leg: Fewest assets in an admissible leg

    Returns:
        dict with 'small', 'big', 'value', 'growth' weight vectors (None when a
        leg is too small) and 'breakpoints' (size split, value low, value high)
    """
    N = panel.N
    out = {'small': None, 'big': None, 'value': None, 'growth': None,
           'breakpoints': np.full(3, np.nan)}
    if t < 1:
        return out
    mv = panel.char('MV')[t - 1]
    bvtp = panel.char('BVTP')[t - 1]
    ids = np.arange(N)

    def weights(idx):
        w = np.zeros(N)
        w[idx] = 1.0 / len(idx)
        return w

    eligible = panel.available[t] & np.isfinite(mv)
    idx = ids[eligible]
    n_leg = int(np.floor(size_fraction * len(idx)))
    if n_leg >= min_leg and n_leg >= 1:
        order = idx[np.lexsort((idx, mv[idx]))]
        small, big = _legs(order, n_leg)
        out['small'], out['big'] = weights(small), weights(big)
        out['breakpoints'][0] = mv[small[-1]]

    eligible = panel.available[t] & np.isfinite(bvtp)
    idx = ids[eligible]
    n_leg = int(np.floor(value_fraction * len(idx)))
    if n_leg >= min_leg and n_leg >= 1:
        order = idx[np.lexsort((idx, bvtp[idx]))]
        growth, value = _legs(order, n_leg)
        out['growth'], out['value'] = weights(growth), weights(value)
        out['breakpoints'][1] = bvtp[growth[-1]]
        out['breakpoints'][2] = bvtp[value[0]]
    return out


def build_factor_portfolios(
    panel: AssetPanel,
    size_fraction: float = 0.5,
    value_fraction: float = 0.3,
    min_leg: int = 2,
) -> FactorSeries:
    """
    SMB and HML factor-mimicking portfolio returns.

    SMB_t = mean return of the small-MV leg − mean return of the big-MV leg.
    HML_t = mean return of the top-BVTP leg − mean return of the bottom-BVTP leg.

    Args:
        panel: Asset panel
        size_fraction: Share of eligible assets per size leg (median split)
        value_fraction: Share of eligible assets per value leg (30/70 breakpoints)
        min_leg: Fewest assets in an admissible leg; smaller legs leave the factor undefined

    Returns:
        FactorSeries with NaN for periods where a leg is too small
    """
    factors = np.full((panel.T, 2), np.nan)
    breaks = np.full((panel.T, 3), np.nan)
    for t in range(1, panel.T):
        legs = leg_weights(panel, t, size_fraction, value_fraction, min_leg)
        r = np.where(panel.available[t], panel.returns[t], 0.0)
        if legs['small'] is not None:
            factors[t, 0] = legs['small'] @ r - legs['big'] @ r
        if legs['value'] is not None:
            factors[t, 1] = legs['value'] @ r - legs['growth'] @ r
        breaks[t] = legs['breakpoints']
    missing = int(np.sum(~np.all(np.isfinite(factors[1:]), axis=1)))
    if missing:
        logger.debug("Factor returns undefined for %d of %d periods", missing, panel.T - 1)
    return FactorSeries(_frozen(factors), FACTOR_NAMES, _frozen(breaks))


def investible_universe(panel: AssetPanel, t: int, size: int = 100) -> np.ndarray:
    """
    The largest available assets at period t.

    Args:
        panel: Asset panel
        t: Period index
        size: Universe size U

    Returns:
        Sorted array of asset indices (up to U) ranked by MV, ties by asset id
    """
    if not 0 <= t < panel.T:
        raise IndexError(f"period {t} outside [0, {panel.T})")
    mv = panel.char('MV')[t]
    ok = panel.available[t] & np.isfinite(mv)
    idx = np.flatnonzero(ok)
    if len(idx) == 0:
        return idx
    order = idx[np.lexsort((idx, -mv[idx]))]
    return np.sort(order[:size])
