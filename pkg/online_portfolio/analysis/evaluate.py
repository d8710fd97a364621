"""
Calibration and overfitting-aware evaluation.

Implements:
- Expanding-window walk-forward splits
- Hyper-parameter grid search (joblib-parallel, one online pass per configuration)
- Probabilistic, deflated and haircut Sharpe ratios
- Combinatorially symmetric cross-validation (CSCV) probability of backtest overfitting
- Regression of out-of-sample on in-sample Sharpe ratios
- The end-to-end calibration run producing an EvalReport
"""

import hashlib
import itertools
import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import stats
from scipy.stats import norm, rankdata
from tqdm import tqdm

from ..errors import (
    ConfigError,
    DegenerateRegressionError,
    NumericalError,
    OnlinePortfolioError,
    SplitError,
)
from ..model.active_models import ACTIVE_MODELS, validate_model_ids
from ..model.backtest import BacktestResult, run_backtest, run_benchmark, sharpe_ratio
from ..model.data import AssetPanel, FactorSeries, build_factor_portfolios
from ..model.hyperparams import HyperParams

logger = logging.getLogger(__name__)


# ============================================================================
# SHARPE RATIO STATISTICS
# ============================================================================

def sharpe_moments(returns) -> tuple:
    """
    Sharpe ratio and higher moments of a per-period excess return series.

    Returns:
        (sr, skew, kurt, T) with kurt non-excess (3 for a normal)
    """
    x = np.asarray(returns, dtype=float)
    sr = sharpe_ratio(x)
    if np.std(x) == 0:
        return sr, 0.0, 3.0, len(x)
    return sr, float(stats.skew(x)), float(stats.kurtosis(x, fisher=False)), len(x)


def probabilistic_sr(sr_hat: float, sr_benchmark: float, T: int, skew: float = 0.0, kurt: float = 3.0) -> float:
    """
    Probability that the true Sharpe ratio exceeds sr_benchmark.

    PSR = Φ((ŝr − sr*)·√(T−1) / √(1 − skew·ŝr + (kurt−1)/4·ŝr²))

    Args:
        sr_hat: Observed per-period Sharpe ratio
        sr_benchmark: Benchmark Sharpe ratio
        T: Number of observations
        skew: Skewness of returns
        kurt: Kurtosis of returns (non-excess)

    Raises:
        NumericalError: T < 2 or non-positive variance term
    """
    if T < 2:
        raise NumericalError(f"PSR needs T >= 2, got {T}")
    denom = 1.0 - skew * sr_hat + (kurt - 1.0) / 4.0 * sr_hat ** 2
    if not denom > 0:
        raise NumericalError(f"PSR variance term {denom:.6g} is not positive")
    return float(norm.cdf((sr_hat - sr_benchmark) * np.sqrt(T - 1) / np.sqrt(denom)))


def expected_max_sr(n_trials: int, var_trial_sr: float) -> float:
    """
    Expected maximum Sharpe ratio of n_trials unskilled trials.

    SR₀ = √V·((1−γ)·Φ⁻¹(1 − 1/n) + γ·Φ⁻¹(1 − 1/(n·e))), γ the Euler–Mascheroni constant.
    """
    if n_trials < 1:
        raise ConfigError(f"must be >= 1, got {n_trials}", field='n_trials')
    if var_trial_sr < 0:
        raise ConfigError(f"must be >= 0, got {var_trial_sr}", field='var_trial_sr')
    if n_trials == 1 or var_trial_sr == 0:
        return 0.0
    g = np.euler_gamma
    return float(np.sqrt(var_trial_sr) * ((1 - g) * norm.ppf(1 - 1.0 / n_trials) + g * norm.ppf(1 - 1.0 / (n_trials * np.e))))


def deflated_sr(sr_hat: float, T: int, skew: float, kurt: float, n_trials: int, var_trial_sr: float) -> float:
    """PSR against the expected maximum Sharpe ratio of n_trials trials."""
    return probabilistic_sr(sr_hat, expected_max_sr(n_trials, var_trial_sr), T, skew, kurt)


def haircut_sr(sr_hat: float, T: int, n_trials: int, correction: str = "bonferroni") -> float:
    """
    Sharpe ratio adjusted for multiple testing.

    t = ŝr·√(T−1), two-sided p-value, Bonferroni p' = min(1, p·n), mapped back to
    a Sharpe ratio; 0 when p' reaches 1.
    """
    if correction != "bonferroni":
        raise ConfigError(f"unsupported correction {correction!r}", field='correction')
    if T < 2 or n_trials < 1:
        raise ConfigError(f"need T >= 2 and n_trials >= 1, got T={T}, n_trials={n_trials}")
    if n_trials == 1:
        return float(sr_hat)
    t_stat = abs(sr_hat) * np.sqrt(T - 1)
    p_adj = min(1.0, 2.0 * norm.sf(t_stat) * n_trials)
    if p_adj >= 1.0:
        return 0.0
    return float(np.sign(sr_hat) * norm.isf(p_adj / 2.0) / np.sqrt(T - 1))


# ============================================================================
# WALK-FORWARD SPLITS
# ============================================================================

def walk_forward_splits(T: int, n_folds: int, min_train: int) -> list:
    """
    Expanding-window splits.

    Fold k trains on [0, min_train + k·step) and validates on the next step
    periods; the last fold absorbs the remainder.

    Returns:
        List of (train_range, validate_range)

    Raises:
        SplitError: T < min_train + n_folds or non-positive sizes
    """
    if n_folds < 1 or min_train < 1:
        raise SplitError(f"need n_folds >= 1 and min_train >= 1, got {n_folds}, {min_train}")
    if T < min_train + n_folds:
        raise SplitError(f"T={T} too short for min_train={min_train} and {n_folds} folds")
    step = (T - min_train) // n_folds
    splits = []
    for k in range(n_folds):
        lo = min_train + k * step
        hi = T if k == n_folds - 1 else lo + step
        splits.append((range(0, lo), range(lo, hi)))
    return splits


# ============================================================================
# GRID
# ============================================================================

HP_FIELDS = {f.name for f in fields(HyperParams)}


@dataclass
class GridSpec:
    """
    Cartesian grid of hyper-parameters.

    Attributes:
        axes: Field name → candidate values (HyperParams fields except
              active_model and burn_in)
        active_models: Active model ids (outermost loop)
        base: Values of the fields not on an axis
    """
    axes: dict = field(default_factory=dict)
    active_models: list = field(default_factory=lambda: ['full'])
    base: HyperParams = field(default_factory=HyperParams)

    def __post_init__(self):
        for name, values in self.axes.items():
            if name not in HP_FIELDS:
                raise ConfigError(f"unknown axis {name!r}", field='grid.axes')
            if name in ('active_model', 'burn_in'):
                raise ConfigError(f"{name} cannot be an axis", field='grid.axes')
            if len(values) == 0:
                raise ConfigError(f"axis {name!r} is empty", field='grid.axes')
        if not validate_model_ids(self.active_models):
            raise ConfigError(f"active_models must be drawn from {sorted(ACTIVE_MODELS)}", field='grid.active_models')

    @property
    def size(self) -> int:
        n = len(self.active_models)
        for values in self.axes.values():
            n *= len(values)
        return n

    def configs(self):
        """HyperParams in product order, active model outermost."""
        names = list(self.axes)
        for model_id in self.active_models:
            for values in itertools.product(*(self.axes[n] for n in names)):
                yield self.base.replace(active_model=model_id, **dict(zip(names, values)))

    @classmethod
    def full_scale(cls, base: Optional[HyperParams] = None) -> "GridSpec":
        """2700 configurations per active model over all four models."""
        return cls(
            axes={
                'lambda_s': [0.95, 0.97, 0.98, 0.99, 0.995],
                'lambda_a': [0.80, 0.85, 0.90, 0.95, 0.98],
                'kappa_s': [0.0, 0.5, 1.0],
                'kappa_a': [0.0, 0.5, 1.0],
                'gamma_s': [10.0, 50.0, 100.0],
                'gamma_a': [10.0, 50.0, 100.0, 200.0],
            },
            active_models=list(ACTIVE_MODELS),
            base=base or HyperParams(),
        )


def full_scale_grid(base: Optional[HyperParams] = None) -> GridSpec:
    return GridSpec.full_scale(base)


@dataclass
class SplitSpec:
    """
    Attributes:
        is_fraction: Share of periods in the in-sample segment (60/40 split)
        n_folds: Walk-forward folds within the in-sample trading periods
        min_train: Trading periods before the first validation fold (half when None)
        cscv_blocks: Even number S of CSCV blocks
    """
    is_fraction: float = 0.6
    n_folds: int = 4
    min_train: Optional[int] = None
    cscv_blocks: int = 16

    def __post_init__(self):
        if not 0 < self.is_fraction < 1:
            raise SplitError(f"must be in (0, 1), got {self.is_fraction}", field='is_fraction')
        if self.cscv_blocks < 2 or self.cscv_blocks % 2:
            raise SplitError(f"must be even and >= 2, got {self.cscv_blocks}", field='cscv_blocks')


# ============================================================================
# GRID SEARCH
# ============================================================================

@dataclass
class TrialMatrix:
    """
    Per-period excess returns of every successful trial.

    Attributes:
        returns: T×n matrix, one column per configuration
        periods: Panel period of each row
        digests: Config digest of each column
        configs: HyperParams of each column
    """
    returns: np.ndarray
    periods: np.ndarray
    digests: list
    configs: list

    @property
    def n_trials(self) -> int:
        return self.returns.shape[1]

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.returns).tobytes())
        h.update(",".join(self.digests).encode())
        return h.hexdigest()[:12]

    def to_frame(self, dates=None) -> pd.DataFrame:
        index = pd.Index(self.periods, name='period') if dates is None else pd.DatetimeIndex(dates, name='date')
        return pd.DataFrame(self.returns, index=index, columns=self.digests)


@dataclass
class GridSearchResult:
    """
    Attributes:
        trials: In-sample TrialMatrix
        oos: Out-of-sample TrialMatrix (same columns)
        ranking: [(digest, mean validation SR)] best first
        table: One row per trial with axis values, fold SRs, IS/OOS SR, status
        failed: [(digest, error message)]
    """
    trials: TrialMatrix
    oos: TrialMatrix
    ranking: list
    table: pd.DataFrame
    failed: list


def _fold_sr(excess: np.ndarray) -> float:
    try:
        return sharpe_ratio(excess)
    except (OnlinePortfolioError, ArithmeticError):
        return np.nan


def _run_trial(panel, factors, hp, is_periods, oos_periods, folds):
    """One configuration: a full online pass, then in-sample and out-of-sample slices."""
    try:
        result = run_backtest(panel, factors, hp)
    except (OnlinePortfolioError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        return {'hp': hp, 'error': f"{type(exc).__name__}: {exc}"}
    by_period = pd.Series(result.excess_returns, index=result.periods)
    is_excess = by_period.reindex(is_periods).to_numpy()
    oos_excess = by_period.reindex(oos_periods).to_numpy()
    if not (np.all(np.isfinite(is_excess)) and np.all(np.isfinite(oos_excess))):
        return {'hp': hp, 'error': "non-finite or missing period returns"}
    fold_srs = [_fold_sr(by_period.reindex(list(val)).to_numpy()) for val in folds]
    if not np.all(np.isfinite(fold_srs)):
        return {'hp': hp, 'error': "undefined validation Sharpe ratio"}
    return {
        'hp': hp,
        'error': None,
        'is': is_excess,
        'oos': oos_excess,
        'folds': fold_srs,
        'turnover_is': float(pd.Series(result.turnover_series, index=result.periods).reindex(is_periods).mean()),
        'turnover_oos': float(pd.Series(result.turnover_series, index=result.periods).reindex(oos_periods).mean()),
    }


def grid_search(
    panel: AssetPanel,
    factors: Optional[FactorSeries],
    grid: GridSpec,
    splits: Sequence,
    is_periods: Sequence[int],
    oos_periods: Sequence[int] = (),
    parallel: int = 1,
    progress: bool = False,
) -> GridSearchResult:
    """
    Evaluate every configuration of a grid.

    Each configuration runs once online over the whole panel; walk-forward
    validation blocks are read from that single pass, which only ever used data
    stamped before each decision.

    Args:
        panel: Asset panel
        factors: Factor returns (built once when None)
        grid: Grid definition
        splits: (train_range, validate_range) pairs of panel periods
        is_periods: Panel periods forming the in-sample trial matrix
        oos_periods: Panel periods recorded out of sample (never used for ranking)
        parallel: Number of joblib workers
        progress: Show a tqdm bar

    Returns:
        GridSearchResult ranked by mean validation SR, ties broken by digest
    """
    if factors is None:
        factors = build_factor_portfolios(panel)
    is_periods = list(is_periods)
    oos_periods = list(oos_periods)
    folds = [val for _, val in splits]
    configs = list(grid.configs())
    logger.info("Grid search over %d configurations with %d worker(s)", len(configs), parallel)

    jobs = (delayed(_run_trial)(panel, factors, hp, is_periods, oos_periods, folds) for hp in configs)
    outputs = Parallel(n_jobs=parallel, return_as="generator")(jobs)
    if progress:
        outputs = tqdm(outputs, total=len(configs), desc="grid")

    rows, good, failed = [], [], []
    for out in outputs:
        hp = out['hp']
        row = {'digest': hp.digest(), 'active_model': hp.active_model}
        row.update({name: getattr(hp, name) for name in grid.axes})
        if out['error'] is not None:
            logger.warning("Trial %s failed: %s", row['digest'], out['error'])
            failed.append((row['digest'], out['error']))
            row.update({'status': 'failed', 'error': out['error']})
        else:
            row.update({
                'status': 'ok',
                'error': '',
                'mean_val_sr': float(np.mean(out['folds'])),
                'is_sr': _fold_sr(out['is']),
                'oos_sr': _fold_sr(out['oos']) if len(out['oos']) > 1 else np.nan,
                'turnover_is': out['turnover_is'],
                'turnover_oos': out['turnover_oos'],
            })
            for k, sr in enumerate(out['folds']):
                row[f'fold_{k}_sr'] = sr
            good.append(out)
        rows.append(row)

    table = pd.DataFrame(rows)
    ranked = sorted(good, key=lambda o: (-float(np.mean(o['folds'])), o['hp'].digest()))
    ranking = [(o['hp'].digest(), float(np.mean(o['folds']))) for o in ranked]

    def matrix(key, periods):
        cols = [o[key] for o in good]
        data = np.column_stack(cols) if cols else np.zeros((len(periods), 0))
        return TrialMatrix(data, np.asarray(periods, dtype=int), [o['hp'].digest() for o in good], [o['hp'] for o in good])

    if failed:
        logger.warning("%d of %d trials failed", len(failed), len(configs))
    return GridSearchResult(matrix('is', is_periods), matrix('oos', oos_periods), ranking, table, failed)


# ============================================================================
# PROBABILITY OF BACKTEST OVERFITTING
# ============================================================================

@dataclass
class PboResult:
    """
    Attributes:
        pbo: Share of combinations whose in-sample winner ranks at or below the
             out-of-sample median
        logits: Logit of the winner's relative out-of-sample rank per combination
        degenerate: True when PBO is undefined and reported as 0.5
        pairs: (in-sample SR, out-of-sample SR) of each combination's winner
        prob_oos_loss: Share of combinations whose winner has a negative OOS SR
        n_blocks: S
    """
    pbo: float
    logits: np.ndarray
    degenerate: bool
    pairs: np.ndarray
    prob_oos_loss: float
    n_blocks: int


def _block_sharpe(count, s1, s2) -> np.ndarray:
    mean = s1 / count
    var = np.maximum((s2 - count * mean ** 2) / np.maximum(count - 1, 1), 0.0)
    std = np.sqrt(var)
    with np.errstate(divide="ignore", invalid="ignore"):
        sr = np.where(std > 0, mean / std, np.sign(mean) * np.inf)
    return np.nan_to_num(sr, nan=0.0)


def cscv_pbo(M, S: int = 16) -> PboResult:
    """
    Combinatorially symmetric cross-validation.

    Rows of M are split into S contiguous blocks. For every choice of S/2 blocks
    as in-sample, the column with the best in-sample Sharpe ratio is ranked among
    all columns out of sample (midranks on ties); r = rank/(N+1) and
    λ = ln(r/(1−r)). PBO is the share of combinations with λ ≤ 0.

    Args:
        M: T×N returns (array or TrialMatrix)
        S: Even number of blocks, 2 ≤ S ≤ T

    Returns:
        PboResult (PBO 0.5 flagged degenerate for identical columns or N < 2)
    """
    X = np.asarray(M.returns if isinstance(M, TrialMatrix) else M, dtype=float)
    if X.ndim != 2:
        raise ConfigError(f"trial matrix must be 2-D, got shape {X.shape}")
    T, N = X.shape
    if S < 2 or S % 2 or S > T:
        raise ConfigError(f"S must be even with 2 <= S <= T={T}, got {S}", field='cscv_blocks')
    if N < 2 or np.all(X == X[:, :1]):
        logger.warning("CSCV degenerate (%d column(s)); PBO reported as 0.5", N)
        return PboResult(0.5, np.zeros(0), True, np.zeros((0, 2)), np.nan, S)

    blocks = np.array_split(np.arange(T), S)
    counts = np.array([len(b) for b in blocks], dtype=float)
    s1 = np.stack([X[b].sum(axis=0) for b in blocks])
    s2 = np.stack([(X[b] ** 2).sum(axis=0) for b in blocks])

    combos = list(itertools.combinations(range(S), S // 2))
    member = np.zeros((len(combos), S))
    for k, c in enumerate(combos):
        member[k, list(c)] = 1.0
    other = 1.0 - member

    is_sr = _block_sharpe((member @ counts)[:, None], member @ s1, member @ s2)
    oos_sr = _block_sharpe((other @ counts)[:, None], other @ s1, other @ s2)

    best = np.argmax(is_sr, axis=1)
    logits = np.empty(len(combos))
    for k in range(len(combos)):
        r = rankdata(oos_sr[k])[best[k]] / (N + 1.0)
        logits[k] = np.log(r / (1.0 - r))
    rows = np.arange(len(combos))
    pairs = np.column_stack([is_sr[rows, best], oos_sr[rows, best]])
    return PboResult(
        pbo=float(np.mean(logits <= 0)),
        logits=logits,
        degenerate=False,
        pairs=pairs,
        prob_oos_loss=float(np.mean(pairs[:, 1] < 0)),
        n_blocks=S,
    )


# ============================================================================
# IS/OOS REGRESSION
# ============================================================================

@dataclass
class RegressionResult:
    slope: float
    intercept: float
    r2: float
    n: int


def is_oos_regression(pairs) -> RegressionResult:
    """
    OLS of out-of-sample SR on in-sample SR: SR_OOS = a + b·SR_IS.

    Raises:
        DegenerateRegressionError: fewer than 3 pairs or constant SR_IS
    """
    data = np.asarray(pairs, dtype=float).reshape(-1, 2)
    data = data[np.all(np.isfinite(data), axis=1)]
    if len(data) < 3:
        raise DegenerateRegressionError(f"need at least 3 finite pairs, got {len(data)}")
    x, y = data[:, 0], data[:, 1]
    if np.var(x) <= 0:
        raise DegenerateRegressionError("in-sample Sharpe ratios have no variance")
    if np.var(y) <= 0:
        return RegressionResult(0.0, float(y[0]), 0.0, len(data))
    fit = stats.linregress(x, y)
    return RegressionResult(float(fit.slope), float(fit.intercept), float(fit.rvalue ** 2), len(data))


# ============================================================================
# CALIBRATION
# ============================================================================

@dataclass
class EvalReport:
    """
    Outcome of a calibration run.

    Attributes:
        table: Rows of (segment, strategy, sr, dsr or psr, turnover) for Algo/ND/Cap × IS/OOS
        selected_config: Winning HyperParams
        selected_digest: Its digest
        is_sr, oos_sr: Selected configuration's Sharpe ratios
        psr: OOS PSR of the selection against zero
        dsr: IS DSR of the selection
        hsr: IS haircut Sharpe ratio (Bonferroni)
        n_trials: Successful trials
        var_trial_sr: Cross-sectional variance of IS SRs across trials
        pbo: PboResult
        regression: CSCV winner pairs regression (None when degenerate)
        trial_regression: Per-configuration IS vs OOS regression (None when degenerate)
        trials: Grid table
        is_range, oos_range: Panel period ranges
        failed: Failed trials
    """
    table: list
    selected_config: HyperParams
    selected_digest: str
    is_sr: float
    oos_sr: float
    psr: float
    dsr: float
    hsr: float
    n_trials: int
    var_trial_sr: float
    pbo: PboResult
    regression: Optional[RegressionResult]
    trial_regression: Optional[RegressionResult]
    trials: pd.DataFrame
    is_range: tuple
    oos_range: tuple
    failed: list = field(default_factory=list)
    results: dict = field(default_factory=dict)
    trial_matrix: Optional[TrialMatrix] = None

    def to_dict(self) -> dict:
        """JSON-ready summary (report.json)."""
        reg = lambda r: None if r is None else asdict(r)
        return {
            'selected_digest': self.selected_digest,
            'selected_config': self.selected_config.to_dict(),
            'table': self.table,
            'is_sr': self.is_sr,
            'oos_sr': self.oos_sr,
            'psr_oos': self.psr,
            'dsr_is': self.dsr,
            'hsr_is': self.hsr,
            'n_trials': self.n_trials,
            'var_trial_sr': self.var_trial_sr,
            'pbo': self.pbo.pbo,
            'pbo_degenerate': self.pbo.degenerate,
            'prob_oos_loss': None if np.isnan(self.pbo.prob_oos_loss) else self.pbo.prob_oos_loss,
            'cscv_blocks': self.pbo.n_blocks,
            'regression': reg(self.regression),
            'trial_regression': reg(self.trial_regression),
            'is_range': list(self.is_range),
            'oos_range': list(self.oos_range),
            'failed': [{'digest': d, 'error': e} for d, e in self.failed],
        }


def split_periods(T: int, burn_in: int, split: SplitSpec):
    """
    In-sample and out-of-sample trading periods plus walk-forward folds.

    Burn-in happens inside the in-sample segment.

    Returns:
        (is_periods, oos_periods, splits) with splits in panel periods
    """
    is_end = int(np.floor(split.is_fraction * T))
    first = burn_in + 1
    if is_end - first < 2 or T - is_end < 2:
        raise SplitError(f"{T} periods with burn-in {burn_in} leave no room for a {split.is_fraction:.0%} split")
    is_periods = list(range(first, is_end))
    oos_periods = list(range(is_end, T))
    n_is = len(is_periods)
    min_train = split.min_train if split.min_train is not None else n_is // 2
    relative = walk_forward_splits(n_is, split.n_folds, min_train)
    splits = [(range(first + tr.start, first + tr.stop), range(first + va.start, first + va.stop)) for tr, va in relative]
    return is_periods, oos_periods, splits


def _segment_row(segment: str, label: str, result: BacktestResult, n_trials: int = 1, var_trial_sr: float = 0.0) -> dict:
    sr, skew, kurt, T = sharpe_moments(result.excess_returns)
    row = {'segment': segment, 'strategy': label, 'sr': sr, 'turnover': float(np.mean(result.turnover_series))}
    if segment == 'IS':
        row['dsr'] = deflated_sr(sr, T, skew, kurt, n_trials, var_trial_sr)
    else:
        row['psr'] = probabilistic_sr(sr, 0.0, T, skew, kurt)
    return row


def calibrate(
    panel: AssetPanel,
    factors: Optional[FactorSeries],
    grid: GridSpec,
    split: SplitSpec = None,
    parallel: int = 1,
    progress: bool = False,
) -> EvalReport:
    """
    Walk-forward grid search in sample, online out-of-sample run of the winner,
    benchmarks and overfitting statistics.

    Args:
        panel: Asset panel
        factors: Factor returns (built once when None)
        grid: Grid definition
        split: IS/OOS and fold configuration (60/40, 4 folds, S=16 by default)
        parallel: Number of joblib workers
        progress: Show a tqdm bar

    Returns:
        EvalReport
    """
    split = split or SplitSpec()
    if factors is None:
        factors = build_factor_portfolios(panel)
    base = grid.base
    is_periods, oos_periods, splits = split_periods(panel.T, base.burn_in, split)
    is_range = (is_periods[0], is_periods[-1] + 1)
    oos_range = (oos_periods[0], oos_periods[-1] + 1)

    search = grid_search(panel, factors, grid, splits, is_periods, oos_periods, parallel, progress)
    if not search.ranking:
        raise NumericalError(f"all {grid.size} trials failed")
    selected_digest = search.ranking[0][0]
    col = search.trials.digests.index(selected_digest)
    selected = search.trials.configs[col]
    logger.info("Selected configuration %s (mean validation SR %.4f)", selected_digest, search.ranking[0][1])

    algo = run_backtest(panel, factors, selected)
    results = {'algo': algo}
    for kind in ('nd', 'cap'):
        results[kind] = run_benchmark(panel, kind, burn_in=base.burn_in, universe_size=selected.universe_size)

    is_srs = np.array([sharpe_ratio(search.trials.returns[:, j]) for j in range(search.trials.n_trials)])
    n_trials = len(is_srs)
    var_trial_sr = float(np.var(is_srs, ddof=1)) if n_trials > 1 else 0.0

    table = []
    labels = {'algo': 'Algo', 'nd': 'ND', 'cap': 'Cap'}
    for segment, (lo, hi) in (('IS', is_range), ('OOS', oos_range)):
        for key, label in labels.items():
            part = results[key].slice(lo, hi)
            if key == 'algo' and segment == 'IS':
                table.append(_segment_row(segment, label, part, n_trials, var_trial_sr))
            else:
                table.append(_segment_row(segment, label, part))

    algo_is = algo.slice(*is_range)
    algo_oos = algo.slice(*oos_range)
    sr_is, skew_is, kurt_is, T_is = sharpe_moments(algo_is.excess_returns)
    sr_oos, skew_oos, kurt_oos, T_oos = sharpe_moments(algo_oos.excess_returns)

    pbo = cscv_pbo(search.trials, min(split.cscv_blocks, len(is_periods) - len(is_periods) % 2))
    regression = trial_regression = None
    try:
        regression = is_oos_regression(pbo.pairs)
    except DegenerateRegressionError as exc:
        logger.info("CSCV regression skipped: %s", exc)
    ok = search.table[search.table['status'] == 'ok'] if len(search.table) else search.table
    try:
        trial_regression = is_oos_regression(ok[['is_sr', 'oos_sr']].to_numpy())
    except (DegenerateRegressionError, KeyError) as exc:
        logger.info("Trial regression skipped: %s", exc)

    return EvalReport(
        table=table,
        selected_config=selected,
        selected_digest=selected_digest,
        is_sr=sr_is,
        oos_sr=sr_oos,
        psr=probabilistic_sr(sr_oos, 0.0, T_oos, skew_oos, kurt_oos),
        dsr=deflated_sr(sr_is, T_is, skew_is, kurt_is, n_trials, var_trial_sr),
        hsr=haircut_sr(sr_is, T_is, n_trials),
        n_trials=n_trials,
        var_trial_sr=var_trial_sr,
        pbo=pbo,
        regression=regression,
        trial_regression=trial_regression,
        trials=search.table,
        is_range=is_range,
        oos_range=oos_range,
        failed=search.failed,
        results=results,
        trial_matrix=search.trials,
    )
