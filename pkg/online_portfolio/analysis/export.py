"""
Export utilities for backtests and calibration runs.
Includes CSV/JSON artifacts, strategy comparison tables and a LaTeX table.
"""

import json
import logging
import math
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from ..model.active_models import STRATEGY_LABELS
from ..model.backtest import BacktestResult, performance_stats, run_backtest, run_benchmark
from ..model.hyperparams import HyperParams
from ..model.synth import GeneratorSpec, generate

logger = logging.getLogger(__name__)


def _clean(value):
    """JSON-safe copy: numpy scalars and arrays become Python values, NaN becomes None."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return None if not math.isfinite(value) else value
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def write_json(payload: dict, path) -> str:
    """Write sorted, indented JSON; identical payloads give identical bytes."""
    path = Path(path)
    path.write_text(json.dumps(_clean(payload), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return str(path)


def export_backtest_results(
    results: dict,
    output_dir: str = "results",
    digest: str = "",
    strategy: str = "algo",
) -> dict:
    """
    Export a side-by-side backtest to CSV and JSON files.

    Args:
        results: Strategy key → BacktestResult (same trade dates)
        output_dir: Directory to save results
        digest: Config digest embedded in every artifact
        strategy: Strategy whose legs and weights are exported

    Returns:
        dict: Paths to created files
    """
    output_path = Path(output_dir)
    output_path.mkdir(parents=True, exist_ok=True)
    created_files = {}

    # 1. Equity curves (wealth at the end of each period, starting from 1)
    equity = pd.DataFrame({
        name: res.equity_curve[1:] for name, res in results.items()
    }, index=pd.Index(next(iter(results.values())).dates.strftime("%Y-%m-%d"), name='date'))
    equity['config_digest'] = digest
    equity_file = output_path / "equity_curve.csv"
    equity.to_csv(equity_file, float_format="%.12g")
    created_files['equity'] = str(equity_file)

    main = results.get(strategy)
    if main is not None:
        dates = pd.Index(main.dates.strftime("%Y-%m-%d"), name='date')

        # 2. Leg attribution
        if len(main.component_returns):
            comps = pd.DataFrame(main.component_returns, columns=['gmv', 'sys', 'act'], index=dates)
            comps['config_digest'] = digest
            comps_file = output_path / "components.csv"
            comps.to_csv(comps_file, float_format="%.12g")
            created_files['components'] = str(comps_file)

        # 3. Weights held in each period
        weights = pd.DataFrame(main.weights, columns=list(main.asset_ids), index=dates)
        weights_file = output_path / "weights.csv"
        weights.to_csv(weights_file, float_format="%.12g")
        created_files['weights'] = str(weights_file)

    # 4. Statistics
    stats = {'config_digest': digest, 'strategies': {}}
    for name, res in results.items():
        entry = performance_stats(res).to_dict()
        entry['warnings'] = len(res.warnings)
        stats['strategies'][name] = entry
    created_files['stats'] = write_json(stats, output_path / "stats.json")
    return created_files


def export_calibration_results(report, output_dir: str = "results", digest: str = "") -> dict:
    """
    Export an EvalReport.

    Args:
        report: EvalReport from calibrate()
        output_dir: Directory to save results
        digest: Run digest embedded in every artifact

    Returns:
        dict: Paths to created files
    """
    output_path = Path(output_dir)
    output_path.mkdir(parents=True, exist_ok=True)
    created_files = {}

    payload = report.to_dict()
    payload['config_digest'] = digest
    created_files['report'] = write_json(payload, output_path / "report.json")

    table = pd.DataFrame(report.table)
    table['config_digest'] = digest
    table_file = output_path / "table.csv"
    table.to_csv(table_file, index=False, float_format="%.12g")
    created_files['table'] = str(table_file)

    trials = report.trials.copy()
    trials['config_digest'] = digest
    trials_file = output_path / "trials.csv"
    trials.to_csv(trials_file, index=False, float_format="%.12g")
    created_files['trials'] = str(trials_file)

    logits = pd.DataFrame({'combination': np.arange(len(report.pbo.logits)), 'logit': report.pbo.logits})
    if len(report.pbo.pairs):
        logits['is_sr'] = report.pbo.pairs[:, 0]
        logits['oos_sr'] = report.pbo.pairs[:, 1]
    logits['config_digest'] = digest
    logits_file = output_path / "logits.csv"
    logits.to_csv(logits_file, index=False, float_format="%.12g")
    created_files['logits'] = str(logits_file)

    if report.trial_matrix is not None:
        matrix_file = output_path / "trial_returns.csv"
        report.trial_matrix.to_frame().to_csv(matrix_file, float_format="%.12g")
        created_files['trial_returns'] = str(matrix_file)

    if report.results:
        created_files.update(export_backtest_results(report.results, output_path / "backtest", digest))
    return created_files


def create_strategy_comparison_table(results: dict, output_file: Optional[str] = None) -> pd.DataFrame:
    """
    Create a comparison table across strategies.

    Args:
        results: Strategy key → BacktestResult
        output_file: Path to save CSV (skipped when None)

    Returns:
        DataFrame with formatted metrics
    """
    rows = []
    for name, res in results.items():
        stats = performance_stats(res)
        rows.append({
            'Strategy': STRATEGY_LABELS.get(name, name),
            'SR (weekly)': f"{stats.sr:.4f}",
            'Ann. Return': f"{stats.ann_return:.1%}",
            'Ann. Vol': f"{stats.ann_vol:.1%}",
            'Max DD': f"{stats.max_drawdown:.1%}",
            'Turnover': f"{stats.mean_turnover:.3f}",
        })
    df = pd.DataFrame(rows)
    if output_file:
        df.to_csv(output_file, index=False)
        logger.info("Saved comparison table to %s", output_file)
    return df


def format_performance_table(report, caption: str = "Performance of the selected configuration and benchmarks") -> str:
    """
    Generate a LaTeX table in the IS/OOS layout: SR, DSR (IS) or PSR (OOS) and
    turnover for Algo, ND and Cap.

    Args:
        report: EvalReport or its table rows
        caption: Table caption

    Returns:
        str: LaTeX table code
    """
    rows = report.table if hasattr(report, 'table') else report
    by_key = {(r['segment'], r['strategy']): r for r in rows}
    strategies = [s for s in ('Algo', 'ND', 'Cap') if ('IS', s) in by_key]

    latex = f"""
\\begin{{table}}[h]
\\centering
\\caption{{{caption}}}
\\begin{{tabular}}{{lrrrrrr}}
\\toprule
 & \\multicolumn{{3}}{{c}}{{In-sample}} & \\multicolumn{{3}}{{c}}{{Out-of-sample}} \\\\
Strategy & SR & DSR & TO & SR & PSR & TO \\\\
\\midrule
"""
    for name in strategies:
        is_row, oos_row = by_key[('IS', name)], by_key.get(('OOS', name))
        latex += f"{name} & {is_row['sr']:.4f} & {is_row['dsr']:.4f} & {is_row['turnover']:.3f} & "
        if oos_row is None:
            latex += "-- & -- & -- \\\\\n"
        else:
            latex += f"{oos_row['sr']:.4f} & {oos_row['psr']:.4f} & {oos_row['turnover']:.3f} \\\\\n"

    latex += """\\bottomrule
\\end{tabular}
\\end{table}
"""
    return latex


def run_multiple_seeds(
    spec: GeneratorSpec,
    hp: HyperParams,
    seeds: Sequence[int],
    benchmark: str = 'nd',
) -> pd.DataFrame:
    """
    Backtest the algorithm and a benchmark on one synthetic market per seed.

    Args:
        spec: Generator parameters (its seed is replaced)
        hp: Hyper-parameters of the algorithm
        seeds: Random seeds
        benchmark: Benchmark kind compared against

    Returns:
        DataFrame with one row per seed (algo_sr, benchmark SR, difference)
    """
    rows = []
    for seed in seeds:
        panel, factors, _ = generate(replace(spec, seed=seed))
        algo = run_backtest(panel, factors, hp)
        bench = run_benchmark(panel, benchmark, burn_in=hp.burn_in, universe_size=hp.universe_size)
        algo_sr = performance_stats(algo).sr
        bench_sr = performance_stats(bench).sr
        rows.append({
            'seed': seed,
            'algo_sr': algo_sr,
            f'{benchmark}_sr': bench_sr,
            'difference': algo_sr - bench_sr,
            'algo_turnover': float(np.mean(algo.turnover_series)),
        })
    df = pd.DataFrame(rows)
    logger.info("Ran %d seeds: mean SR algo %.4f vs %s %.4f",
                len(df), df['algo_sr'].mean(), benchmark, df[f'{benchmark}_sr'].mean())
    return df
