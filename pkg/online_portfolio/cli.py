"""
Command-line interface.

    python -m online_portfolio backtest --config configs/synthetic_backtest.toml
    python -m online_portfolio calibrate --config configs/synthetic_calibration.toml --parallel 4
    python -m online_portfolio evaluate --returns returns.csv --trials 100
    python -m online_portfolio pbo --returns trial_returns.csv --blocks 16

Exit codes: 0 ok, 1 usage or configuration error, 2 data error, 3 numerical failure.
"""

import argparse
import hashlib
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from rich.console import Console
from rich.table import Table

from .analysis.evaluate import calibrate, cscv_pbo, deflated_sr, haircut_sr, probabilistic_sr, sharpe_moments
from .analysis.export import export_backtest_results, export_calibration_results, format_performance_table, write_json
from .config import RunConfig, load_config
from .errors import ConfigError, DataError, NumericalError, OnlinePortfolioError
from .model.active_models import STRATEGY_LABELS
from .model.backtest import performance_stats, run_strategies
from .model.data import write_panel_csv

logger = logging.getLogger(__name__)

console = Console()
err_console = Console(stderr=True)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that exits with the usage code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ============================================================================
# HELPERS
# ============================================================================

def _config(args) -> RunConfig:
    if args.config is None:
        raise ConfigError("--config is required for this command")
    config = load_config(args.config)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    return config


def _artifact_dir(config: RunConfig, args) -> Path:
    out = config.artifact_dir(Path(args.out) if args.out else None)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _file_digest(path: Path, *extra) -> str:
    h = hashlib.sha256(path.read_bytes())
    for item in extra:
        h.update(repr(item).encode())
    return h.hexdigest()[:12]


def _read_returns(path) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: file not found")
    df = pd.read_csv(path, index_col=0)
    values = df.apply(pd.to_numeric, errors='coerce')
    if values.isna().any().any():
        row, col = np.argwhere(values.isna().to_numpy())[0]
        raise DataError(f"{path}:{row + 2}: non-numeric value in column {df.columns[col]!r}")
    return values


def _print_files(created: dict, out: Path):
    table = Table(title=f"Artifacts in {out}")
    table.add_column("Artifact")
    table.add_column("Path")
    for name, path in created.items():
        table.add_row(name, str(path))
    console.print(table)


def _save_plots(figures: dict, out: Path) -> dict:
    from .visualization.plots import save_figure

    return {name: save_figure(fig, out / f"{name}.png") for name, fig in figures.items()}


# ============================================================================
# COMMANDS
# ============================================================================

def cmd_ingest(args) -> int:
    """Load a panel, build factor returns and write a summary."""
    config = _config(args)
    panel, factors, _ = config.build_market()
    out = _artifact_dir(config, args)

    frame = pd.DataFrame(factors.factor_returns, columns=list(factors.names),
                         index=pd.Index(panel.dates.strftime("%Y-%m-%d"), name='date'))
    frame.to_csv(out / "factors.csv", float_format="%.12g")
    summary = {
        'config_digest': config.digest(),
        'periods': panel.T,
        'assets': panel.N,
        'macro_variables': panel.K,
        'characteristics': list(panel.char_names),
        'first_date': str(panel.dates[0].date()),
        'last_date': str(panel.dates[-1].date()),
        'available_share': float(panel.available[1:].mean()) if panel.T > 1 else 0.0,
        'factor_periods': int(factors.available.sum()),
    }
    created = {'factors': str(out / "factors.csv"), 'summary': write_json(summary, out / "panel_summary.json")}
    _print_files(created, out)
    return EXIT_OK


def cmd_generate(args) -> int:
    """Write a synthetic market in the input CSV schema."""
    config = _config(args)
    if config.synth is None:
        raise ConfigError("[synth] table required", path=config.source)
    panel, factors, truth = config.build_market()
    out = _artifact_dir(config, args)

    created = write_panel_csv(panel, out / "panel")
    truth_payload = {
        'config_digest': config.digest(),
        'betas': truth.betas,
        'factor_mean': truth.factor_mean,
        'factor_vol': truth.factor_vol,
        'idio_vol': truth.idio_vol,
        'payoffs_first': truth.payoffs[0],
        'payoffs_last': truth.payoffs[-1],
    }
    created['truth'] = write_json(truth_payload, out / "truth.json")
    pd.DataFrame(factors.factor_returns, columns=list(factors.names),
                 index=pd.Index(panel.dates.strftime("%Y-%m-%d"), name='date')).to_csv(out / "factors.csv", float_format="%.12g")
    created['factors'] = str(out / "factors.csv")
    _print_files(created, out)
    return EXIT_OK


def cmd_backtest(args) -> int:
    """Run the algorithm with ND, Cap and Rfr side by side."""
    config = _config(args)
    panel, factors, _ = config.build_market()
    out = _artifact_dir(config, args)

    model = run_strategies(panel, factors, config.hyperparams)
    results = model.results()
    created = export_backtest_results(results, out, config.digest())
    if args.plots or config.plots:
        from .visualization.plots import plot_performance

        created.update(_save_plots({'performance': plot_performance(results)}, out))

    table = Table(title=f"Backtest {config.digest()}")
    for column in ("Strategy", "SR", "Ann. return", "Ann. vol", "Max DD", "Turnover"):
        table.add_column(column, justify="right")
    for name, res in results.items():
        stats = performance_stats(res)
        table.add_row(STRATEGY_LABELS.get(name, name), f"{stats.sr:.4f}", f"{stats.ann_return:.2%}",
                      f"{stats.ann_vol:.2%}", f"{stats.max_drawdown:.2%}", f"{stats.mean_turnover:.3f}")
    console.print(table)
    _print_files(created, out)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    """Grid search in sample, selected configuration out of sample, overfitting statistics."""
    config = _config(args)
    if config.grid is None:
        raise ConfigError("[grid] table required", path=config.source)
    panel, factors, _ = config.build_market()
    out = _artifact_dir(config, args)

    report = calibrate(panel, factors, config.grid, config.split, parallel=args.parallel,
                       progress=sys.stderr.isatty())
    created = export_calibration_results(report, out, config.digest())
    (out / "table.tex").write_text(format_performance_table(report), encoding="utf-8")
    created['latex'] = str(out / "table.tex")
    if args.plots or config.plots:
        from .visualization.plots import plot_hyperparameter_grid, plot_logits, plot_performance

        figures = {'performance': plot_performance(report.results), 'logits': plot_logits(report.pbo)}
        axes = list(config.grid.axes)
        if len(axes) >= 2:
            figures['grid'] = plot_hyperparameter_grid(report.trials, axes[0], axes[1])
        created.update(_save_plots(figures, out))

    table = Table(title=f"Calibration {config.digest()} (selected {report.selected_digest})")
    for column in ("Segment", "Strategy", "SR", "DSR / PSR", "TO"):
        table.add_column(column, justify="right")
    for row in report.table:
        prob = row.get('dsr', row.get('psr'))
        table.add_row(row['segment'], row['strategy'], f"{row['sr']:.4f}", f"{prob:.4f}", f"{row['turnover']:.3f}")
    console.print(table)
    flag = " (degenerate)" if report.pbo.degenerate else ""
    console.print(f"PBO {report.pbo.pbo:.4f}{flag}   HSR {report.hsr:.4f}   trials {report.n_trials}")
    _print_files(created, out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    """SR, PSR, DSR and HSR of every column of a returns CSV."""
    if args.returns is None:
        raise ConfigError("--returns is required")
    path = Path(args.returns)
    returns = _read_returns(path)
    digest = _file_digest(path, args.trials, args.var_trial_sr)
    out = Path(args.out or "out") / digest
    out.mkdir(parents=True, exist_ok=True)

    moments = {col: sharpe_moments(returns[col].to_numpy()) for col in returns.columns}
    srs = np.array([m[0] for m in moments.values()])
    var_trial_sr = args.var_trial_sr
    if var_trial_sr is None:
        var_trial_sr = float(np.var(srs, ddof=1)) if len(srs) > 1 else 0.0
    n_trials = args.trials if args.trials is not None else len(srs)

    table = Table(title=f"Evaluation of {path.name} ({n_trials} trials)")
    for column in ("Column", "SR", "PSR", "DSR", "HSR", "T"):
        table.add_column(column, justify="right")
    payload = {'config_digest': digest, 'n_trials': n_trials, 'var_trial_sr': var_trial_sr, 'columns': {}}
    for col, (sr, skew, kurt, T) in moments.items():
        entry = {
            'sr': sr, 'skew': skew, 'kurt': kurt, 'T': T,
            'psr': probabilistic_sr(sr, 0.0, T, skew, kurt),
            'dsr': deflated_sr(sr, T, skew, kurt, n_trials, var_trial_sr),
            'hsr': haircut_sr(sr, T, n_trials),
        }
        payload['columns'][str(col)] = entry
        table.add_row(str(col), f"{sr:.4f}", f"{entry['psr']:.4f}", f"{entry['dsr']:.4f}", f"{entry['hsr']:.4f}", str(T))
    created = {'evaluation': write_json(payload, out / "evaluation.json")}
    console.print(table)
    _print_files(created, out)
    return EXIT_OK


def cmd_pbo(args) -> int:
    """CSCV probability of backtest overfitting of a trial-returns CSV."""
    if args.returns is None:
        raise ConfigError("--returns is required")
    path = Path(args.returns)
    returns = _read_returns(path)
    digest = _file_digest(path, args.blocks)
    out = Path(args.out or "out") / digest
    out.mkdir(parents=True, exist_ok=True)

    result = cscv_pbo(returns.to_numpy(), args.blocks)
    payload = {
        'config_digest': digest,
        'pbo': result.pbo,
        'degenerate': result.degenerate,
        'prob_oos_loss': result.prob_oos_loss,
        'n_blocks': result.n_blocks,
        'n_trials': returns.shape[1],
        'n_combinations': len(result.logits),
    }
    created = {'pbo': write_json(payload, out / "pbo.json")}
    logits = pd.DataFrame({'logit': result.logits})
    if len(result.pairs):
        logits['is_sr'] = result.pairs[:, 0]
        logits['oos_sr'] = result.pairs[:, 1]
    logits.to_csv(out / "logits.csv", index_label='combination', float_format="%.12g")
    created['logits'] = str(out / "logits.csv")
    if args.plots:
        from .visualization.plots import plot_logits

        created.update(_save_plots({'logits': plot_logits(result)}, out))

    flag = " (degenerate)" if result.degenerate else ""
    console.print(f"PBO {result.pbo:.4f}{flag} over {len(result.logits)} combinations")
    _print_files(created, out)
    return EXIT_OK


COMMANDS = {
    'ingest': cmd_ingest,
    'generate': cmd_generate,
    'backtest': cmd_backtest,
    'calibrate': cmd_calibrate,
    'evaluate': cmd_evaluate,
    'pbo': cmd_pbo,
}


# ============================================================================
# ENTRY POINT
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", default=None, help="TOML run file")
    common.add_argument("--out", default=None, help="Artifact root (config [output].dir or ./out)")
    common.add_argument("--parallel", type=int, default=1, help="Concurrent grid trials")
    common.add_argument("--seed", type=int, default=None, help="Override the config seed")
    common.add_argument("--verbose", action="store_true", help="DEBUG logging")
    common.add_argument("--plots", action="store_true", help="Write PNG figures")

    parser = _Parser(prog="online_portfolio", description="Online portfolio engine, backtests and calibration")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", parents=[common], help="Load CSV inputs and build factor returns")
    sub.add_parser("generate", parents=[common], help="Write a synthetic market")
    sub.add_parser("backtest", parents=[common], help="Backtest one configuration with benchmarks")
    sub.add_parser("calibrate", parents=[common], help="Walk-forward grid search and overfitting report")
    evaluate = sub.add_parser("evaluate", parents=[common], help="Sharpe ratio statistics of a returns CSV")
    evaluate.add_argument("--returns", default=None, help="CSV: rows=periods, cols=strategies")
    evaluate.add_argument("--trials", type=int, default=None, help="Number of trials (default: columns)")
    evaluate.add_argument("--var-trial-sr", type=float, default=None, help="Variance of trial Sharpe ratios")
    pbo = sub.add_parser("pbo", parents=[common], help="CSCV probability of backtest overfitting")
    pbo.add_argument("--returns", default=None, help="CSV: rows=periods, cols=trials")
    pbo.add_argument("--blocks", type=int, default=16, help="Even number of CSCV blocks")
    return parser


def _fail(code: int, exc: Exception, command: str) -> int:
    err_console.print(f"error: {exc}", style="red", markup=False, highlight=False, soft_wrap=True)
    logger.debug("%s failed", command, exc_info=exc)
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    )
    if args.parallel < 1:
        err_console.print("error: --parallel must be >= 1", style="red", markup=False, highlight=False)
        return EXIT_USAGE

    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        return _fail(EXIT_USAGE, exc, args.command)
    except (DataError, OSError) as exc:
        return _fail(EXIT_DATA, exc, args.command)
    except (NumericalError, OnlinePortfolioError, np.linalg.LinAlgError) as exc:
        return _fail(EXIT_NUMERIC, exc, args.command)
