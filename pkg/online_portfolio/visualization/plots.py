"""
Figures for backtests and calibration runs.
"""

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from ..model.active_models import LEG_LABELS, STRATEGY_COLORS, STRATEGY_LABELS


def plot_performance(results: dict, strategy: str = 'algo'):
    """
    Cumulative wealth of every strategy and, below it, the cumulative leg
    attribution of one strategy.

    Args:
        results: Strategy key → BacktestResult
        strategy: Strategy whose legs are shown (skipped when it has none)

    Returns:
        matplotlib Figure
    """
    main = results.get(strategy)
    has_legs = main is not None and len(main.component_returns) > 0
    fig, axes = plt.subplots(2 if has_legs else 1, 1, figsize=(12, 8 if has_legs else 5), sharex=True, squeeze=False)

    ax = axes[0, 0]
    for name, res in results.items():
        ax.plot(res.dates, res.equity_curve[1:], label=STRATEGY_LABELS.get(name, name),
                color=STRATEGY_COLORS.get(name), linewidth=2)
    ax.set_yscale('log')
    ax.set_ylabel('Wealth (log scale)', fontsize=12, fontweight='bold')
    ax.set_title('Cumulative Performance', fontsize=14, fontweight='bold')
    ax.legend(loc='best', framealpha=0.9)
    ax.grid(True, alpha=0.25, linestyle='--')

    if has_legs:
        ax = axes[1, 0]
        cumulative = np.cumsum(main.component_returns, axis=0)
        for k, key in enumerate(('gmv', 'sys', 'act')):
            ax.plot(main.dates, cumulative[:, k], label=LEG_LABELS[key], linewidth=1.8)
        ax.set_ylabel('Cumulative return', fontsize=12, fontweight='bold')
        ax.set_title('Leg Attribution', fontsize=14, fontweight='bold')
        ax.legend(loc='best', framealpha=0.9)
        ax.grid(True, alpha=0.25, linestyle='--')

    fig.tight_layout()
    return fig


def plot_hyperparameter_grid(trials: pd.DataFrame, x: str, y: str, value: str = 'is_sr'):
    """
    Heatmap of a trial statistic over two grid axes (mean over the other axes).

    Args:
        trials: Grid table from grid_search
        x, y: Axis names
        value: Column to aggregate

    Returns:
        matplotlib Figure
    """
    ok = trials[trials['status'] == 'ok']
    pivot = ok.pivot_table(index=y, columns=x, values=value, aggfunc='mean')
    fig, ax = plt.subplots(figsize=(8, 6))
    image = ax.imshow(pivot.to_numpy(), origin='lower', aspect='auto', cmap='viridis')
    ax.set_xticks(range(len(pivot.columns)), [str(v) for v in pivot.columns])
    ax.set_yticks(range(len(pivot.index)), [str(v) for v in pivot.index])
    ax.set_xlabel(x, fontsize=12, fontweight='bold')
    ax.set_ylabel(y, fontsize=12, fontweight='bold')
    ax.set_title(f'Mean {value} over the grid', fontsize=14, fontweight='bold')
    fig.colorbar(image, ax=ax)
    fig.tight_layout()
    return fig


def plot_logits(pbo_result, bins: int = 30):
    """
    Histogram of CSCV logits with the PBO in the title.

    Returns:
        matplotlib Figure
    """
    fig, ax = plt.subplots(figsize=(8, 5))
    if len(pbo_result.logits):
        ax.hist(pbo_result.logits, bins=bins, color=STRATEGY_COLORS['algo'], alpha=0.8, edgecolor='white')
    ax.axvline(0.0, color='black', linestyle='--', linewidth=1)
    ax.set_xlabel('Logit of OOS rank', fontsize=12, fontweight='bold')
    ax.set_ylabel('Combinations', fontsize=12, fontweight='bold')
    flag = " (degenerate)" if pbo_result.degenerate else ""
    ax.set_title(f'PBO = {pbo_result.pbo:.4f}{flag}', fontsize=14, fontweight='bold')
    ax.grid(True, alpha=0.25, linestyle='--')
    fig.tight_layout()
    return fig


def save_figure(fig, path) -> str:
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)
