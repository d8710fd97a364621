"""
Calibration statistics and exports.
"""

from .evaluate import (
    EvalReport,
    GridSpec,
    SplitSpec,
    TrialMatrix,
    calibrate,
    cscv_pbo,
    deflated_sr,
    grid_search,
    haircut_sr,
    is_oos_regression,
    full_scale_grid,
    probabilistic_sr,
    walk_forward_splits,
)
from .export import (
    create_strategy_comparison_table,
    export_backtest_results,
    export_calibration_results,
    format_performance_table,
    run_multiple_seeds,
)

__all__ = [
    'EvalReport',
    'GridSpec',
    'SplitSpec',
    'TrialMatrix',
    'calibrate',
    'cscv_pbo',
    'deflated_sr',
    'grid_search',
    'haircut_sr',
    'is_oos_regression',
    'full_scale_grid',
    'probabilistic_sr',
    'walk_forward_splits',
    'create_strategy_comparison_table',
    'export_backtest_results',
    'export_calibration_results',
    'format_performance_table',
    'run_multiple_seeds',
]
