"""
Active-return model variants.

Each variant forecasts asset returns from firm characteristics. The first
three fit one cross-sectional least-squares regression per period and smooth
the payoffs with an EWMA of memory λ_a; the last pools all periods in a
recursive least-squares filter with forgetting λ_a.
"""

# Four characteristic-model variants evaluated side by side in calibration
ACTIVE_MODELS = {
    'full': {
        'characteristics': ('BVTP', 'MV', 'MOMS', 'MOML'),
        'estimator': 'cross_section',
        'description': 'Value, size and both momentum horizons',
        'hex_color': '#1F77B4',
    },
    'value_size': {
        'characteristics': ('BVTP', 'MV'),
        'estimator': 'cross_section',
        'description': 'Book-to-price and size only',
        'hex_color': '#FF7F0E',
    },
    'momentum': {
        'characteristics': ('MOMS', 'MOML'),
        'estimator': 'cross_section',
        'description': 'Quarterly and annual momentum only',
        'hex_color': '#2CA02C',
    },
    'pooled_rls': {
        'characteristics': ('BVTP', 'MV', 'MOMS', 'MOML'),
        'estimator': 'pooled_rls',
        'description': 'All characteristics, pooled recursive least squares',
        'hex_color': '#D62728',
    },
}

# Strategy display settings for plots and tables
STRATEGY_COLORS = {
    'algo': '#1F77B4',
    'nd': '#FF7F0E',
    'cap': '#2CA02C',
    'rfr': '#7F7F7F',
}

STRATEGY_LABELS = {
    'algo': 'Algo',
    'nd': 'ND',
    'cap': 'Cap',
    'rfr': 'Rfr',
}

LEG_LABELS = {
    'gmv': 'GMV',
    'sys': 'Systematic',
    'act': 'Active',
}


def model_characteristics(model_id: str) -> tuple:
    """
    Characteristic names used by an active model.

    Args:
        model_id: Key into ACTIVE_MODELS

    Returns:
        Tuple of characteristic names
    """
    return ACTIVE_MODELS[model_id]['characteristics']


def validate_model_ids(model_ids) -> bool:
    """True when every id names a known active model."""
    return len(model_ids) > 0 and all(m in ACTIVE_MODELS for m in model_ids)
