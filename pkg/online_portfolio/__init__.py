"""
Online portfolio management engine.

Adaptive factor and characteristic return forecasts are blended, turned into
GMV, systematic and active mean-variance legs and traded weekly under a gross
leverage bound. The analysis package adds walk-forward calibration and
overfitting-aware statistics.
"""

__version__ = "0.1.0"
