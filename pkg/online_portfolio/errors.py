"""
Exception hierarchy for the online portfolio engine.

Every error raised on purpose by the package derives from OnlinePortfolioError,
so callers (the CLI in particular) can map families to exit codes.
"""

from typing import Optional


class OnlinePortfolioError(Exception):
    """Base class for all package errors."""


# ============================================================================
# CONFIGURATION
# ============================================================================

class ConfigError(OnlinePortfolioError, ValueError):
    """Invalid configuration value or hyper-parameter outside its domain."""

    def __init__(self, message: str, field: Optional[str] = None, path: Optional[str] = None):
        self.message = message
        self.field = field
        self.path = path
        prefix = ""
        if path:
            prefix += f"{path}: "
        if field:
            prefix += f"[{field}] "
        super().__init__(prefix + message)


class SplitError(ConfigError):
    """Walk-forward or IS/OOS split sizes cannot be satisfied."""


# ============================================================================
# DATA
# ============================================================================

class DataError(OnlinePortfolioError, ValueError):
    """Input data is missing, inconsistent, or out of range."""


class PanelFormatError(DataError):
    """A CSV row could not be parsed."""

    def __init__(self, path: str, line: int, message: str):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


# ============================================================================
# RUNTIME GUARDS
# ============================================================================

class LookAheadError(OnlinePortfolioError, RuntimeError):
    """A forecast was scored against a period other than the one it predicts."""


class NotInitializedError(OnlinePortfolioError, RuntimeError):
    """A forecast was requested from a state that has never been updated."""


# ============================================================================
# NUMERICS
# ============================================================================

class NumericalError(OnlinePortfolioError, ArithmeticError):
    """Base class for numerical failures."""


class FilterStateError(NumericalError):
    """Non-finite filter input, or a recursive state that lost positivity."""


class SingularMatrixError(NumericalError):
    """A factorisation failed; carries a condition-number estimate when known."""

    def __init__(self, message: str, condition: Optional[float] = None):
        self.condition = condition
        if condition is not None:
            message = f"{message} (condition estimate {condition:.3e})"
        super().__init__(message)


class InfeasibleConstraintsError(NumericalError):
    """The portfolio constraint set is empty."""

    def __init__(self, constraint: str, message: str):
        self.constraint = constraint
        super().__init__(f"{constraint}: {message}")


class ZeroVarianceError(NumericalError):
    """Sharpe ratio undefined because the return series has no variance."""


class DegenerateRegressionError(NumericalError):
    """Regression regressor has no variance or too few observations."""
