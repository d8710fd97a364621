"""
Hyper-parameter configuration for the online portfolio algorithm.

Memory factors are split into a strategic (s) and an active (a) pair:
- lambda_s drives factor premia, factor covariance and idiosyncratic variance
- lambda_a drives characteristic payoffs and the active forecast-error stream
Shrinkage intensities (kappa) and risk tolerances (gamma) follow the same split.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from typing import Optional

from ..errors import ConfigError
from .active_models import ACTIVE_MODELS

SHRINK_TARGETS = ("identity", "constant_correlation")
RISK_MODELS = ("conditional", "unconditional")


@dataclass
class HyperParams:
    """
    One configuration of the online algorithm.

    Attributes:
        lambda_s (float): Strategic memory factor λ_s ∈ (0,1)
        lambda_a (float): Active memory factor λ_a ∈ (0,1)
        kappa_s (float): Shrinkage of the strategic covariance κ_s ∈ [0,1]
        kappa_a (float): Shrinkage of the active covariance κ_a ∈ [0,1]
        gamma_s (float): Risk tolerance of the systematic leg γ_s > 0
        gamma_a (float): Risk tolerance of the active leg γ_a > 0
        active_model (str): Key into ACTIVE_MODELS
        rlma_step (float): Normalised step of the robust beta filter
        huber_c (float): Clipping threshold in units of residual scale
        resid_memory (float): Memory of the residual-scale EWMA
        rls_ridge (float): Initial precision scale of RLS filters
        cov_ridge (float): Initial covariance of EWMA covariance filters
        universe_size (int): Number of largest available assets traded (U)
        max_leverage (float): Gross leverage bound L ≥ 1
        leg_leverage (float | None): Optional gross bound applied to each leg
        burn_in (int): Periods of model updates before the first trade
        interactions (bool): Add f⊗θ and f⊗z beta terms
        shrink_target (str): 'identity' or 'constant_correlation'
        risk_model (str): 'conditional' (factor model) or 'unconditional' (EWMA Σ_u)
        diagonal_uncertainty (bool): Keep only the diagonal of Ω_π, Ω_μ
    """
    lambda_s: float = 0.99
    lambda_a: float = 0.95
    kappa_s: float = 0.5
    kappa_a: float = 0.5
    gamma_s: float = 50.0
    gamma_a: float = 50.0
    active_model: str = "full"
    rlma_step: float = 0.05
    huber_c: float = 2.0
    resid_memory: float = 0.95
    rls_ridge: float = 1e-4
    cov_ridge: float = 1e-6
    universe_size: int = 100
    max_leverage: float = 2.0
    leg_leverage: Optional[float] = None
    burn_in: int = 52
    interactions: bool = False
    shrink_target: str = "identity"
    risk_model: str = "conditional"
    diagonal_uncertainty: bool = True

    def __post_init__(self):
        """Validate every field against its domain."""
        for field_name in ['lambda_s', 'lambda_a', 'resid_memory']:
            value = getattr(self, field_name)
            if not 0 < value < 1:
                raise ConfigError(f"must be in (0, 1), got {value}", field=field_name)
        for field_name in ['kappa_s', 'kappa_a']:
            value = getattr(self, field_name)
            if not 0 <= value <= 1:
                raise ConfigError(f"must be in [0, 1], got {value}", field=field_name)
        for field_name in ['gamma_s', 'gamma_a', 'rlma_step', 'huber_c', 'rls_ridge', 'cov_ridge']:
            value = getattr(self, field_name)
            if not value > 0:
                raise ConfigError(f"must be > 0, got {value}", field=field_name)
        if self.active_model not in ACTIVE_MODELS:
            raise ConfigError(
                f"unknown active model {self.active_model!r}; choose from {sorted(ACTIVE_MODELS)}",
                field='active_model',
            )
        if self.universe_size < 1:
            raise ConfigError(f"must be >= 1, got {self.universe_size}", field='universe_size')
        if self.max_leverage < 1:
            raise ConfigError(f"must be >= 1, got {self.max_leverage}", field='max_leverage')
        if self.leg_leverage is not None and self.leg_leverage <= 0:
            raise ConfigError(f"must be > 0, got {self.leg_leverage}", field='leg_leverage')
        if self.burn_in < 0:
            raise ConfigError(f"must be >= 0, got {self.burn_in}", field='burn_in')
        if self.shrink_target not in SHRINK_TARGETS:
            raise ConfigError(f"must be one of {SHRINK_TARGETS}", field='shrink_target')
        if self.risk_model not in RISK_MODELS:
            raise ConfigError(f"must be one of {RISK_MODELS}", field='risk_model')

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """
        Stable 12-hex identifier of this configuration.

        Returns:
            First 12 characters of the SHA-256 of the canonical JSON encoding
        """
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]

    def replace(self, **changes) -> "HyperParams":
        """Copy with some fields changed (validated again)."""
        values = self.to_dict()
        unknown = set(changes) - set(values)
        if unknown:
            raise ConfigError(f"unknown hyper-parameter(s) {sorted(unknown)}")
        values.update(changes)
        return HyperParams(**values)

    @classmethod
    def from_dict(cls, values: dict) -> "HyperParams":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown key(s) {sorted(unknown)}", field='hyperparams')
        return cls(**values)
