"""
Equilibria of an n-player optimal stopping game with a coupling through the
fraction of stopped agents, and of its mean field limit.
"""

__version__ = "0.1.0"

from .errors import (ConfigError, DomainError, MfgStopError, NotARoot,
                     NotFound, OrderViolation, ScanTooCoarse)
from .signal_models import GameParams, SignalModel, from_config, preset

__all__ = [
    "__version__",
    "ConfigError",
    "DomainError",
    "MfgStopError",
    "NotARoot",
    "NotFound",
    "OrderViolation",
    "ScanTooCoarse",
    "GameParams",
    "SignalModel",
    "from_config",
    "preset",
]
