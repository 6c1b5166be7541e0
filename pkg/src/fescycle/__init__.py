"""Closed-loop simulation of FES cycling with tangency-scheduled muscle groups and RISE control."""

from .errors import (
    ConfigError,
    DegenerateForceError,
    DegeneratePairError,
    DomainError,
    FesCycleError,
    ModelError,
    NoFeasiblePairError,
    SingularityError,
)

__all__ = [
    "ConfigError",
    "DegenerateForceError",
    "DegeneratePairError",
    "DomainError",
    "FesCycleError",
    "ModelError",
    "NoFeasiblePairError",
    "SingularityError",
]

__version__ = "0.1.0"
