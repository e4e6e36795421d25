"""Interacting generalized Friedman urn systems: prediction and verification.

The package predicts limiting proportions, convergence rates and CLT
covariances for systems of urns whose sampling probabilities mix the
proportions of other urns, and verifies the predictions by exact Monte Carlo
simulation.
"""

from .model import (
    Deterministic,
    DirichletColumns,
    RandomScaled,
    SingleBallMultinomial,
    SystemSpec,
    UrnSpec,
    ValidatedSystem,
    moments_of,
    system_from_json,
    system_to_json,
    validate_spec,
)
from .partition import PartitionResult, communicating_classes, classify_and_order, partition_system
from .asymptotics import AsymptoticReport, analyze

__version__ = "0.1.0"

__all__ = [
    "AsymptoticReport",
    "Deterministic",
    "DirichletColumns",
    "PartitionResult",
    "RandomScaled",
    "SingleBallMultinomial",
    "SystemSpec",
    "UrnSpec",
    "ValidatedSystem",
    "analyze",
    "classify_and_order",
    "communicating_classes",
    "moments_of",
    "partition_system",
    "system_from_json",
    "system_to_json",
    "validate_spec",
]
