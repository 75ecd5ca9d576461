"""Domain models shared by every service.

This package holds the value types of the denoiser together with the two
pure core operations, mixture validation and schedule derivation.
"""

from denoiser.models.enums import (
    ComponentKind,
    ExperimentKind,
    Integrator,
    TruncationMode,
    ValueKind,
    W1Method,
)
from denoiser.models.mixture import GaussianMixture, NoiseModel, validate_mixture
from denoiser.models.particles import ParticleSet, as_query
from denoiser.models.records import MetricsRecord
from denoiser.models.schedule import DenoiseConfig, FlowSchedule, derive_schedule

__all__ = [
    # Models
    "ParticleSet",
    "GaussianMixture",
    "NoiseModel",
    "FlowSchedule",
    "DenoiseConfig",
    "MetricsRecord",
    # Operations
    "validate_mixture",
    "derive_schedule",
    "as_query",
    # Enums
    "ComponentKind",
    "ExperimentKind",
    "Integrator",
    "TruncationMode",
    "ValueKind",
    "W1Method",
]
