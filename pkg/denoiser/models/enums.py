"""Enum definitions for the denoiser models."""

from enum import Enum


class ComponentKind(str, Enum):
    """Covariance structure of one mixture component."""
    ISOTROPIC = "isotropic"
    FULL = "full"
    POINT_MASS = "point_mass"


class TruncationMode(str, Enum):
    """How the Stage 1 context is truncated before refinement."""
    NONE = "none"
    AUTO = "auto"


class Integrator(str, Enum):
    """Depth integrator for the Stage 1 particle flow."""
    EULER = "euler"
    RK4 = "rk4"


class ValueKind(str, Enum):
    """Kind of value carried by a metrics record."""
    VARIANCE = "variance"
    MSE = "mse"
    W1 = "w1"
    COUNT = "count"
    GAP = "gap"


class ExperimentKind(str, Enum):
    """Experiment families the harness can run."""
    VARIANCE_DECAY = "variance-decay"
    MSE_VS_N = "mse-vs-n"
    MSE_VS_SIGMA2 = "mse-vs-sigma2"
    MSE_VS_DEPTH = "mse-vs-depth"
    MSE_VS_BETA = "mse-vs-beta"
    THEORY_VERIFY = "theory-verify"


class W1Method(str, Enum):
    """Wasserstein-1 estimator selected on the command line."""
    ONE_D = "1d"
    SLICED = "sliced"
    EXACT = "exact"
