"""Run configuration and the depth schedule derived from it.

The noise level fixes the horizon T* = sigma^2 / 2, the layer count L0 fixes
the step h = T* / L0, and the bandwidth then fixes the residual weight
eta = beta * h. eta is not a free parameter and must stay below 1.
"""

import logging
import math
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from denoiser.exceptions import ScheduleError, ValidationError
from denoiser.models.enums import Integrator, TruncationMode

logger = logging.getLogger(__name__)

MAX_SEED = 2**64 - 1


class FlowSchedule(BaseModel):
    """Integration parameters for Stage 1.

    Attributes:
        t_star: Denoising horizon sigma^2 / 2.
        step_h: Time step per layer, t_star / layers_to_horizon.
        eta: Leaky residual weight beta * step_h, in (0, 1).
        layers_to_horizon: L0, the layer at which t = t_star.
        total_layers: Layers integrated in total (horizon_mult * L0).
        beta: Stage 1 kernel bandwidth.
    """

    model_config = ConfigDict(frozen=True)

    t_star: float
    step_h: float
    eta: float
    layers_to_horizon: int
    total_layers: int
    beta: float

    def time_at(self, depth: int) -> float:
        """Time t = depth * h reached after ``depth`` layers."""
        return depth * self.step_h


def derive_schedule(sigma2: float, beta: float, l0: int, horizon_mult: float = 1.0) -> FlowSchedule:
    """Derive the Stage 1 schedule from (sigma^2, beta, L0).

    Args:
        sigma2: Noise variance, > 0.
        beta: Stage 1 bandwidth, > 0.
        l0: Layers to the horizon T*, >= 1.
        horizon_mult: Total depth as a multiple of L0, >= 1.

    Returns:
        The FlowSchedule.

    Raises:
        ValidationError: If an argument is out of range.
        ScheduleError: If eta = beta * sigma^2 / (2 * L0) >= 1.
    """
    if not (math.isfinite(sigma2) and sigma2 > 0):
        raise ValidationError(f"sigma2 must be positive, got {sigma2}")
    if not (math.isfinite(beta) and beta > 0):
        raise ValidationError(f"beta must be positive, got {beta}")
    if int(l0) != l0 or l0 < 1:
        raise ValidationError(f"l0 must be an integer >= 1, got {l0}")
    if not (math.isfinite(horizon_mult) and horizon_mult >= 1):
        raise ValidationError(f"horizon_mult must be >= 1, got {horizon_mult}")
    l0 = int(l0)

    t_star = sigma2 / 2.0
    step_h = t_star / l0
    eta = beta * step_h
    if eta >= 1.0:
        raise ScheduleError(eta, beta, sigma2, l0)

    total_layers = max(l0, int(round(horizon_mult * l0)))
    return FlowSchedule(
        t_star=t_star,
        step_h=step_h,
        eta=eta,
        layers_to_horizon=l0,
        total_layers=total_layers,
        beta=beta,
    )


class DenoiseConfig(BaseModel):
    """User-facing run parameters.

    Attributes:
        sigma2: Noise variance.
        beta: Stage 1 bandwidth.
        beta_c: Stage 2 cross-attention scale; defaults to 1 / sigma2.
        l0: Layers to the horizon.
        horizon_mult: Total depth as a multiple of l0.
        truncation: ``none``, ``auto`` or an explicit radius.
        seed: 64-bit run seed.
        readout_depth: ``auto`` (= l0) or an explicit layer index.
        integrator: Depth integrator for Stage 1.
    """

    model_config = ConfigDict(frozen=True)

    sigma2: float = Field(..., description="Noise variance")
    beta: float = Field(..., description="Stage 1 kernel bandwidth")
    beta_c: Optional[float] = Field(default=None, description="Stage 2 scale (default 1/sigma2)")
    l0: int = Field(..., description="Layers to the denoising horizon")
    horizon_mult: float = Field(default=3.0, description="Total depth as a multiple of l0")
    truncation: Union[TruncationMode, float] = Field(default=TruncationMode.NONE)
    seed: int = Field(default=0, description="64-bit run seed")
    readout_depth: Union[Literal["auto"], int] = Field(default="auto")
    integrator: Integrator = Field(default=Integrator.EULER)

    @field_validator("sigma2", "beta")
    @classmethod
    def _positive(cls, value: float) -> float:
        if not (math.isfinite(value) and value > 0):
            raise ValidationError(f"sigma2 and beta must be positive, got {value}")
        return value

    @field_validator("beta_c")
    @classmethod
    def _positive_beta_c(cls, value: Optional[float]) -> Optional[float]:
        if value is not None and not (math.isfinite(value) and value > 0):
            raise ValidationError(f"beta_c must be positive, got {value}")
        return value

    @field_validator("l0")
    @classmethod
    def _l0(cls, value: int) -> int:
        if value < 1:
            raise ValidationError(f"l0 must be >= 1, got {value}")
        return value

    @field_validator("horizon_mult")
    @classmethod
    def _horizon(cls, value: float) -> float:
        if not (math.isfinite(value) and value >= 1):
            raise ValidationError(f"horizon_mult must be >= 1, got {value}")
        return value

    @field_validator("truncation")
    @classmethod
    def _radius(cls, value: Union[TruncationMode, float]) -> Union[TruncationMode, float]:
        if not isinstance(value, TruncationMode) and not (math.isfinite(value) and value > 0):
            raise ValidationError(f"truncation radius must be positive, got {value}")
        return value

    @field_validator("seed")
    @classmethod
    def _seed(cls, value: int) -> int:
        if not 0 <= value <= MAX_SEED:
            raise ValidationError(f"seed must be a 64-bit unsigned integer, got {value}")
        return value

    @field_validator("readout_depth")
    @classmethod
    def _depth(cls, value: Union[str, int]) -> Union[str, int]:
        if value != "auto" and value < 0:
            raise ValidationError(f"readout_depth must be >= 0, got {value}")
        return value

    @model_validator(mode="after")
    def _default_beta_c(self) -> "DenoiseConfig":
        if self.beta_c is None:
            object.__setattr__(self, "beta_c", 1.0 / self.sigma2)
        return self

    @property
    def truncation_radius(self) -> Optional[float]:
        """Explicit truncation radius, if one was configured."""
        return None if isinstance(self.truncation, TruncationMode) else float(self.truncation)

    @property
    def truncates(self) -> bool:
        return self.truncation != TruncationMode.NONE

    def schedule(self) -> FlowSchedule:
        """Derive the FlowSchedule for this configuration."""
        return derive_schedule(self.sigma2, self.beta, self.l0, self.horizon_mult)

    def resolved_readout_depth(self, schedule: Optional[FlowSchedule] = None) -> int:
        """Readout layer: l0 when ``auto``, else the configured index.

        Raises:
            ValidationError: If the index lies beyond the schedule's total depth.
        """
        schedule = schedule or self.schedule()
        if self.readout_depth == "auto":
            return schedule.layers_to_horizon
        depth = int(self.readout_depth)
        if depth > schedule.total_layers:
            raise ValidationError(
                f"readout_depth {depth} exceeds total_layers {schedule.total_layers}"
            )
        return depth
