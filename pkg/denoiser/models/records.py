"""Metrics record model: one row of experiment output."""

import math
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from denoiser.exceptions import ValidationError
from denoiser.models.enums import ValueKind


class MetricsRecord(BaseModel):
    """One experiment sample.

    A failed harness cell is recorded with ``value`` NaN and a diagnostic;
    every other record carries a finite value.

    Attributes:
        label: Series name (``two_stage``, ``variance``, ``bayes_mmse``, ...).
        sweep_value: Value of the swept parameter for this cell.
        depth_index: Layer index at which the value was taken.
        time: t = depth_index * h.
        value_kind: What ``value`` measures.
        value: The measurement.
        seed: Seed of the cell (0 for seed-independent reference curves).
        diagnostic: Error text for failed cells.
    """

    model_config = ConfigDict(frozen=True)

    label: str = Field(..., description="Series label")
    sweep_value: float = Field(default=0.0, description="Swept parameter value")
    depth_index: int = Field(default=0, ge=0, description="Layer index")
    time: float = Field(default=0.0, description="Depth time t = l*h")
    value_kind: ValueKind = Field(..., description="Kind of measurement")
    value: float = Field(..., description="Measured value")
    seed: int = Field(default=0, ge=0, description="Cell seed")
    diagnostic: Optional[str] = Field(default=None, description="Failure diagnostic")

    @model_validator(mode="after")
    def _check(self) -> "MetricsRecord":
        if not (math.isfinite(self.time) and self.time >= 0):
            raise ValidationError(f"record time must be finite and >= 0, got {self.time}")
        if not math.isfinite(self.value) and self.diagnostic is None:
            raise ValidationError(f"record value must be finite, got {self.value} for {self.label}")
        return self

    def sort_key(self) -> tuple:
        """Canonical ordering key used for records.csv."""
        return (self.label, self.sweep_value, self.seed, self.depth_index, self.value_kind.value)
