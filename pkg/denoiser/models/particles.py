"""Particle set model: the state of Stage 1 and the container for every point cloud."""

from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from denoiser.exceptions import DimensionMismatch, ValidationError


class ParticleSet(BaseModel):
    """An ordered collection of N points in R^d.

    The points are stored as a read-only ``(N, d)`` float64 array. A
    one-dimensional input is read as N points on the line.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    points: np.ndarray

    @field_validator("points", mode="before")
    @classmethod
    def _coerce_points(cls, value: Any) -> np.ndarray:
        arr = np.array(value, dtype=np.float64, copy=True)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2:
            raise ValidationError(f"points must be an (N, d) array, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise ValidationError("a particle set needs count >= 1")
        if arr.shape[1] < 1:
            raise ValidationError("a particle set needs dim >= 1")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("every point must have finite coordinates (no NaN/Inf)")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        return arr

    @classmethod
    def of(cls, points: Any) -> "ParticleSet":
        """Build a particle set from anything array-like."""
        return cls(points=points)

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    @property
    def count(self) -> int:
        return int(self.points.shape[0])

    def require_dim(self, dim: int, what: str = "particle set") -> None:
        """Raise DimensionMismatch unless this set lives in R^dim."""
        if self.dim != dim:
            raise DimensionMismatch(dim, self.dim, what)

    def subset(self, indices: Any) -> "ParticleSet":
        """Particles at ``indices``, in the given order."""
        return ParticleSet(points=self.points[np.asarray(indices, dtype=np.intp)])

    def shifted(self, offset: Any) -> "ParticleSet":
        return ParticleSet(points=self.points + np.asarray(offset, dtype=np.float64))

    def __len__(self) -> int:
        return self.count

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ParticleSet):
            return NotImplemented
        return self.points.shape == other.points.shape and bool(
            np.array_equal(self.points, other.points)
        )

    def __repr__(self) -> str:
        return f"<ParticleSet(count={self.count}, dim={self.dim})>"


def as_query(query: Any, dim: int) -> np.ndarray:
    """Coerce one query vector to a float64 array of length ``dim``."""
    q = np.atleast_1d(np.asarray(query, dtype=np.float64))
    if q.ndim != 1:
        raise ValidationError(f"query must be a vector, got shape {q.shape}")
    if q.shape[0] != dim:
        raise DimensionMismatch(dim, q.shape[0], "query")
    return q
