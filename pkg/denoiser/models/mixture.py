"""Gaussian mixture prior and noise model, with the mixture validation operation."""

import logging
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from denoiser.exceptions import ValidationError
from denoiser.models.enums import ComponentKind

logger = logging.getLogger(__name__)

# Tolerances on the mixture invariants
WEIGHT_SUM_TOL = 1e-12
WEIGHT_RENORMALIZE_TOL = 1e-9
SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-10


class GaussianMixture(BaseModel):
    """Prior specification: component weights, means and covariances.

    A zero covariance is a point mass. ``kinds`` tags each component; when it
    is omitted, ``validate_mixture`` infers it from the covariance.

    Attributes:
        weights: K mixture weights.
        means: K mean vectors in R^d.
        covariances: K symmetric positive-semidefinite d x d matrices.
        kinds: Optional per-component kind tag.
    """

    model_config = ConfigDict(frozen=True)

    weights: List[float] = Field(..., description="Component weights")
    means: List[List[float]] = Field(..., description="Component means")
    covariances: List[List[List[float]]] = Field(..., description="Component covariances")
    kinds: Optional[List[ComponentKind]] = Field(default=None, description="Component kind tags")

    @classmethod
    def isotropic(
        cls,
        weights: Sequence[float],
        means: Sequence[Sequence[float]],
        variance: float,
    ) -> "GaussianMixture":
        """Mixture whose components all have covariance ``variance * I``."""
        dim = len(means[0])
        cov = (float(variance) * np.eye(dim)).tolist()
        kind = ComponentKind.POINT_MASS if variance == 0 else ComponentKind.ISOTROPIC
        return cls(
            weights=list(weights),
            means=[list(map(float, m)) for m in means],
            covariances=[cov for _ in means],
            kinds=[kind for _ in means],
        )

    @classmethod
    def point_masses(
        cls,
        weights: Sequence[float],
        locations: Sequence[Sequence[float]],
    ) -> "GaussianMixture":
        """Mixture of Dirac masses at ``locations``."""
        return cls.isotropic(weights, locations, 0.0)

    @classmethod
    def gaussian(cls, mean: Sequence[float], covariance: Sequence[Sequence[float]]) -> "GaussianMixture":
        """Single (possibly degenerate) Gaussian component."""
        return cls(
            weights=[1.0],
            means=[list(map(float, mean))],
            covariances=[np.asarray(covariance, dtype=np.float64).tolist()],
        )

    @property
    def n_components(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return len(self.means[0]) if self.means else 0

    def weights_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=np.float64)

    def means_array(self) -> np.ndarray:
        return np.asarray(self.means, dtype=np.float64).reshape(self.n_components, self.dim)

    def covariances_array(self) -> np.ndarray:
        return np.asarray(self.covariances, dtype=np.float64).reshape(
            self.n_components, self.dim, self.dim
        )

    def mean(self) -> np.ndarray:
        """Mean of the mixture law."""
        return self.weights_array() @ self.means_array()

    def covariance(self) -> np.ndarray:
        """Covariance of the mixture law (within plus between components)."""
        w = self.weights_array()
        mu = self.means_array()
        centered = mu - self.mean()
        within = np.einsum("k,kij->ij", w, self.covariances_array())
        between = np.einsum("k,ki,kj->ij", w, centered, centered)
        return within + between

    def is_single_gaussian(self) -> bool:
        return self.n_components == 1


class NoiseModel(BaseModel):
    """Isotropic Gaussian corruption of known variance."""

    model_config = ConfigDict(frozen=True)

    sigma2: float = Field(..., description="Noise variance")

    @field_validator("sigma2")
    @classmethod
    def _positive(cls, value: float) -> float:
        if not (np.isfinite(value) and value > 0):
            raise ValidationError(f"sigma2 must be positive, got {value}")
        return value


def _infer_kind(cov: np.ndarray) -> ComponentKind:
    if np.all(np.abs(cov) <= SYMMETRY_TOL):
        return ComponentKind.POINT_MASS
    scale = cov[0, 0]
    if np.all(np.abs(cov - scale * np.eye(cov.shape[0])) <= SYMMETRY_TOL):
        return ComponentKind.ISOTROPIC
    return ComponentKind.FULL


def validate_mixture(mix: GaussianMixture) -> GaussianMixture:
    """Check every mixture invariant and return the validated mixture.

    Weights whose sum is off by more than 1e-12 but at most 1e-9 are
    renormalized; a sum within 1e-12 is kept as is, so the operation is
    idempotent. Missing kind tags are inferred.

    Raises:
        ValidationError: naming the first violated invariant.
    """
    k = len(mix.weights)
    if k < 1:
        raise ValidationError("mixture needs at least one component")
    if len(mix.means) != k or len(mix.covariances) != k:
        raise ValidationError(
            f"component count mismatch: {k} weights, {len(mix.means)} means, "
            f"{len(mix.covariances)} covariances"
        )
    if mix.kinds is not None and len(mix.kinds) != k:
        raise ValidationError(f"component count mismatch: {k} weights, {len(mix.kinds)} kinds")

    dim = len(mix.means[0])
    if dim < 1:
        raise ValidationError("component means must have dimension >= 1")
    for i, mean in enumerate(mix.means):
        if len(mean) != dim:
            raise ValidationError(f"component {i} mean has dimension {len(mean)}, expected {dim}")
    for i, cov in enumerate(mix.covariances):
        if len(cov) != dim or any(len(row) != dim for row in cov):
            raise ValidationError(f"component {i} covariance is not {dim}x{dim}")

    weights = np.asarray(mix.weights, dtype=np.float64)
    means = np.asarray(mix.means, dtype=np.float64)
    covs = np.asarray(mix.covariances, dtype=np.float64)
    if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(means)) and np.all(np.isfinite(covs))):
        raise ValidationError("mixture parameters must be finite")

    if np.any(weights < 0):
        raise ValidationError(f"weights must be nonnegative, got {weights.tolist()}")
    total = float(weights.sum())
    deviation = abs(total - 1.0)
    if deviation > WEIGHT_RENORMALIZE_TOL:
        raise ValidationError(f"weights must sum to 1 (sum={total:g})")
    if deviation > WEIGHT_SUM_TOL:
        logger.debug(f"Renormalizing mixture weights (sum={total!r})")
        weights = weights / total

    kinds: List[ComponentKind] = []
    for i in range(k):
        cov = covs[i]
        asym = float(np.max(np.abs(cov - cov.T)))
        if asym > SYMMETRY_TOL:
            raise ValidationError(f"component {i} covariance is not symmetric (max |C-C^T|={asym:g})")
        min_eig = float(np.linalg.eigvalsh(cov).min())
        if min_eig < -PSD_TOL:
            raise ValidationError(
                f"component {i} covariance is not positive semidefinite (min eigenvalue={min_eig:g})"
            )
        inferred = _infer_kind(cov)
        if mix.kinds is None:
            kinds.append(inferred)
            continue
        tagged = ComponentKind(mix.kinds[i])
        if tagged == ComponentKind.POINT_MASS and inferred != ComponentKind.POINT_MASS:
            raise ValidationError(f"component {i} is tagged point_mass but has nonzero covariance")
        if tagged == ComponentKind.ISOTROPIC and inferred == ComponentKind.FULL:
            raise ValidationError(f"component {i} is tagged isotropic but its covariance is not a*I")
        kinds.append(tagged)

    return GaussianMixture(
        weights=weights.tolist(),
        means=means.tolist(),
        covariances=covs.tolist(),
        kinds=kinds,
    )
