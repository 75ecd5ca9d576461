"""Evaluation metrics: x-prediction MSE, empirical variance and Wasserstein-1 distances."""

import logging
from typing import Optional, Sequence, Union

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from scipy.stats import wasserstein_distance

from denoiser.config import get_settings
from denoiser.exceptions import DimensionMismatch, EmptyInput, TooFewPoints, TooLarge, ValidationError
from denoiser.models.particles import ParticleSet
from denoiser.services.dataio import rng_for

logger = logging.getLogger(__name__)

Samples = Union[Sequence[float], np.ndarray]


def mse(estimates: ParticleSet, truth: ParticleSet) -> float:
    """Mean over particles of the squared Euclidean error."""
    estimates.require_dim(truth.dim, "estimates")
    if estimates.count != truth.count:
        raise DimensionMismatch(truth.count, estimates.count, "estimate count")
    diff = estimates.points - truth.points
    return float(np.einsum("nd,nd->n", diff, diff).mean())


def empirical_variance(points: ParticleSet) -> float:
    """Trace of the unbiased sample covariance divided by the dimension."""
    if points.count < 2:
        raise TooFewPoints(f"empirical variance needs at least 2 points, got {points.count}")
    return float(np.var(points.points, axis=0, ddof=1).mean())


def _as_samples(values: Samples, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise EmptyInput(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def w1_1d(a: Samples, b: Samples) -> float:
    """Exact 1-D Wasserstein-1 distance between two empirical measures.

    Equal sizes use the sorted matching; unequal sizes integrate the absolute
    difference of the two CDFs over the merged breakpoints.
    """
    a = _as_samples(a, "a")
    b = _as_samples(b, "b")
    if a.size == b.size:
        return float(np.abs(np.sort(a, kind="stable") - np.sort(b, kind="stable")).mean())
    return float(wasserstein_distance(a, b))


def w1_exact_matching(a: ParticleSet, b: ParticleSet) -> float:
    """Optimal assignment cost per point under Euclidean ground cost.

    Raises:
        TooLarge: If the sets hold more than ``Settings.exact_matching_max`` points.
    """
    b.require_dim(a.dim, "b")
    if a.count != b.count:
        raise DimensionMismatch(a.count, b.count, "point count")
    limit = get_settings().exact_matching_max
    if a.count > limit:
        raise TooLarge(f"exact matching accepts at most {limit} points, got {a.count}")
    cost = cdist(a.points, b.points)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum() / a.count)


def random_directions(dim: int, projections: int, seed: int) -> np.ndarray:
    """Uniform unit directions on the sphere, one per row."""
    if projections < 1:
        raise ValidationError(f"projections must be >= 1, got {projections}")
    theta = rng_for(seed, "projections").standard_normal((projections, dim))
    return theta / np.linalg.norm(theta, axis=1, keepdims=True)


def sliced_projection_costs(
    a: ParticleSet, b: ParticleSet, projections: Optional[int] = None, seed: int = 0
) -> np.ndarray:
    """1-D W1 of the two clouds along each random direction."""
    b.require_dim(a.dim, "b")
    if projections is None:
        projections = get_settings().sliced_projections
    if projections < 1:
        raise ValidationError(f"projections must be >= 1, got {projections}")
    if a.dim == 1:
        return np.array([w1_1d(a.points[:, 0], b.points[:, 0])])

    theta = random_directions(a.dim, projections, seed)
    pa = a.points @ theta.T
    pb = b.points @ theta.T
    if a.count == b.count:
        return np.abs(np.sort(pa, axis=0) - np.sort(pb, axis=0)).mean(axis=0)
    return np.array([wasserstein_distance(pa[:, k], pb[:, k]) for k in range(projections)])


def w1_sliced(a: ParticleSet, b: ParticleSet, projections: Optional[int] = None, seed: int = 0) -> float:
    """Sliced W1: mean over random directions of the projected 1-D W1.

    In one dimension this is exactly ``w1_1d``.
    """
    return float(sliced_projection_costs(a, b, projections, seed).mean())


def w1(a: ParticleSet, b: ParticleSet, projections: Optional[int] = None, seed: int = 0) -> float:
    """Default W1 estimate: exact in 1-D, sliced otherwise."""
    if a.dim == 1:
        b.require_dim(1, "b")
        return w1_1d(a.points[:, 0], b.points[:, 0])
    return w1_sliced(a, b, projections, seed)
