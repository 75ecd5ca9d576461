"""Cross-module oracles and the sequential-recovery checks.

The recovery checks sample f0 = gamma_tau * P0 for a single (possibly
degenerate) Gaussian prior, hard-truncate with the configured radius policy,
run Stage 1 to depth L0 (t = tau/2) and compare the evolved cloud with P0,
either through W1 against a fresh P0 sample or through the uniform gap of
the induced posterior means on a query grid. The remaining helpers are
brute-force oracles that share no code path with the functions they check.
"""

import itertools
import logging
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from denoiser.exceptions import DimensionMismatch, TooLarge, ValidationError
from denoiser.models.enums import TruncationMode
from denoiser.models.mixture import GaussianMixture, validate_mixture
from denoiser.models.particles import ParticleSet
from denoiser.models.schedule import DenoiseConfig
from denoiser.services import kernel, metrics, oracle
from denoiser.services.dataio import corrupt_array, sample_prior_array
from denoiser.services.stage1 import run_stage1, run_truncated
from denoiser.services.stage2 import posterior_readout

logger = logging.getLogger(__name__)

RadiusPolicy = Union[TruncationMode, float, str]

DEFAULT_L0 = 200
GRID_POINTS = 201
MAX_BRUTE_FORCE = 8


class RecoveryRow(BaseModel):
    """One cell of the recovery table."""

    model_config = ConfigDict(frozen=True)

    beta: float
    n: int = Field(..., ge=1)
    seed: int = Field(..., ge=0)
    retained: int = Field(..., ge=0)
    w1: float


def _check_prior(prior: GaussianMixture) -> GaussianMixture:
    prior = validate_mixture(prior)
    if not prior.is_single_gaussian():
        raise ValidationError(
            f"recovery checks need a single Gaussian prior, got {prior.n_components} components"
        )
    return prior


def _nondecreasing(values: Sequence[float], name: str) -> None:
    if not values:
        raise ValidationError(f"{name} must be nonempty")
    if any(b < a for a, b in zip(values, values[1:])):
        raise ValidationError(f"{name} must be nondecreasing, got {list(values)}")


def evolve_noisy_prior(
    prior: GaussianMixture,
    tau: float,
    beta: float,
    n: int,
    radius_policy: RadiusPolicy,
    seed: int,
    l0: int = DEFAULT_L0,
) -> ParticleSet:
    """Sample n tokens of gamma_tau * P0 and run the (truncated) flow to depth L0."""
    config = DenoiseConfig(
        sigma2=tau, beta=beta, l0=l0, horizon_mult=1.0, truncation=radius_policy, seed=seed
    )
    noisy = ParticleSet(
        points=corrupt_array(sample_prior_array(prior, n, seed), tau, seed)
    )
    if config.truncates:
        trajectory, _ = run_truncated(noisy, config, depth=l0)
    else:
        trajectory = run_stage1(noisy, config, depth=l0)
    return trajectory.at(l0).particles


def recovery_w1(prior: GaussianMixture, evolved: ParticleSet, seed: int) -> float:
    """W1 between an evolved cloud and a fresh P0 sample of the same size."""
    reference = ParticleSet(points=sample_prior_array(prior, evolved.count, seed, label="reference"))
    return metrics.w1(evolved, reference, seed=seed)


def posterior_gap(prior: GaussianMixture, evolved: ParticleSet, tau: float, bound: float) -> float:
    """sup over the query grid of |m_evolved(y) - m_P0(y)|."""
    grid = query_grid(prior.dim, bound)
    particle_means = posterior_readout(evolved, ParticleSet(points=grid), 1.0 / tau).points
    oracle_means = oracle.gmm_posterior_means(prior, tau, grid)
    return float(np.linalg.norm(particle_means - oracle_means, axis=1).max())


def recovery_trend_check(
    prior: GaussianMixture,
    tau: float,
    betas: Sequence[float],
    ns: Sequence[int],
    radius_policy: RadiusPolicy,
    seeds: Sequence[int],
    l0: int = DEFAULT_L0,
) -> List[RecoveryRow]:
    """W1 between the evolved cloud and P0 for every (beta, N, seed).

    The reference is a fresh P0 sample of the retained size; W1 is exact in
    one dimension and sliced otherwise.

    Raises:
        ValidationError: If the prior is not a single Gaussian, or betas/ns
            are empty or decreasing.
    """
    prior = _check_prior(prior)
    _nondecreasing(list(betas), "betas")
    _nondecreasing(list(ns), "ns")
    if not seeds:
        raise ValidationError("seeds must be nonempty")

    rows = []
    for beta in betas:
        for n in ns:
            for seed in seeds:
                evolved = evolve_noisy_prior(prior, tau, beta, n, radius_policy, seed, l0)
                value = recovery_w1(prior, evolved, seed)
                rows.append(
                    RecoveryRow(beta=beta, n=n, seed=seed, retained=evolved.count, w1=value)
                )
                logger.debug(f"Recovery cell beta={beta:g} N={n} seed={seed}: W1={value:.4g}")
    return rows


def mean_by_cell(rows: Sequence[RecoveryRow]) -> Dict[Tuple[float, int], float]:
    """Seed-averaged W1 keyed by (beta, N)."""
    grouped: Dict[Tuple[float, int], List[float]] = {}
    for row in rows:
        grouped.setdefault((row.beta, row.n), []).append(row.w1)
    return {key: float(np.mean(values)) for key, values in grouped.items()}


def query_grid(dim: int, bound: float, points: int = GRID_POINTS) -> np.ndarray:
    """Uniform grid of observations with norm <= bound.

    One axis is gridded per dimension up to two; further coordinates stay 0.
    """
    if not bound > 0:
        raise ValidationError(f"grid bound must be positive, got {bound}")
    axis = np.linspace(-bound, bound, points)
    if dim == 1:
        return axis.reshape(-1, 1)
    xx, yy = np.meshgrid(axis, axis)
    grid = np.zeros((xx.size, dim))
    grid[:, 0] = xx.ravel()
    grid[:, 1] = yy.ravel()
    return grid[np.linalg.norm(grid, axis=1) <= bound]


def posterior_uniform_gap(
    prior: GaussianMixture,
    tau: float,
    beta: float,
    n: int,
    radius_policy: RadiusPolicy,
    m_grid_bound: float,
    seed: int,
    l0: int = DEFAULT_L0,
) -> float:
    """sup over |y| <= M of the distance between the particle and oracle posterior means."""
    prior = _check_prior(prior)
    evolved = evolve_noisy_prior(prior, tau, beta, n, radius_policy, seed, l0)
    gap = posterior_gap(prior, evolved, tau, m_grid_bound)
    logger.debug(f"Posterior gap beta={beta:g} N={n} seed={seed}: {gap:.4g}")
    return gap


# -- brute-force oracles ----------------------------------------------------------


def finite_difference_gradient(
    context: ParticleSet, query, beta_c: float, step: float = 1e-5
) -> np.ndarray:
    """Central finite differences of the attention energy at ``query``."""
    query = np.atleast_1d(np.asarray(query, dtype=np.float64))
    grad = np.empty_like(query)
    for i in range(query.shape[0]):
        offset = np.zeros_like(query)
        offset[i] = step
        grad[i] = (
            kernel.energy(context, query + offset, beta_c)
            - kernel.energy(context, query - offset, beta_c)
        ) / (2.0 * step)
    return grad


def brute_force_w1(a: ParticleSet, b: ParticleSet) -> float:
    """Minimal matching cost per point by enumerating every permutation."""
    b.require_dim(a.dim, "b")
    if a.count != b.count:
        raise DimensionMismatch(a.count, b.count, "point count")
    if a.count > MAX_BRUTE_FORCE:
        raise TooLarge(f"brute-force matching accepts at most {MAX_BRUTE_FORCE} points")
    cost = np.linalg.norm(a.points[:, None, :] - b.points[None, :, :], axis=2)
    rows = np.arange(a.count)
    best = min(cost[rows, list(perm)].sum() for perm in itertools.permutations(range(a.count)))
    return float(best / a.count)


def point_mass_relative_error(locations: ParticleSet, sigma2: float, queries: ParticleSet) -> float:
    """Largest relative gap between the kernel readout and the oracle on an equal-weight point-mass prior."""
    prior = GaussianMixture.point_masses(
        [1.0 / locations.count] * locations.count, locations.points.tolist()
    )
    readout = posterior_readout(locations, queries, 1.0 / sigma2).points
    exact = oracle.gmm_posterior_means(prior, sigma2, queries.points)
    scale = np.maximum(np.linalg.norm(exact, axis=1), 1.0)
    return float((np.linalg.norm(readout - exact, axis=1) / scale).max())
