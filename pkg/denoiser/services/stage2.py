"""Stage 2 posterior-mean readout.

The noisy queries, carried past Stage 1 by the long-range skip, attend to the
refined particle prior with scale beta_c = 1/sigma^2. Against a discrete
prior this kernel average is exactly the Bayes posterior mean. Only the
context is ever truncated; queries are always the original noisy tokens.
"""

import logging
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from denoiser.exceptions import ValidationError
from denoiser.models.particles import ParticleSet
from denoiser.models.schedule import DenoiseConfig
from denoiser.services import kernel
from denoiser.services.stage1 import Trajectory, TruncationReport, run_stage1, run_truncated

logger = logging.getLogger(__name__)


class DenoiseResult(BaseModel):
    """Output of the two-stage pipeline.

    Attributes:
        estimates: Posterior-mean estimates, one per noisy query.
        readout_depth: Layer whose particles served as the prior.
        readout_time: t = readout_depth * h.
        config: The configuration that produced the result.
        truncation: Truncation report when the context was truncated.
    """

    model_config = ConfigDict(frozen=True)

    estimates: ParticleSet
    readout_depth: int = Field(..., ge=0)
    readout_time: float = Field(..., ge=0)
    config: DenoiseConfig
    truncation: Optional[TruncationReport] = None


def posterior_readout(context: ParticleSet, queries: ParticleSet, beta_c: float) -> ParticleSet:
    """Cross-attention posterior means of ``queries`` against the particle prior ``context``.

    Args:
        context: Particle prior Z(l).
        queries: Noisy tokens.
        beta_c: Cross-attention scale, normally 1/sigma^2.

    Returns:
        One estimate per query, each inside the context's per-coordinate range.

    Raises:
        DimensionMismatch: If the two sets live in different dimensions.
    """
    if not (np.isfinite(beta_c) and beta_c > 0):
        raise ValidationError(f"beta_c must be positive, got {beta_c}")
    queries.require_dim(context.dim, "queries")
    return ParticleSet(points=kernel.barycenters(context.points, queries.points, beta_c))


def one_shot_tweedie(noisy: ParticleSet, sigma2: float) -> ParticleSet:
    """Empirical Tweedie-like estimate: Stage 2 with the noisy cloud as its own prior."""
    if not sigma2 > 0:
        raise ValidationError(f"sigma2 must be positive, got {sigma2}")
    return posterior_readout(noisy, noisy, 1.0 / sigma2)


def tweedie_displacement(noisy: ParticleSet, sigma2: float) -> np.ndarray:
    """Displacements sum_j b_ij (x_j - x_i), the in-context estimate of sigma^2 grad log p."""
    if not sigma2 > 0:
        raise ValidationError(f"sigma2 must be positive, got {sigma2}")
    return -kernel.energy_gradients(noisy.points, noisy.points, 1.0 / sigma2)


def two_stage_denoise(
    noisy: ParticleSet,
    config: DenoiseConfig,
    snapshot_every: int = 0,
) -> Tuple[DenoiseResult, Trajectory]:
    """Run Stage 1 to the readout depth, then read out posterior means.

    Args:
        noisy: Corrupted tokens; used as initial particles and as queries.
        config: Run configuration.
        snapshot_every: Extra snapshot spacing for the returned trajectory.

    Returns:
        (result, trajectory); the trajectory stops at the readout depth.

    Raises:
        ScheduleError: If the configuration gives eta >= 1.
        EmptyAfterTruncation: If truncation removes every token.
    """
    schedule = config.schedule()
    depth = config.resolved_readout_depth(schedule)

    report = None
    if config.truncates:
        trajectory, report = run_truncated(noisy, config, snapshot_every, depth=depth)
    else:
        trajectory = run_stage1(noisy, config, snapshot_every, depth=depth)

    prior = trajectory.at(depth).particles
    estimates = posterior_readout(prior, noisy, config.beta_c)
    logger.info(
        f"Two-stage readout at layer {depth} (t={schedule.time_at(depth):g}) "
        f"with beta_c={config.beta_c:g} over {prior.count} particles"
    )
    result = DenoiseResult(
        estimates=estimates,
        readout_depth=depth,
        readout_time=schedule.time_at(depth),
        config=config,
        truncation=report,
    )
    return result, trajectory


def amortized_query(
    cached: Trajectory,
    depth: int,
    new_queries: ParticleSet,
    beta_c: float,
) -> ParticleSet:
    """Answer new queries against a cached Stage 1 snapshot without recomputing it.

    Raises:
        SnapshotNotFound: If ``depth`` was not recorded.
    """
    return posterior_readout(cached.at(depth).particles, new_queries, beta_c)
