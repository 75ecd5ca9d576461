"""Stage 1 particle refinement.

Each layer moves every particle toward its attention barycenter with the
leaky residual update z_i <- (1 - eta) z_i + eta * F(z_i), all barycenters
taken against the pre-update state. Integrated to depth L0 the cloud
approximates the clean prior; the hard-truncated variant first drops the
tokens outside a ball of radius R.
"""

import logging
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from denoiser.exceptions import EmptyAfterTruncation, SnapshotNotFound, ValidationError
from denoiser.models.enums import Integrator, TruncationMode
from denoiser.models.particles import ParticleSet
from denoiser.models.schedule import DenoiseConfig, FlowSchedule
from denoiser.services import kernel
from denoiser.services.meanfield import auto_radius

logger = logging.getLogger(__name__)


class Snapshot(BaseModel):
    """Particle state recorded after ``depth_index`` layers."""

    model_config = ConfigDict(frozen=True)

    depth_index: int = Field(..., ge=0)
    time: float = Field(..., ge=0)
    particles: ParticleSet


class Trajectory(BaseModel):
    """Recorded snapshots of a Stage 1 run, in increasing depth order.

    Snapshot 0 is the initial particle set.
    """

    model_config = ConfigDict(frozen=True)

    snapshots: List[Snapshot]
    schedule: FlowSchedule

    def depths(self) -> List[int]:
        return [s.depth_index for s in self.snapshots]

    def at(self, depth: int) -> Snapshot:
        """Snapshot recorded at ``depth``.

        Raises:
            SnapshotNotFound: If no snapshot was recorded at that depth.
        """
        for snapshot in self.snapshots:
            if snapshot.depth_index == depth:
                return snapshot
        raise SnapshotNotFound(depth, self.depths())

    @property
    def initial(self) -> ParticleSet:
        return self.snapshots[0].particles

    @property
    def final(self) -> Snapshot:
        return self.snapshots[-1]


class TruncationReport(BaseModel):
    """Outcome of hard truncation.

    Attributes:
        radius: Ball radius R.
        retained: Number of tokens inside the ball (N_R).
        dropped: Number of tokens outside it.
        retained_indices: Original indices of the retained tokens, in order.
    """

    model_config = ConfigDict(frozen=True)

    radius: float
    retained: int
    dropped: int
    retained_indices: List[int]

    @property
    def dropped_fraction(self) -> float:
        total = self.retained + self.dropped
        return self.dropped / total if total else 0.0


def _euler_layer(points: np.ndarray, beta: float, eta: float) -> np.ndarray:
    targets = kernel.barycenters(points, points, beta)
    return (1.0 - eta) * points + eta * targets


def _velocity(points: np.ndarray, beta: float) -> np.ndarray:
    return kernel.barycenters(points, points, beta) - points


def _rk4_layer(points: np.ndarray, beta: float, eta: float) -> np.ndarray:
    k1 = _velocity(points, beta)
    k2 = _velocity(points + 0.5 * eta * k1, beta)
    k3 = _velocity(points + 0.5 * eta * k2, beta)
    k4 = _velocity(points + eta * k3, beta)
    return points + (eta / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


_LAYERS = {
    Integrator.EULER: _euler_layer,
    Integrator.RK4: _rk4_layer,
}


def _check_step(beta: float, eta: float) -> None:
    if not (np.isfinite(beta) and beta > 0):
        raise ValidationError(f"beta must be positive, got {beta}")
    if not 0 < eta < 1:
        raise ValidationError(f"eta must lie in (0, 1), got {eta}")


def stage1_step(state: ParticleSet, beta: float, eta: float) -> ParticleSet:
    """One synchronous leaky-residual attention layer.

    Args:
        state: Current particles.
        beta: Kernel bandwidth.
        eta: Residual weight in (0, 1).

    Returns:
        The particles after one layer.
    """
    _check_step(beta, eta)
    return ParticleSet(points=_euler_layer(state.points, beta, eta))


def snapshot_depths(total: int, l0: int, snapshot_every: int) -> List[int]:
    """Depths recorded by run_stage1: 0, every ``snapshot_every``, L0 and the last layer."""
    if snapshot_every < 0:
        raise ValidationError(f"snapshot_every must be >= 0, got {snapshot_every}")
    depths = {0, total}
    if l0 <= total:
        depths.add(l0)
    if snapshot_every > 0:
        depths.update(range(0, total + 1, snapshot_every))
    return sorted(depths)


def run_stage1(
    init: ParticleSet,
    config: DenoiseConfig,
    snapshot_every: int = 0,
    depth: Optional[int] = None,
) -> Trajectory:
    """Integrate the Stage 1 flow and record snapshots.

    Args:
        init: Initial particles (the noisy tokens).
        config: Run configuration; its schedule fixes eta and the depth.
        snapshot_every: Record every this many layers (0: only 0, L0, last).
        depth: Layers to run; defaults to the schedule's total_layers.

    Returns:
        The Trajectory.

    Raises:
        ScheduleError: If the configuration gives eta >= 1.
    """
    schedule = config.schedule()
    total = schedule.total_layers if depth is None else int(depth)
    if total < 0:
        raise ValidationError(f"depth must be >= 0, got {total}")
    wanted = set(snapshot_depths(total, schedule.layers_to_horizon, snapshot_every))
    layer = _LAYERS[config.integrator]

    logger.info(
        f"Stage 1: N={init.count}, d={init.dim}, beta={schedule.beta:g}, "
        f"eta={schedule.eta:g}, layers={total}, integrator={config.integrator.value}"
    )

    snapshots = [Snapshot(depth_index=0, time=0.0, particles=init)]
    points = init.points
    for ell in range(1, total + 1):
        points = layer(points, schedule.beta, schedule.eta)
        if ell in wanted:
            snapshots.append(
                Snapshot(depth_index=ell, time=schedule.time_at(ell), particles=ParticleSet(points=points))
            )
            logger.debug(f"Stage 1 snapshot at layer {ell} (t={schedule.time_at(ell):g})")

    return Trajectory(snapshots=snapshots, schedule=schedule)


def hard_truncate(init: ParticleSet, radius: float) -> Tuple[ParticleSet, TruncationReport]:
    """Keep the points with Euclidean norm <= radius, in their original order.

    Raises:
        ValidationError: If the radius is not positive.
        EmptyAfterTruncation: If no point lies in the ball.
    """
    if not radius > 0:
        raise ValidationError(f"truncation radius must be positive, got {radius}")
    norms = np.linalg.norm(init.points, axis=1)
    kept = np.flatnonzero(norms <= radius)
    if kept.size == 0:
        raise EmptyAfterTruncation(radius, init.count)
    report = TruncationReport(
        radius=float(radius),
        retained=int(kept.size),
        dropped=int(init.count - kept.size),
        retained_indices=kept.tolist(),
    )
    if report.dropped:
        logger.info(f"Hard truncation at R={radius:g} dropped {report.dropped} of {init.count} tokens")
    if report.dropped == 0:
        return init, report
    return init.subset(kept), report


def resolve_radius(init: ParticleSet, config: DenoiseConfig) -> float:
    """Truncation radius for ``config``: explicit, or chosen from the sample's tail bound."""
    if config.truncation_radius is not None:
        return config.truncation_radius
    if init.count < 2:
        return float("inf")
    cov = np.atleast_2d(np.cov(init.points, rowvar=False))
    lambda_max = float(np.linalg.eigvalsh(cov).max())
    mean_norm = float(np.linalg.norm(init.points.mean(axis=0)))
    return auto_radius(init.count, max(lambda_max, np.finfo(float).tiny), mean_norm)


def run_truncated(
    init: ParticleSet,
    config: DenoiseConfig,
    snapshot_every: int = 0,
    depth: Optional[int] = None,
) -> Tuple[Trajectory, TruncationReport]:
    """Hard-truncate the context, then run Stage 1 on the retained tokens.

    Raises:
        ValidationError: If the configuration does not ask for truncation.
        EmptyAfterTruncation: If no token survives truncation.
    """
    if config.truncation == TruncationMode.NONE:
        raise ValidationError("run_truncated needs truncation 'auto' or an explicit radius")
    radius = resolve_radius(init, config)
    retained, report = hard_truncate(init, radius)
    return run_stage1(retained, config, snapshot_every, depth), report
