"""Unit tests for Stage 1 refinement and hard truncation."""

import numpy as np
import pytest

from denoiser.exceptions import EmptyAfterTruncation, ScheduleError, SnapshotNotFound, ValidationError
from denoiser.models.enums import Integrator, TruncationMode
from denoiser.models.particles import ParticleSet
from denoiser.models.schedule import DenoiseConfig
from denoiser.services.stage1 import (
    hard_truncate,
    resolve_radius,
    run_stage1,
    run_truncated,
    snapshot_depths,
    stage1_step,
)


class TestStage1Step:
    """Tests for a single layer."""

    def test_two_point_example(self):
        out = stage1_step(ParticleSet(points=[[0.0], [1.0]]), 2.0, 0.5)

        assert out.points[:, 0] == pytest.approx([0.1344707, 0.8655293], abs=1e-7)

    def test_single_particle_is_fixed(self):
        state = ParticleSet(points=[[3.0, -2.0]])

        assert np.allclose(stage1_step(state, 5.0, 0.3).points, state.points, rtol=0, atol=1e-15)

    def test_stays_in_bounding_box(self):
        rng = np.random.default_rng(11)
        state = ParticleSet(points=rng.normal(size=(30, 2)))

        out = stage1_step(state, 4.0, 0.4)

        assert np.all(out.points.min(axis=0) >= state.points.min(axis=0) - 1e-12)
        assert np.all(out.points.max(axis=0) <= state.points.max(axis=0) + 1e-12)

    @pytest.mark.parametrize("eta", [0.0, 1.0, 1.5])
    def test_rejects_eta_outside_unit_interval(self, eta):
        with pytest.raises(ValidationError):
            stage1_step(ParticleSet(points=[[0.0]]), 1.0, eta)


class TestSnapshotDepths:
    def test_default_spacing(self):
        assert snapshot_depths(10, 5, 0) == [0, 5, 10]

    def test_with_spacing(self):
        assert snapshot_depths(10, 5, 3) == [0, 3, 5, 6, 9, 10]

    def test_rejects_negative_spacing(self):
        with pytest.raises(ValidationError):
            snapshot_depths(10, 5, -1)


class TestRunStage1:
    """Tests for run_stage1."""

    def test_records_initial_horizon_and_final(self, small_config):
        init = ParticleSet(points=np.linspace(-1.0, 1.0, 9))

        traj = run_stage1(init, small_config)

        assert traj.depths() == [0, 5, 10]
        assert traj.initial == init
        assert traj.at(5).time == pytest.approx(0.125, rel=1e-12)
        assert traj.final.depth_index == 10

    def test_layers_match_repeated_steps(self, small_config):
        init = ParticleSet(points=[[0.0], [0.4], [1.0], [2.5]])
        schedule = small_config.schedule()

        traj = run_stage1(init, small_config, depth=3)
        manual = init
        for _ in range(3):
            manual = stage1_step(manual, schedule.beta, schedule.eta)

        assert np.allclose(traj.final.particles.points, manual.points, rtol=0, atol=1e-15)

    def test_contracts_the_cloud(self, small_config):
        rng = np.random.default_rng(2)
        init = ParticleSet(points=rng.normal(size=(50, 1)))

        traj = run_stage1(init, small_config)

        assert np.var(traj.final.particles.points) < np.var(init.points)

    def test_depth_zero_returns_initial_only(self, small_config):
        traj = run_stage1(ParticleSet(points=[[1.0]]), small_config, depth=0)

        assert traj.depths() == [0]

    def test_missing_snapshot(self, small_config):
        traj = run_stage1(ParticleSet(points=[[1.0]]), small_config)

        with pytest.raises(SnapshotNotFound):
            traj.at(3)

    def test_schedule_error_propagates(self):
        config = DenoiseConfig(sigma2=0.5, beta=2000.0, l0=200, horizon_mult=1.0)

        with pytest.raises(ScheduleError):
            run_stage1(ParticleSet(points=[[0.0]]), config)

    def test_rk4_agrees_with_euler_to_first_order(self):
        init = ParticleSet(points=np.linspace(-1.0, 1.0, 7))
        base = dict(sigma2=0.25, beta=4.0, l0=50, horizon_mult=1.0)

        euler = run_stage1(init, DenoiseConfig(**base)).final.particles.points
        rk4 = run_stage1(init, DenoiseConfig(**base, integrator=Integrator.RK4)).final.particles.points

        assert np.max(np.abs(euler - rk4)) < 1e-2


class TestTruncation:
    """Tests for hard truncation."""

    def test_keeps_points_in_ball_in_order(self):
        init = ParticleSet(points=[[0.0], [3.0], [-1.5], [2.0]])

        kept, report = hard_truncate(init, 2.0)

        assert kept == ParticleSet(points=[[0.0], [-1.5], [2.0]])
        assert report.retained_indices == [0, 2, 3]
        assert report.dropped == 1
        assert report.dropped_fraction == pytest.approx(0.25)

    def test_nothing_dropped_returns_same_set(self):
        init = ParticleSet(points=[[0.5], [-0.5]])

        kept, report = hard_truncate(init, 10.0)

        assert kept is init
        assert report.dropped == 0

    def test_empty_after_truncation(self):
        with pytest.raises(EmptyAfterTruncation):
            hard_truncate(ParticleSet(points=[[5.0], [6.0]]), 1.0)

    def test_rejects_nonpositive_radius(self):
        with pytest.raises(ValidationError):
            hard_truncate(ParticleSet(points=[[0.0]]), 0.0)

    def test_explicit_radius_is_used(self, small_config):
        config = small_config.model_copy(update={"truncation": 1.5})

        assert resolve_radius(ParticleSet(points=[[0.0], [9.0]]), config) == 1.5

    def test_auto_radius_keeps_gaussian_bulk(self, rng):
        init = ParticleSet(points=rng.normal(size=(500, 2)))
        config = DenoiseConfig(sigma2=0.25, beta=10.0, l0=5, truncation=TruncationMode.AUTO)

        radius = resolve_radius(init, config)

        assert radius > np.quantile(np.linalg.norm(init.points, axis=1), 0.9)

    def test_run_truncated_runs_on_retained(self, small_config):
        init = ParticleSet(points=[[0.0], [0.5], [40.0]])
        config = small_config.model_copy(update={"truncation": 5.0})

        traj, report = run_truncated(init, config)

        assert report.retained == 2
        assert traj.initial.count == 2

    def test_run_truncated_requires_truncation(self, small_config):
        with pytest.raises(ValidationError):
            run_truncated(ParticleSet(points=[[0.0]]), small_config)
