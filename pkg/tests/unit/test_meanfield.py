"""Unit tests for the mean-field theory helpers."""

import math

import numpy as np
import pytest

from denoiser.exceptions import ValidationError
from denoiser.services.meanfield import (
    auto_radius,
    covariance_flow_solve,
    denoising_time,
    first_passage_time,
    hitting_time,
    recovery_gap,
    truncation_loss_probability,
    variance_ode_solve,
)


class TestHittingTime:
    """Tests for the closed-form hitting time."""

    def test_known_value(self):
        assert hitting_time(1.25, 1.0, 1.0) == pytest.approx(0.23657178, abs=1e-8)

    def test_large_beta_limit(self):
        assert hitting_time(1.25, 1.0, 1e12) == pytest.approx(0.125, abs=1e-12)

    def test_zero_when_already_there(self):
        assert hitting_time(2.0, 2.0, 3.0) == 0.0

    @pytest.mark.parametrize(
        "v0, v_star, beta",
        [(1.0, 0.0, 1.0), (1.0, 2.0, 1.0), (1.0, 0.5, 0.0)],
    )
    def test_invalid_arguments(self, v0, v_star, beta):
        with pytest.raises(ValidationError):
            hitting_time(v0, v_star, beta)

    def test_first_passage_agrees(self):
        assert first_passage_time(1.25, 1.0, 1.0) == pytest.approx(hitting_time(1.25, 1.0, 1.0), abs=1e-8)

    def test_first_passage_small_target(self):
        assert first_passage_time(2.0, 0.01, 5.0) == pytest.approx(hitting_time(2.0, 0.01, 5.0), abs=1e-7)

    def test_first_passage_at_start(self):
        assert first_passage_time(1.0, 1.0, 2.0) == 0.0


class TestVarianceOde:
    """Tests for variance_ode_solve."""

    def test_reaches_target_at_hitting_time(self):
        t = hitting_time(1.25, 1.0, 1.0)

        values = variance_ode_solve(1.25, 1.0, [0.0, t])

        assert values[0] == 1.25
        assert values[1] == pytest.approx(1.0, abs=1e-8)

    def test_satisfies_implicit_solution(self):
        beta = 4.0
        grid = np.linspace(0.0, 2.0, 21)

        values = variance_ode_solve(3.0, beta, grid)

        for t, v in zip(grid, values):
            lhs = v + math.log(v) / beta
            rhs = 3.0 + math.log(3.0) / beta - 2.0 * t
            assert lhs == pytest.approx(rhs, abs=1e-8)

    def test_strictly_decreasing_and_positive(self):
        values = variance_ode_solve(1.0, 10.0, np.linspace(0.0, 5.0, 11))

        assert all(v > 0 for v in values)
        assert all(b < a for a, b in zip(values, values[1:]))

    @pytest.mark.parametrize("beta, t_end", [(10.0, 5.0), (1.0, 20.0), (100.0, 1.0), (1000.0, 0.6)])
    def test_long_horizon_stays_positive(self, beta, t_end):
        grid = np.linspace(0.0, t_end, 11)

        values = variance_ode_solve(1.0, beta, grid)

        assert all(v > 0 for v in values)
        assert all(b < a for a, b in zip(values, values[1:]))
        for t, v in zip(grid, values):
            assert v + math.log(v) / beta == pytest.approx(1.0 - 2.0 * t, abs=1e-7)

    def test_repeated_times_allowed(self):
        values = variance_ode_solve(1.0, 1.0, [0.0, 0.5, 0.5])

        assert values[1] == values[2]

    def test_empty_grid(self):
        assert variance_ode_solve(1.0, 1.0, []) == []

    def test_grid_must_start_at_zero(self):
        with pytest.raises(ValidationError):
            variance_ode_solve(1.0, 1.0, [0.1, 0.2])

    def test_grid_must_be_nondecreasing(self):
        with pytest.raises(ValidationError):
            variance_ode_solve(1.0, 1.0, [0.0, 0.3, 0.2])

    def test_rejects_nonpositive_v0(self):
        with pytest.raises(ValidationError):
            variance_ode_solve(0.0, 1.0, [0.0])


class TestCovarianceFlow:
    """Tests for covariance_flow_solve and the recovery gap."""

    def test_initial_state(self):
        state = covariance_flow_solve([[1.0, 0.0], [0.0, 0.25]], [0.0, 0.0], 0.5, 2.0, 0.0)

        assert sorted(state.eigenvalues) == pytest.approx([0.75, 1.5])
        assert np.allclose(state.covariance(), [[1.5, 0.0], [0.0, 0.75]])

    def test_conserved_quantity(self):
        sigma0 = [[1.0, 0.3], [0.3, 0.5]]
        start = covariance_flow_solve(sigma0, [1.0, -1.0], 0.25, 3.0, 0.0)
        later = covariance_flow_solve(sigma0, [1.0, -1.0], 0.25, 3.0, 0.7)

        assert np.allclose(later.conserved(), start.conserved(), atol=1e-12)

    def test_eigenvalues_shrink_and_frame_is_kept(self):
        sigma0 = [[2.0, 0.5], [0.5, 1.0]]
        start = covariance_flow_solve(sigma0, [0.0, 0.0], 0.25, 3.0, 0.0)
        later = covariance_flow_solve(sigma0, [0.0, 0.0], 0.25, 3.0, 1.0)

        assert all(b < a for a, b in zip(start.eigenvalues, later.eigenvalues))
        assert later.eigenvectors == start.eigenvectors
        assert later.mean == [0.0, 0.0]

    def test_covariance_is_symmetric(self):
        state = covariance_flow_solve([[1.0, 0.4], [0.4, 2.0]], [0.0, 0.0], 0.1, 5.0, 0.3)
        cov = state.covariance()

        assert np.allclose(cov, cov.T, atol=1e-14)

    def test_one_dimensional_matches_variance_relation(self):
        state = covariance_flow_solve([[1.0]], [0.0], 0.5, 2.0, 0.4)
        lam = state.eigenvalues[0]

        assert lam + math.log(lam) / 2.0 == pytest.approx(1.5 + math.log(1.5) / 2.0 - 0.4, abs=1e-12)

    def test_rejects_asymmetric_sigma0(self):
        with pytest.raises(ValidationError):
            covariance_flow_solve([[1.0, 0.2], [0.0, 1.0]], [0.0, 0.0], 0.1, 1.0, 0.1)

    def test_rejects_indefinite_sigma0_within_tau(self):
        with pytest.raises(ValidationError):
            covariance_flow_solve([[1.0, 0.0], [0.0, -0.05]], [0.0, 0.0], 0.25, 1.0, 0.1)

    def test_rejects_mean_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            covariance_flow_solve([[1.0]], [0.0, 0.0], 0.1, 1.0, 0.1)

    def test_denoising_time(self):
        assert denoising_time(0.25, 100.0) == 12.5

    def test_recovery_gap_shrinks_with_beta(self):
        coarse = recovery_gap([[1.0]], 0.25, 10.0)
        fine = recovery_gap([[1.0]], 0.25, 1000.0)

        assert fine < coarse
        assert fine < 1e-3


class TestTruncationRadius:
    def test_auto_radius_value(self):
        assert auto_radius(1000, 1.25, 0.0) == pytest.approx(9.40255, abs=1e-3)

    def test_auto_radius_floor(self):
        assert auto_radius(2, 1e-6, 5.0) == 11.0

    def test_auto_radius_needs_two_points(self):
        with pytest.raises(ValidationError):
            auto_radius(1, 1.0, 0.0)

    def test_loss_probability_value(self):
        assert truncation_loss_probability(1000, 14.0, [[1.25]], [0.0]) == pytest.approx(4.6e-5, rel=0.02)

    def test_loss_probability_capped_at_one(self):
        assert truncation_loss_probability(1000, 1.0, [[1.25]], [0.0]) == 1.0

    def test_loss_probability_infinite_radius(self):
        assert truncation_loss_probability(10, math.inf, [[1.0]], [0.0]) == 0.0

    def test_loss_probability_below_threshold(self):
        with pytest.raises(ValidationError):
            truncation_loss_probability(10, 2.0, [[1.0]], [1.0])
