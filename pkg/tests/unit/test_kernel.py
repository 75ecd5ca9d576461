"""Unit tests for the Gaussian-attention kernel."""

import math

import numpy as np
import pytest

from denoiser.exceptions import DimensionMismatch, ValidationError
from denoiser.models.particles import ParticleSet
from denoiser.services import kernel


@pytest.fixture
def line_context() -> ParticleSet:
    return ParticleSet(points=[[0.0], [1.0], [2.0]])


@pytest.fixture
def pair_context() -> ParticleSet:
    return ParticleSet(points=[[-1.0], [1.0]])


class TestAttentionWeights:
    """Tests for attention_weights."""

    def test_known_values(self, line_context):
        w = kernel.attention_weights(line_context, [0.0], 2.0)

        assert w == pytest.approx([0.7213991843, 0.2653879288, 0.0132128870], abs=1e-9)

    def test_sum_to_one(self, line_context):
        w = kernel.attention_weights(line_context, [0.7], 3.0)

        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(w >= 0)

    def test_huge_beta_is_one_hot(self, line_context):
        w = kernel.attention_weights(line_context, [1.9], 1e12)

        assert w.tolist() == [0.0, 0.0, 1.0]

    def test_single_point_context(self):
        w = kernel.attention_weights(ParticleSet(points=[[5.0, 5.0]]), [0.0, 0.0], 100.0)

        assert w.tolist() == [1.0]

    def test_dimension_mismatch(self, line_context):
        with pytest.raises(DimensionMismatch):
            kernel.attention_weights(line_context, [0.0, 0.0], 1.0)

    def test_rejects_nonpositive_beta(self, line_context):
        with pytest.raises(ValidationError):
            kernel.attention_weights(line_context, [0.0], 0.0)


class TestBarycenterAndDrift:
    def test_drift_known_value(self, pair_context):
        d = kernel.drift(pair_context, [0.5], 1.0)

        assert d[0] == pytest.approx(math.tanh(0.5) - 0.5, abs=1e-12)
        assert d[0] == pytest.approx(-0.037883, abs=1e-6)

    def test_barycenter_is_drift_plus_query(self, pair_context):
        f = kernel.barycenter(pair_context, [0.5], 1.0)

        assert f[0] == pytest.approx(0.462117, abs=1e-6)

    def test_barycenter_in_convex_hull(self, line_context):
        for q in (-50.0, 0.3, 1.5, 80.0):
            f = kernel.barycenter(line_context, [q], 4.0)
            assert 0.0 <= f[0] <= 2.0

    def test_block_size_does_not_change_results(self):
        rng = np.random.default_rng(3)
        context = rng.normal(size=(40, 3))
        queries = rng.normal(size=(37, 3))

        one = kernel.barycenters(context, queries, 2.0, block_size=1, workers=1)
        many = kernel.barycenters(context, queries, 2.0, block_size=16, workers=4)

        assert np.allclose(one, many, rtol=0, atol=1e-15)

    def test_weight_matrix_rows_stochastic(self):
        rng = np.random.default_rng(5)
        points = rng.normal(size=(20, 2))

        w = kernel.weight_matrix(points, points, 1.5)

        assert w.shape == (20, 20)
        assert np.allclose(w.sum(axis=1), 1.0, atol=1e-12)


class TestEnergy:
    """Tests for the energy and its gradient."""

    def test_known_value(self, pair_context):
        assert kernel.energy(pair_context, [0.0], 2.0) == pytest.approx((1 - math.log(2)) / 2, abs=1e-12)

    def test_gradient_vanishes_at_symmetric_point(self, pair_context):
        assert kernel.energy_gradient(pair_context, [0.0], 2.0)[0] == pytest.approx(0.0, abs=1e-15)

    def test_query_minus_gradient_is_barycenter(self, line_context):
        q = np.array([0.4])

        g = kernel.energy_gradient(line_context, q, 3.0)
        f = kernel.barycenter(line_context, q, 3.0)

        assert (q - g)[0] == pytest.approx(f[0], abs=1e-12)

    def test_gradient_matches_finite_differences(self):
        context = ParticleSet(points=[[0.0, 0.0], [1.0, 0.5], [-0.5, 1.0]])
        q = np.array([0.2, 0.3])
        step = 1e-6

        g = kernel.energy_gradient(context, q, 2.5)
        fd = [
            (kernel.energy(context, q + step * e, 2.5) - kernel.energy(context, q - step * e, 2.5)) / (2 * step)
            for e in np.eye(2)
        ]

        assert np.allclose(g, fd, atol=1e-7)

    def test_energy_of_far_query_is_finite(self, pair_context):
        assert math.isfinite(kernel.energy(pair_context, [1e4], 1e3))

    def test_rejects_nonpositive_beta_c(self, pair_context):
        with pytest.raises(ValidationError):
            kernel.energy(pair_context, [0.0], -1.0)


class TestEnergyGrid:
    def test_grid_shape_and_values(self):
        context = ParticleSet(points=[[0.0, 0.0], [1.0, 1.0]])

        xs, ys, values = kernel.energy_grid(context, 2.0, (-1.0, 2.0), (-1.0, 2.0), resolution=7)

        assert xs.shape == (7,) and ys.shape == (7,)
        assert values.shape == (7, 7)
        assert values[2, 3] == pytest.approx(kernel.energy(context, [xs[3], ys[2]], 2.0), abs=1e-12)

    def test_requires_two_dimensions(self, line_context):
        with pytest.raises(DimensionMismatch):
            kernel.energy_grid(line_context, 1.0, (0, 1), (0, 1))

    def test_rejects_tiny_resolution(self):
        with pytest.raises(ValidationError):
            kernel.energy_grid(ParticleSet(points=[[0.0, 0.0]]), 1.0, (0, 1), (0, 1), resolution=1)
