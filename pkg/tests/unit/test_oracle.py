"""Unit tests for the Bayes-optimal baselines."""

import math

import numpy as np
import pytest

from denoiser.exceptions import DimensionMismatch, ValidationError
from denoiser.models.mixture import GaussianMixture
from denoiser.services.oracle import bayes_mmse, gmm_posterior_mean, gmm_posterior_means, responsibilities


class TestPosteriorMean:
    """Tests for gmm_posterior_mean."""

    def test_standard_normal_shrinkage(self, standard_normal):
        assert gmm_posterior_mean(standard_normal, 0.25, [1.0])[0] == pytest.approx(0.8, abs=1e-12)

    def test_point_masses(self):
        prior = GaussianMixture.point_masses([0.5, 0.5], [[-1.0], [1.0]])

        assert gmm_posterior_mean(prior, 0.5, [0.25])[0] == pytest.approx(math.tanh(0.5), abs=1e-12)

    def test_single_point_mass_returns_location(self):
        prior = GaussianMixture.point_masses([1.0], [[2.0, -1.0]])

        assert gmm_posterior_mean(prior, 3.0, [10.0, 10.0]).tolist() == [2.0, -1.0]

    def test_full_covariance_gaussian(self):
        mean = np.array([1.0, -0.5])
        cov = np.array([[1.0, 0.4], [0.4, 0.5]])
        y = np.array([0.3, 0.9])
        prior = GaussianMixture.gaussian(mean, cov)

        expected = mean + cov @ np.linalg.solve(cov + 0.2 * np.eye(2), y - mean)

        assert np.allclose(gmm_posterior_mean(prior, 0.2, y), expected, atol=1e-12)

    def test_far_observation_is_finite(self, symmetric_mixture):
        est = gmm_posterior_mean(symmetric_mixture, 0.01, [1e3, 1e3])

        assert np.all(np.isfinite(est))

    def test_batch_matches_single(self, symmetric_mixture, rng):
        ys = rng.normal(size=(7, 2))

        batch = gmm_posterior_means(symmetric_mixture, 0.3, ys)

        for y, row in zip(ys, batch):
            assert np.allclose(gmm_posterior_mean(symmetric_mixture, 0.3, y), row, atol=1e-14)

    def test_dimension_mismatch(self, standard_normal):
        with pytest.raises(DimensionMismatch):
            gmm_posterior_mean(standard_normal, 0.25, [1.0, 2.0])

    def test_rejects_nonpositive_noise(self, standard_normal):
        with pytest.raises(ValidationError):
            gmm_posterior_mean(standard_normal, 0.0, [1.0])


class TestResponsibilities:
    def test_sum_to_one(self, symmetric_mixture, rng):
        resp = responsibilities(symmetric_mixture, 0.5, rng.normal(size=(5, 2)))

        assert np.allclose(resp.sum(axis=1), 1.0, atol=1e-12)

    def test_symmetric_point(self, symmetric_mixture):
        assert responsibilities(symmetric_mixture, 0.5, [0.0, 0.0])[0] == pytest.approx([0.5, 0.5])

    def test_zero_weight_component_gets_nothing(self):
        prior = GaussianMixture.isotropic([1.0, 0.0], [[0.0], [5.0]], 1.0)

        assert responsibilities(prior, 1.0, [5.0])[0].tolist() == [1.0, 0.0]


class TestBayesMmse:
    """Tests for the Monte Carlo Bayes MMSE."""

    def test_gaussian_closed_form(self, standard_normal):
        mmse, stderr = bayes_mmse(standard_normal, 0.25, 1, 20_000, seed=3)

        assert abs(mmse - 0.2) < 5 * stderr
        assert 0 < stderr < 0.01

    def test_deterministic(self, symmetric_mixture):
        first = bayes_mmse(symmetric_mixture, 0.5, 2, 2000, seed=9)
        second = bayes_mmse(symmetric_mixture, 0.5, 2, 2000, seed=9)

        assert first == second

    def test_below_noise_variance(self, symmetric_mixture):
        mmse, _ = bayes_mmse(symmetric_mixture, 0.5, 2, 5000, seed=1)

        assert mmse < 2 * 0.5

    def test_requires_enough_samples(self, standard_normal):
        with pytest.raises(ValidationError):
            bayes_mmse(standard_normal, 0.25, 1, 999, seed=0)

    def test_dimension_mismatch(self, standard_normal):
        with pytest.raises(DimensionMismatch):
            bayes_mmse(standard_normal, 0.25, 2, 1000, seed=0)
