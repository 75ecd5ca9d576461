"""Property-based tests for the Bayes posterior-mean oracle.

This module contains property-based tests that verify:
1. The kernel readout equals the oracle on equal-weight point-mass priors
2. Responsibilities form a distribution for every observation
3. The single-Gaussian posterior mean is the linear shrinkage formula
4. Posterior means move with translations of prior and observation
5. Relabeling the mixture components leaves the posterior mean unchanged
"""

import numpy as np
from hypothesis import given, settings, strategies as st

from denoiser.models.mixture import GaussianMixture
from denoiser.models.particles import ParticleSet
from denoiser.services.oracle import gmm_posterior_mean, gmm_posterior_means, responsibilities
from denoiser.services.validation import point_mass_relative_error


# =============================================================================
# Strategies
# =============================================================================

seeds = st.integers(min_value=0, max_value=2**32 - 1)
dims = st.integers(min_value=1, max_value=3)
noise = st.floats(min_value=0.05, max_value=4.0, allow_nan=False)


def cloud(seed: int, n: int, d: int, scale: float = 1.0) -> np.ndarray:
    return np.random.default_rng(seed).normal(scale=scale, size=(n, d))


def random_mixture(seed: int, k: int, d: int) -> GaussianMixture:
    rng = np.random.default_rng(seed)
    weights = rng.dirichlet(np.ones(k))
    weights = weights / weights.sum()
    means = rng.normal(scale=2.0, size=(k, d))
    covs = []
    for _ in range(k):
        a = rng.normal(size=(d, d))
        c = a @ a.T / d + 0.1 * np.eye(d)
        covs.append(((c + c.T) / 2.0).tolist())
    return GaussianMixture(weights=weights.tolist(), means=means.tolist(), covariances=covs)


# =============================================================================
# Property Tests
# =============================================================================

@given(seed=seeds, k=st.integers(min_value=1, max_value=8), d=dims, sigma2=noise)
@settings(max_examples=100)
def test_point_mass_readout_is_bayes_optimal(seed, k, d, sigma2):
    locations = ParticleSet(points=cloud(seed, k, d))
    queries = ParticleSet(points=cloud(seed + 1, 10, d, scale=2.0))

    assert point_mass_relative_error(locations, sigma2, queries) <= 1e-10


@given(seed=seeds, k=st.integers(min_value=1, max_value=4), d=dims, sigma2=noise)
@settings(max_examples=50)
def test_responsibilities_are_distributions(seed, k, d, sigma2):
    prior = random_mixture(seed, k, d)

    resp = responsibilities(prior, sigma2, cloud(seed + 1, 8, d, scale=3.0))

    assert np.all(resp >= 0)
    assert np.allclose(resp.sum(axis=1), 1.0, atol=1e-12)


@given(seed=seeds, d=dims, sigma2=noise)
@settings(max_examples=50)
def test_gaussian_shrinkage(seed, d, sigma2):
    prior = random_mixture(seed, 1, d)
    mean = np.asarray(prior.means[0])
    cov = np.asarray(prior.covariances[0])
    ys = cloud(seed + 1, 5, d, scale=2.0)

    expected = mean + (ys - mean) @ np.linalg.solve(cov + sigma2 * np.eye(d), cov)

    assert np.allclose(gmm_posterior_means(prior, sigma2, ys), expected, atol=1e-10)


@given(seed=seeds, k=st.integers(min_value=1, max_value=3), d=dims, sigma2=noise)
@settings(max_examples=50)
def test_translation_equivariance(seed, k, d, sigma2):
    prior = random_mixture(seed, k, d)
    shift = cloud(seed + 2, 1, d)[0]
    moved = prior.model_copy(update={"means": (np.asarray(prior.means) + shift).tolist()})
    ys = cloud(seed + 1, 6, d, scale=2.0)

    base = gmm_posterior_means(prior, sigma2, ys)
    shifted = gmm_posterior_means(moved, sigma2, ys + shift)

    assert np.allclose(shifted, base + shift, atol=1e-9)


@given(seed=seeds, k=st.integers(min_value=2, max_value=5), d=dims, sigma2=noise)
@settings(max_examples=50)
def test_component_order_is_irrelevant(seed, k, d, sigma2):
    prior = random_mixture(seed, k, d)
    order = np.random.default_rng(seed + 3).permutation(k)
    relabeled = GaussianMixture(
        weights=[prior.weights[i] for i in order],
        means=[prior.means[i] for i in order],
        covariances=[prior.covariances[i] for i in order],
    )

    for y in cloud(seed + 1, 4, d, scale=2.0):
        base = gmm_posterior_mean(prior, sigma2, y)
        assert np.allclose(gmm_posterior_mean(relabeled, sigma2, y), base, rtol=0, atol=1e-12)
