"""Closed-form Bayes-optimal baselines under a known Gaussian-mixture prior.

For Y = X + sigma*Z with X ~ sum_i pi_i N(mu_i, Sigma_i) the posterior mean is

    E[X | Y=y] = sum_i w_i(y) [mu_i + Sigma_i (Sigma_i + sigma^2 I)^-1 (y - mu_i)]

with responsibilities w_i(y) proportional to pi_i N(y | mu_i, Sigma_i + sigma^2 I).
"""

import logging
from typing import Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import logsumexp

from denoiser.config import get_settings
from denoiser.exceptions import DimensionMismatch, SingularCovariance, ValidationError
from denoiser.models.enums import ComponentKind
from denoiser.models.mixture import GaussianMixture, validate_mixture
from denoiser.services.dataio import corrupt_array, sample_prior_array

logger = logging.getLogger(__name__)

MIN_MMSE_SAMPLES = 1000


def _component_terms(
    prior: GaussianMixture, sigma2: float, ys: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Unnormalized log responsibilities (M, K) and component shrinkage means (M, K, d)."""
    weights = prior.weights_array()
    means = prior.means_array()
    covs = prior.covariances_array()
    kinds = prior.kinds or [None] * prior.n_components
    m, d = ys.shape

    log_resp = np.empty((m, prior.n_components))
    shrunk = np.empty((m, prior.n_components, d))
    with np.errstate(divide="ignore"):
        log_weights = np.log(weights)

    for k in range(prior.n_components):
        diff = ys - means[k]
        if kinds[k] == ComponentKind.POINT_MASS:
            # N(y | mu, sigma^2 I): same normalizer as any other point mass
            maha = np.einsum("md,md->m", diff, diff) / sigma2
            logdet = d * np.log(sigma2)
            shrunk[:, k, :] = means[k]
        else:
            try:
                factor = cho_factor(covs[k] + sigma2 * np.eye(d), lower=True)
            except LinAlgError as e:
                raise SingularCovariance(
                    f"component {k}: Sigma + sigma^2 I is not positive definite"
                ) from e
            solved = cho_solve(factor, diff.T).T
            maha = np.einsum("md,md->m", diff, solved)
            logdet = 2.0 * np.sum(np.log(np.diag(factor[0])))
            shrunk[:, k, :] = means[k] + solved @ covs[k]
        log_resp[:, k] = log_weights[k] - 0.5 * (maha + logdet)
    return log_resp, shrunk


def _prepare(prior: GaussianMixture, sigma2: float, ys) -> Tuple[GaussianMixture, np.ndarray]:
    if not (np.isfinite(sigma2) and sigma2 > 0):
        raise ValidationError(f"sigma2 must be positive, got {sigma2}")
    prior = validate_mixture(prior)
    ys = np.asarray(ys, dtype=np.float64)
    if ys.ndim == 1:
        ys = ys.reshape(1, -1) if ys.shape[0] == prior.dim else ys.reshape(-1, 1)
    if ys.shape[1] != prior.dim:
        raise DimensionMismatch(prior.dim, ys.shape[1], "observation")
    return prior, ys


def responsibilities(prior: GaussianMixture, sigma2: float, ys) -> np.ndarray:
    """Posterior component probabilities w_i(y), one row per observation."""
    prior, ys = _prepare(prior, sigma2, ys)
    log_resp, _ = _component_terms(prior, sigma2, ys)
    return np.exp(log_resp - logsumexp(log_resp, axis=1, keepdims=True))


def gmm_posterior_means(prior: GaussianMixture, sigma2: float, ys) -> np.ndarray:
    """Posterior means for a batch of observations, shape (M, d)."""
    prior, ys = _prepare(prior, sigma2, ys)
    log_resp, shrunk = _component_terms(prior, sigma2, ys)
    resp = np.exp(log_resp - logsumexp(log_resp, axis=1, keepdims=True))
    return np.einsum("mk,mkd->md", resp, shrunk)


def gmm_posterior_mean(prior: GaussianMixture, sigma2: float, y) -> np.ndarray:
    """Posterior mean E[X | Y=y] for a single observation.

    Raises:
        DimensionMismatch: If ``y`` does not match the prior dimension.
        SingularCovariance: If a component's Sigma + sigma^2 I cannot be factorized.
    """
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if y.ndim != 1:
        raise ValidationError(f"expected a single observation vector, got shape {y.shape}")
    if y.shape[0] != prior.dim:
        raise DimensionMismatch(prior.dim, y.shape[0], "observation")
    return gmm_posterior_means(prior, sigma2, y.reshape(1, -1))[0]


def bayes_mmse(
    prior: GaussianMixture,
    sigma2: float,
    dim: int,
    samples: int,
    seed: int,
) -> Tuple[float, float]:
    """Monte Carlo Bayes MMSE E||X - E[X|Y]||^2 and its standard error.

    Pairs (X, Y) come from the ``mmse/prior`` and ``mmse/noise`` streams of
    ``seed``; posterior means are evaluated in chunks of
    ``Settings.mc_chunk_size`` rows.

    Raises:
        ValidationError: If ``samples`` < 1000 or the prior is invalid.
    """
    if samples < MIN_MMSE_SAMPLES:
        raise ValidationError(f"samples must be >= {MIN_MMSE_SAMPLES}, got {samples}")
    prior = validate_mixture(prior)
    if prior.dim != dim:
        raise DimensionMismatch(dim, prior.dim, "prior")

    clean = sample_prior_array(prior, samples, seed, label="mmse/prior")
    noisy = corrupt_array(clean, sigma2, seed, label="mmse/noise")

    chunk = get_settings().mc_chunk_size
    errors = np.empty(samples)
    for start in range(0, samples, chunk):
        stop = min(start + chunk, samples)
        est = gmm_posterior_means(prior, sigma2, noisy[start:stop])
        diff = clean[start:stop] - est
        errors[start:stop] = np.einsum("md,md->m", diff, diff)

    mmse = float(errors.mean())
    stderr = float(errors.std(ddof=1) / np.sqrt(samples))
    logger.info(f"Bayes MMSE at sigma2={sigma2:g}: {mmse:.6g} (stderr {stderr:.2g}, {samples} samples)")
    return mmse, stderr
