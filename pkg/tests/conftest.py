"""Shared fixtures."""

import numpy as np
import pytest

from denoiser.config import get_settings
from denoiser.models.mixture import GaussianMixture
from denoiser.models.schedule import DenoiseConfig


@pytest.fixture(autouse=True)
def fresh_settings():
    """Re-read PD_* variables in every test."""
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def symmetric_mixture() -> GaussianMixture:
    """Two isotropic components at (+-1, 0) with a = 0.1."""
    return GaussianMixture.isotropic([0.5, 0.5], [[-1.0, 0.0], [1.0, 0.0]], 0.01)


@pytest.fixture
def standard_normal() -> GaussianMixture:
    return GaussianMixture.gaussian([0.0], [[1.0]])


@pytest.fixture
def small_config() -> DenoiseConfig:
    """eta = 10 * 0.125 / 5 = 0.25."""
    return DenoiseConfig(sigma2=0.25, beta=10.0, l0=5, horizon_mult=2.0)
