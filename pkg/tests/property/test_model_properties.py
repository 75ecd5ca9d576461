"""Property-based tests for the configuration models.

This module contains property-based tests that verify:
1. derive_schedule succeeds exactly when beta * sigma^2 / (2 * L0) < 1
2. A derived schedule satisfies h = T*/L0 and eta = beta * h
3. validate_mixture is idempotent
4. ParticleSet reports the shape of its points
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from denoiser.exceptions import ScheduleError
from denoiser.models.mixture import GaussianMixture, validate_mixture
from denoiser.models.particles import ParticleSet
from denoiser.models.schedule import derive_schedule


# =============================================================================
# Strategies
# =============================================================================

noise = st.floats(min_value=0.01, max_value=10.0, allow_nan=False)
betas = st.floats(min_value=0.01, max_value=1000.0, allow_nan=False)
layers = st.integers(min_value=1, max_value=5000)
horizons = st.floats(min_value=1.0, max_value=5.0, allow_nan=False)
seeds = st.integers(min_value=0, max_value=2**32 - 1)


# =============================================================================
# Property Tests
# =============================================================================

@given(sigma2=noise, beta=betas, l0=layers, horizon=horizons)
@settings(max_examples=200)
def test_schedule_rejects_exactly_large_eta(sigma2, beta, l0, horizon):
    eta = beta * (sigma2 / 2.0 / l0)

    if eta >= 1.0:
        with pytest.raises(ScheduleError):
            derive_schedule(sigma2, beta, l0, horizon)
        return

    schedule = derive_schedule(sigma2, beta, l0, horizon)
    assert schedule.eta == eta
    assert 0 < schedule.eta < 1
    assert schedule.t_star == sigma2 / 2.0
    assert schedule.step_h * l0 == pytest.approx(schedule.t_star, rel=1e-15)
    assert schedule.total_layers >= l0
    assert schedule.time_at(l0) == pytest.approx(schedule.t_star, rel=1e-15)


@given(seed=seeds, k=st.integers(min_value=1, max_value=4), d=st.integers(min_value=1, max_value=3))
@settings(max_examples=50)
def test_validate_mixture_idempotent(seed, k, d):
    rng = np.random.default_rng(seed)
    weights = rng.dirichlet(np.ones(k))
    covs = []
    for _ in range(k):
        a = rng.normal(size=(d, d))
        c = a @ a.T
        covs.append(((c + c.T) / 2.0).tolist())
    mix = GaussianMixture(
        weights=(weights / weights.sum()).tolist(),
        means=rng.normal(size=(k, d)).tolist(),
        covariances=covs,
    )

    once = validate_mixture(mix)
    twice = validate_mixture(once)

    assert twice == once
    assert len(once.kinds) == k


@given(n=st.integers(min_value=1, max_value=50), d=st.integers(min_value=1, max_value=5))
@settings(max_examples=50)
def test_particle_set_shape(n, d):
    particles = ParticleSet(points=np.zeros((n, d)))

    assert particles.count == n
    assert len(particles) == n
    assert particles.dim == d
