"""Services package for the denoising pipeline and its evaluation."""

from denoiser.services.dataio import corrupt, derive_seed, load_particles, rng_for, sample_prior, save_particles
from denoiser.services.harness import ExperimentSpec, emit_plots, run_experiment
from denoiser.services.kernel import attention_weights, barycenter, drift, energy, energy_gradient
from denoiser.services.meanfield import (
    auto_radius,
    covariance_flow_solve,
    hitting_time,
    recovery_gap,
    truncation_loss_probability,
    variance_ode_solve,
)
from denoiser.services.metrics import empirical_variance, mse, w1_1d, w1_exact_matching, w1_sliced
from denoiser.services.oracle import bayes_mmse, gmm_posterior_mean
from denoiser.services.stage1 import hard_truncate, run_stage1, run_truncated, stage1_step
from denoiser.services.stage2 import one_shot_tweedie, posterior_readout, two_stage_denoise
from denoiser.services.validation import posterior_uniform_gap, recovery_trend_check

__all__ = [
    # Kernel
    "attention_weights",
    "barycenter",
    "drift",
    "energy",
    "energy_gradient",
    # Stage 1
    "stage1_step",
    "run_stage1",
    "hard_truncate",
    "run_truncated",
    # Stage 2
    "posterior_readout",
    "one_shot_tweedie",
    "two_stage_denoise",
    # Oracle
    "gmm_posterior_mean",
    "bayes_mmse",
    # Mean-field theory
    "variance_ode_solve",
    "hitting_time",
    "covariance_flow_solve",
    "recovery_gap",
    "auto_radius",
    "truncation_loss_probability",
    # Metrics
    "mse",
    "empirical_variance",
    "w1_1d",
    "w1_exact_matching",
    "w1_sliced",
    # Data
    "sample_prior",
    "corrupt",
    "save_particles",
    "load_particles",
    "derive_seed",
    "rng_for",
    # Experiments
    "ExperimentSpec",
    "run_experiment",
    "emit_plots",
    "recovery_trend_check",
    "posterior_uniform_gap",
]
