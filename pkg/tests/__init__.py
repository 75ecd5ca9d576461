"""Test package for the particle denoiser."""
