"""Two-stage empirical-Bayes denoising with Gaussian-attention particle dynamics."""

__version__ = "0.1.0"
