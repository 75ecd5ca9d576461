"""Gaussian-attention primitives.

This module provides the kernel operations every stage is built from:
- normalized Gaussian attention weights softmax(-(beta/2) * |q - z_j|^2)
- the attention barycenter F(q) = sum_j w_j z_j and the drift F(q) - q
- the dense-associative-memory energy E(q) = -(1/beta_c) log sum_j exp(-(beta_c/2)|q - z_j|^2)
  and its gradient

All softmax evaluations are max-subtracted. Queries are processed in row
blocks of ``Settings.kernel_block_size``; each row is reduced over the
context in index order, so results do not depend on the block size or on how
many threads evaluate the blocks.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.special import logsumexp, softmax

from denoiser.config import get_settings
from denoiser.exceptions import DimensionMismatch, ValidationError
from denoiser.models.particles import ParticleSet, as_query

logger = logging.getLogger(__name__)


def _check_scale(beta: float, name: str = "beta") -> None:
    if not (np.isfinite(beta) and beta > 0):
        raise ValidationError(f"{name} must be positive, got {beta}")


def squared_distances(queries: np.ndarray, context: np.ndarray) -> np.ndarray:
    """Pairwise |q_b - z_n|^2 as a (B, N) array.

    Differences are squared coordinate-wise; the |u|^2 + |v|^2 - 2 u.v
    expansion is avoided because it cancels catastrophically at large beta.
    """
    diff = queries[:, None, :] - context[None, :, :]
    return np.einsum("bnd,bnd->bn", diff, diff)


def _weights_block(queries: np.ndarray, context: np.ndarray, beta: float) -> np.ndarray:
    sq = squared_distances(queries, context)
    weights = softmax(-0.5 * beta * sq, axis=1)
    sums = weights.sum(axis=1)
    bad = ~np.isfinite(sums) | (sums <= 0)
    if np.any(bad):
        # Unreachable after max-subtraction; the one-hot row is the beta -> inf limit.
        logger.warning(f"Kernel underflow in {int(bad.sum())} rows; using nearest-point weights")
        nearest = np.argmin(sq[bad], axis=1)
        weights[bad] = 0.0
        weights[np.flatnonzero(bad), nearest] = 1.0
    return weights


def _map_blocks(
    fn: Callable[[slice], np.ndarray],
    n_rows: int,
    block_size: Optional[int] = None,
    workers: Optional[int] = None,
) -> np.ndarray:
    settings = get_settings()
    block_size = block_size or settings.kernel_block_size
    workers = workers or settings.workers
    slices = [slice(start, min(start + block_size, n_rows)) for start in range(0, n_rows, block_size)]
    if workers > 1 and len(slices) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts: List[np.ndarray] = list(pool.map(fn, slices))
    else:
        parts = [fn(s) for s in slices]
    return np.concatenate(parts, axis=0)


def weight_matrix(
    context: np.ndarray,
    queries: np.ndarray,
    beta: float,
    block_size: Optional[int] = None,
    workers: Optional[int] = None,
) -> np.ndarray:
    """Row-stochastic (B, N) attention matrix for raw arrays."""
    return _map_blocks(
        lambda rows: _weights_block(queries[rows], context, beta),
        queries.shape[0],
        block_size,
        workers,
    )


def barycenters(
    context: np.ndarray,
    queries: np.ndarray,
    beta: float,
    block_size: Optional[int] = None,
    workers: Optional[int] = None,
) -> np.ndarray:
    """Attention barycenters F(q_b) for every row of ``queries`` (raw arrays)."""

    def block(rows: slice) -> np.ndarray:
        weights = _weights_block(queries[rows], context, beta)
        return np.einsum("bn,nd->bd", weights, context)

    return _map_blocks(block, queries.shape[0], block_size, workers)


def energy_gradients(
    context: np.ndarray,
    queries: np.ndarray,
    beta_c: float,
    block_size: Optional[int] = None,
    workers: Optional[int] = None,
) -> np.ndarray:
    """Energy gradients sum_j w_j (q_b - z_j) for every query row (raw arrays)."""

    def block(rows: slice) -> np.ndarray:
        q = queries[rows]
        weights = _weights_block(q, context, beta_c)
        diff = q[:, None, :] - context[None, :, :]
        return np.einsum("bn,bnd->bd", weights, diff)

    return _map_blocks(block, queries.shape[0], block_size, workers)


def energies(context: np.ndarray, queries: np.ndarray, beta_c: float) -> np.ndarray:
    """Energy values for every query row (raw arrays)."""
    sq = squared_distances(queries, context)
    return -logsumexp(-0.5 * beta_c * sq, axis=1) / beta_c


def attention_weights(context: ParticleSet, query, beta: float) -> np.ndarray:
    """Normalized Gaussian attention weights of ``query`` over ``context``.

    Args:
        context: Particle set z_1..z_N.
        query: Vector in R^d.
        beta: Kernel bandwidth.

    Returns:
        Length-N array, nonnegative, summing to 1.

    Raises:
        DimensionMismatch: If the query dimension differs from the context's.
    """
    _check_scale(beta)
    q = as_query(query, context.dim)
    return _weights_block(q[None, :], context.points, beta)[0]


def barycenter(context: ParticleSet, query, beta: float) -> np.ndarray:
    """Attention barycenter F(q) = sum_j w_j z_j; lies in the context's convex hull."""
    _check_scale(beta)
    q = as_query(query, context.dim)
    return barycenters(context.points, q[None, :], beta)[0]


def drift(context: ParticleSet, query, beta: float) -> np.ndarray:
    """Exact Gaussian attention drift F(q) - q."""
    _check_scale(beta)
    q = as_query(query, context.dim)
    return barycenters(context.points, q[None, :], beta)[0] - q


def energy(context: ParticleSet, query, beta_c: float) -> float:
    """Dense-associative-memory energy of ``query`` against the memories ``context``."""
    _check_scale(beta_c, "beta_c")
    q = as_query(query, context.dim)
    return float(energies(context.points, q[None, :], beta_c)[0])


def energy_gradient(context: ParticleSet, query, beta_c: float) -> np.ndarray:
    """Gradient of the energy at ``query``; query - gradient is the barycenter."""
    _check_scale(beta_c, "beta_c")
    q = as_query(query, context.dim)
    return energy_gradients(context.points, q[None, :], beta_c)[0]


def energy_grid(
    context: ParticleSet,
    beta_c: float,
    x_range: Tuple[float, float],
    y_range: Tuple[float, float],
    resolution: int = 101,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Energy over a regular 2-D lattice, for two-dimensional contexts.

    Returns:
        (xs, ys, values) where ``values[i, j]`` is the energy at (xs[j], ys[i]).
    """
    _check_scale(beta_c, "beta_c")
    if context.dim != 2:
        raise DimensionMismatch(2, context.dim, "energy grid context")
    if resolution < 2:
        raise ValidationError(f"resolution must be >= 2, got {resolution}")
    xs = np.linspace(x_range[0], x_range[1], resolution)
    ys = np.linspace(y_range[0], y_range[1], resolution)
    gx, gy = np.meshgrid(xs, ys)
    lattice = np.column_stack([gx.ravel(), gy.ravel()])
    values = _map_blocks(
        lambda rows: energies(context.points, lattice[rows], beta_c),
        lattice.shape[0],
    )
    return xs, ys, values.reshape(resolution, resolution)
