"""Deterministic mean-field theory checks.

This module provides:
- the cluster-variance ODE v' = -2v / (v + 1/beta), its adaptive RK4 solution
  and its closed-form hitting time
- the Gaussian covariance flow, solved eigenvalue by eigenvalue through the
  conserved quantity lambda + ln(lambda)/beta + 2t/beta
- the recovery gap at the terminal time T_beta = beta * tau / 2
- truncation-radius selection from the Gaussian tail bound
"""

import logging
import math
from typing import List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import brentq

from denoiser.exceptions import NumericFailure, ValidationError

logger = logging.getLogger(__name__)

# Local error target on ln(v) for one adaptive RK4 step
ODE_TOL = 1e-10
# Tolerance on ln(lambda) in the eigenvalue root solve
ROOT_TOL = 4 * np.finfo(float).eps
MAX_NEWTON_ITER = 100
SYMMETRY_TOL = 1e-10
PSD_TOL = 1e-10


class CovarianceFlowState(BaseModel):
    """Gaussian mean-field state Gamma_t = V diag(lambda(t)) V^T around a fixed mean.

    Attributes:
        mean: Mean vector, constant in time.
        eigenvalues: lambda_i(t), in the order of ``eigenvectors`` columns.
        eigenvectors: Orthonormal frame, fixed in time.
        time: Raw depth time t.
        beta: Bandwidth of the flow.
        initial_eigenvalues: lambda_i(0) = eigenvalues of Sigma_0 + tau I.
    """

    model_config = ConfigDict(frozen=True)

    mean: List[float]
    eigenvalues: List[float]
    eigenvectors: List[List[float]]
    time: float = Field(..., ge=0)
    beta: float
    initial_eigenvalues: List[float]

    def covariance(self) -> np.ndarray:
        v = np.asarray(self.eigenvectors)
        return (v * np.asarray(self.eigenvalues)) @ v.T

    def conserved(self) -> np.ndarray:
        """lambda + ln(lambda)/beta + 2t/beta for each eigenvalue."""
        lam = np.asarray(self.eigenvalues)
        return lam + np.log(lam) / self.beta + 2.0 * self.time / self.beta


# -- variance ODE ----------------------------------------------------------------
#
# Integrated in u = ln v, where u' = -2 / (v + 1/beta). The step error is
# controlled on u, so it is relative on v and v = exp(u) cannot change sign.


def _log_rate(u: float, beta: float) -> float:
    return -2.0 / (math.exp(u) + 1.0 / beta)


def _rk4(u: float, h: float, beta: float) -> float:
    k1 = _log_rate(u, beta)
    k2 = _log_rate(u + 0.5 * h * k1, beta)
    k3 = _log_rate(u + 0.5 * h * k2, beta)
    k4 = _log_rate(u + h * k3, beta)
    return u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _adaptive_step(u: float, h: float, beta: float) -> Tuple[float, float, float]:
    """One accepted step by step doubling.

    Returns:
        (new u, step taken, suggested next step).
    """
    while True:
        full = _rk4(u, h, beta)
        half = _rk4(_rk4(u, 0.5 * h, beta), 0.5 * h, beta)
        err = abs(half - full) / 15.0
        if err <= ODE_TOL:
            grow = 4.0 if err == 0 else min(4.0, 0.9 * (ODE_TOL / err) ** 0.2)
            # Richardson extrapolation of the two estimates
            return half + (half - full) / 15.0, h, h * max(1.0, grow)
        h *= min(0.5, max(0.1, 0.9 * (ODE_TOL / err) ** 0.25))
        if h < 1e-300:
            raise NumericFailure(f"variance ODE step underflow at v={math.exp(u)!r}")


def _integrate(u: float, duration: float, beta: float, h: float) -> Tuple[float, float]:
    t = 0.0
    while t < duration:
        remaining = duration - t
        u, taken, suggested = _adaptive_step(u, min(h, remaining), beta)
        if taken >= remaining:
            t = duration
            h = max(h, suggested)
        else:
            t += taken
            h = suggested
    return u, h


def _variance(u: float) -> float:
    v = math.exp(u)
    if not v > 0:
        raise NumericFailure(f"variance underflowed to zero (ln v={u!r})")
    return v


def variance_ode_solve(v0: float, beta: float, t_grid: Sequence[float]) -> List[float]:
    """Solve v' = -2v / (v + 1/beta) on ``t_grid``.

    Args:
        v0: Initial variance, > 0.
        beta: Bandwidth, > 0.
        t_grid: Nondecreasing times starting at 0.

    Returns:
        v(t) at every grid time.

    Raises:
        ValidationError: On invalid arguments.
        NumericFailure: If v underflows the float range.
    """
    if not v0 > 0:
        raise ValidationError(f"v0 must be positive, got {v0}")
    if not beta > 0:
        raise ValidationError(f"beta must be positive, got {beta}")
    times = [float(t) for t in t_grid]
    if not times:
        return []
    if times[0] != 0.0:
        raise ValidationError(f"t_grid must start at 0, got {times[0]}")
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValidationError("t_grid must be nondecreasing")

    values = [float(v0)]
    u, h = math.log(v0), max(times[-1] / 64.0, 1e-6)
    for prev, cur in zip(times, times[1:]):
        if cur > prev:
            u, h = _integrate(u, cur - prev, beta, h)
            values.append(_variance(u))
        else:
            values.append(values[-1])
    return values


def hitting_time(v0: float, v_star: float, beta: float) -> float:
    """Closed-form time for the variance ODE to go from v0 down to v_star.

    T = (v0 - v*)/2 + ln(v0 / v*) / (2 beta).

    Raises:
        ValidationError: Unless 0 < v_star <= v0 and beta > 0.
    """
    if not v_star > 0:
        raise ValidationError(f"v_star must be positive, got {v_star}")
    if v_star > v0:
        raise ValidationError(f"v_star={v_star} exceeds v0={v0}")
    if not beta > 0:
        raise ValidationError(f"beta must be positive, got {beta}")
    return (v0 - v_star) / 2.0 + math.log(v0 / v_star) / (2.0 * beta)


def first_passage_time(v0: float, v_star: float, beta: float) -> float:
    """First time the numerically integrated variance reaches ``v_star``.

    Marches the adaptive integrator until a step crosses v_star, then locates
    the crossing inside that step with Brent's method.
    """
    if not 0 < v_star <= v0:
        raise ValidationError(f"need 0 < v_star <= v0, got v_star={v_star}, v0={v0}")
    if v_star == v0:
        return 0.0
    u_star = math.log(v_star)
    t, u = 0.0, math.log(v0)
    h = max((v0 - v_star) / 64.0, 1e-8)
    while True:
        u_next, taken, h_next = _adaptive_step(u, h, beta)
        if u_next <= u_star:
            break
        t, u, h = t + taken, u_next, h_next

    start = u

    def residual(s: float) -> float:
        value, _ = _integrate(start, s, beta, max(s, 1e-12)) if s > 0 else (start, 0.0)
        return value - u_star

    # Re-integration may substep differently from the marching step
    upper = taken
    while residual(upper) > 0:
        upper *= 2.0
    offset = brentq(residual, 0.0, upper, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    return t + offset


# -- Gaussian covariance flow ----------------------------------------------------


def _solve_eigenvalue(target: float, beta: float, upper: float) -> float:
    """Root of g(lam) = lam + ln(lam)/beta - target on (0, upper].

    Safeguarded Newton in u = ln(lam): g is increasing and convex in u, and a
    bisection step replaces any Newton step that leaves the bracket.
    """
    g = lambda u: math.exp(u) + u / beta - target
    hi = math.log(upper)
    if g(hi) <= 0:
        return upper
    lo = hi - 1.0
    while g(lo) > 0:
        lo = hi - 2.0 * (hi - lo)
        if lo < -745.0:
            raise NumericFailure(f"eigenvalue underflow solving lam + ln(lam)/beta = {target!r}")

    u = hi
    for _ in range(MAX_NEWTON_ITER):
        value = g(u)
        if value > 0:
            hi = u
        else:
            lo = u
        step = value / (math.exp(u) + 1.0 / beta)
        candidate = u - step
        if not lo < candidate < hi:
            candidate = 0.5 * (lo + hi)
        if abs(candidate - u) <= ROOT_TOL * max(1.0, abs(u)) or hi - lo <= ROOT_TOL:
            u = candidate
            break
        u = candidate
    else:
        raise NumericFailure(f"eigenvalue solve did not converge for target {target!r}")
    return math.exp(u)


def _frame(sigma0: np.ndarray, tau: float) -> Tuple[np.ndarray, np.ndarray]:
    sigma0 = np.atleast_2d(np.asarray(sigma0, dtype=np.float64))
    if sigma0.shape[0] != sigma0.shape[1]:
        raise ValidationError(f"sigma0 must be square, got shape {sigma0.shape}")
    if float(np.max(np.abs(sigma0 - sigma0.T))) > SYMMETRY_TOL:
        raise ValidationError("sigma0 must be symmetric")
    if not tau > 0:
        raise ValidationError(f"tau must be positive, got {tau}")
    if float(np.linalg.eigvalsh(sigma0).min()) < -PSD_TOL:
        raise ValidationError("sigma0 must be positive semidefinite")
    return np.linalg.eigh(sigma0 + tau * np.eye(sigma0.shape[0]))


def covariance_flow_solve(
    sigma0,
    mean,
    tau: float,
    beta: float,
    t_end: float,
) -> CovarianceFlowState:
    """Solve Gamma' = -2 Gamma (I + beta Gamma)^-1 from Gamma_0 = Sigma_0 + tau I.

    The eigenframe of Gamma_0 is kept for all times and each eigenvalue is
    recovered from lam + ln(lam)/beta = lam0 + ln(lam0)/beta - 2t/beta.

    Raises:
        ValidationError: If sigma0 is not symmetric PSD or an argument is invalid.
    """
    if not beta > 0:
        raise ValidationError(f"beta must be positive, got {beta}")
    if not t_end >= 0:
        raise ValidationError(f"t_end must be >= 0, got {t_end}")
    eigvals, eigvecs = _frame(sigma0, tau)
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    if mean.shape[0] != eigvals.shape[0]:
        raise ValidationError(f"mean has dimension {mean.shape[0]}, expected {eigvals.shape[0]}")

    lambdas = []
    for lam0 in eigvals:
        lam0 = float(lam0)
        if t_end == 0:
            lambdas.append(lam0)
            continue
        target = lam0 + math.log(lam0) / beta - 2.0 * t_end / beta
        lambdas.append(_solve_eigenvalue(target, beta, lam0))

    return CovarianceFlowState(
        mean=mean.tolist(),
        eigenvalues=lambdas,
        eigenvectors=eigvecs.tolist(),
        time=float(t_end),
        beta=float(beta),
        initial_eigenvalues=eigvals.tolist(),
    )


def denoising_time(tau: float, beta: float) -> float:
    """Raw-depth terminal time T_beta = beta * tau / 2."""
    return beta * tau / 2.0


def recovery_gap(sigma0, tau: float, beta: float) -> float:
    """Coupling upper bound on W1 between the flow at T_beta and N(a, Sigma_0).

    sqrt(d) * || Gamma_T^{1/2} - Sigma_0^{1/2} ||_HS, evaluated in the shared
    eigenframe.
    """
    state = covariance_flow_solve(
        sigma0, np.zeros(np.atleast_2d(sigma0).shape[0]), tau, beta, denoising_time(tau, beta)
    )
    final = np.asarray(state.eigenvalues)
    clean = np.clip(np.asarray(state.initial_eigenvalues) - tau, 0.0, None)
    hs = float(np.sqrt(np.sum((np.sqrt(final) - np.sqrt(clean)) ** 2)))
    return math.sqrt(final.shape[0]) * hs


# -- truncation radius ----------------------------------------------------------


def auto_radius(n: int, gamma0_max_eigenvalue: float, mean_norm: float) -> float:
    """Truncation radius slightly above sqrt(log n) in units of the noisy spread.

    R = |a| + sqrt(8 lam_max) * sqrt(log n + log log(n + e)), floored at 1 + 2|a|.
    """
    if n < 2:
        raise ValidationError(f"auto_radius needs n >= 2, got {n}")
    if not gamma0_max_eigenvalue > 0:
        raise ValidationError(f"largest eigenvalue must be positive, got {gamma0_max_eigenvalue}")
    spread = math.sqrt(8.0 * gamma0_max_eigenvalue)
    radius = mean_norm + spread * math.sqrt(math.log(n) + math.log(math.log(n + math.e)))
    return max(radius, 1.0 + 2.0 * mean_norm)


def truncation_loss_probability(n: int, radius: float, gamma0, mean) -> float:
    """Structural bound on the chance that some of n tokens falls outside B_R.

    min(1, n (1 + R)^d exp(-R^2 / (8 lam_max))) with the unspecified constant
    taken as 1; the value is an order-of-magnitude guide, not a rigorous bound.

    Raises:
        ValidationError: If R < 1 + 2|a|, where the tail estimate does not apply.
    """
    gamma0 = np.atleast_2d(np.asarray(gamma0, dtype=np.float64))
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    mean_norm = float(np.linalg.norm(mean))
    if radius < 1.0 + 2.0 * mean_norm:
        raise ValidationError(
            f"radius {radius:g} is below the validity threshold 1 + 2|a| = {1.0 + 2.0 * mean_norm:g}"
        )
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    if math.isinf(radius):
        return 0.0
    lam_max = float(np.linalg.eigvalsh(gamma0).max())
    d = gamma0.shape[0]
    log_bound = math.log(n) + d * math.log1p(radius) - radius**2 / (8.0 * lam_max)
    return min(1.0, math.exp(log_bound))
