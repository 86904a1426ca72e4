"""Normal scale-mixture primitives on a fixed scale grid.

The mixing density is stored as values on a uniform grid over [u_min, u_max]
and integrated with the trapezoid rule. All posterior computations are carried
out on the log scale so that extreme residuals never produce 0/0.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from .errors import DomainError
from .models import MixingDensity, ScaleGrid

U_MIN_DEFAULT = 1e-5
DENSITY_FLOOR = 1e-300
LOG_DENSITY_FLOOR = math.log(DENSITY_FLOOR)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

LogKernel = Callable[[np.ndarray, np.ndarray], np.ndarray]


def normal_log_kernel(r, u) -> np.ndarray:
    """log N(r | 0, u^2), broadcasting r against u."""

    r = np.asarray(r, dtype=float)
    u = np.asarray(u, dtype=float)
    return -0.5 * np.square(r / u) - np.log(u) - _HALF_LOG_2PI


def normal_kernel(r: float, u: float) -> float:
    """Density of N(0, u^2) at r; 0.0 once the exponent underflows."""

    if not math.isfinite(r):
        raise DomainError(f"residual must be finite, got {r!r}")
    if not (math.isfinite(u) and u > 0):
        raise DomainError(f"scale must be positive and finite, got {u!r}")
    return float(np.exp(normal_log_kernel(r, u)))


def _check_residual(r: float) -> float:
    r = float(r)
    if not math.isfinite(r):
        raise DomainError(f"residual must be finite, got {r!r}")
    return r


def _log_node_terms(psi: MixingDensity, r: float, log_kernel: LogKernel) -> np.ndarray:
    with np.errstate(divide="ignore"):
        log_mass = np.log(psi.node_masses())
    return log_kernel(r, psi.grid.kernel_scales) + log_mass


def mixture_density(
    r: float,
    psi: MixingDensity,
    floor: float = DENSITY_FLOOR,
    log_kernel: LogKernel = normal_log_kernel,
) -> float:
    """Trapezoid approximation of the mixture density at residual r."""

    r = _check_residual(r)
    value = float(np.exp(logsumexp(_log_node_terms(psi, r, log_kernel))))
    return max(value, floor)


def posterior_node_masses(psi: MixingDensity, r: float, log_kernel: LogKernel = normal_log_kernel) -> np.ndarray:
    """Posterior probabilities of the grid nodes given residual r and prior psi."""

    r = _check_residual(r)
    terms = _log_node_terms(psi, r, log_kernel)
    return np.exp(terms - logsumexp(terms))


def posterior_density(psi: MixingDensity, r: float, log_kernel: LogKernel = normal_log_kernel) -> MixingDensity:
    """Bayes posterior of the scale given one residual, prior psi."""

    masses = posterior_node_masses(psi, r, log_kernel)
    return MixingDensity.normalized(psi.grid, masses / psi.grid.quadrature_weights)


def expected_precision(psi_prev: MixingDensity, r: float, log_kernel: LogKernel = normal_log_kernel) -> float:
    """Posterior mean of u^-2 for a single residual under prior psi_prev."""

    masses = posterior_node_masses(psi_prev, r, log_kernel)
    return float(np.dot(masses, psi_prev.grid.kernel_scales ** -2.0))


def pr_step(
    psi: MixingDensity,
    r: float,
    w: float,
    log_kernel: LogKernel = normal_log_kernel,
) -> MixingDensity:
    """One predictive recursion update: (1-w) psi + w * posterior(psi | r)."""

    if not 0.0 < w < 1.0:
        raise DomainError(f"PR weight must lie in (0, 1), got {w!r}")
    masses = posterior_node_masses(psi, r, log_kernel)
    updated = (1.0 - w) * psi.values + w * masses / psi.grid.quadrature_weights
    return MixingDensity.normalized(psi.grid, updated)


def uniform_psi0(grid: ScaleGrid) -> MixingDensity:
    return MixingDensity.uniform(grid)


def gamma_psi0(grid: ScaleGrid, mode: float, shape: float = 2.0) -> MixingDensity:
    """Gamma density truncated to the grid, with its mode placed at ``mode``."""

    if shape <= 1:
        raise DomainError("gamma shape must exceed 1 for an interior mode")
    if not mode > 0:
        raise DomainError(f"gamma mode must be positive, got {mode!r}")
    scale = mode / (shape - 1.0)
    values = stats.gamma.pdf(grid.points, a=shape, scale=scale)
    return MixingDensity.normalized(grid, values)
