"""Predictive recursion over a residual sequence.

A single sweep updates the mixing density one residual at a time, accumulates
the PR log-marginal likelihood and records, for every observation, the expected
precision under the Bayes posterior built from the density *before* that
observation's update. Averaging over permutations runs all fixed orderings in
one vectorized sweep, one row per permutation.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import DomainError
from .mixture import LOG_DENSITY_FLOOR, LogKernel, normal_log_kernel
from .models import MixingDensity, ScaleGrid

MAX_EXHAUSTIVE_N = 8

WeightSchedule = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class HarmonicWeights:
    """w_i = (i + 1)^-1."""

    def __call__(self, steps: np.ndarray) -> np.ndarray:
        return 1.0 / (np.asarray(steps, dtype=float) + 1.0)


@dataclass(frozen=True)
class PowerWeights:
    """w_i = (i + 1)^-gamma with gamma in (1/2, 1]."""

    gamma: float = 0.67

    def __post_init__(self) -> None:
        if not 0.5 < self.gamma <= 1.0:
            raise DomainError(f"gamma must lie in (0.5, 1], got {self.gamma}")

    def __call__(self, steps: np.ndarray) -> np.ndarray:
        return (np.asarray(steps, dtype=float) + 1.0) ** -self.gamma


@dataclass(frozen=True, eq=False)
class PrConfig:
    grid: ScaleGrid
    psi0: MixingDensity
    weight_schedule: WeightSchedule = field(default_factory=HarmonicWeights)
    n_permutations: int = 25
    permutation_seed: int = 0
    exhaustive: bool = False
    log_kernel: LogKernel = normal_log_kernel

    def __post_init__(self) -> None:
        if self.n_permutations < 1:
            raise DomainError(f"n_permutations must be at least 1, got {self.n_permutations}")
        if self.psi0.grid is not self.grid and not np.array_equal(self.psi0.grid.points, self.grid.points):
            raise DomainError("psi0 must live on the configured grid")

    def weights(self, n: int) -> np.ndarray:
        w = np.asarray(self.weight_schedule(np.arange(1, n + 1)), dtype=float)
        if w.shape != (n,) or np.any(~(w > 0)) or np.any(~(w < 1)):
            raise DomainError("weight schedule must yield values strictly inside (0, 1)")
        return w

    def orders(self, n: int) -> np.ndarray:
        if self.exhaustive:
            return exhaustive_permutations(n)
        return fixed_permutations(self.permutation_seed, n, self.n_permutations)


@dataclass(frozen=True, eq=False)
class PrResult:
    psi_n: MixingDensity
    log_marginal: float
    per_obs_weights: np.ndarray
    per_perm_log_marginals: np.ndarray


@lru_cache(maxsize=256)
def fixed_permutations(seed: int, n: int, count: int) -> np.ndarray:
    """Orderings of range(n) drawn once from ``seed``; identical for identical arguments."""

    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(n, count)))
    orders = np.stack([rng.permutation(n) for _ in range(count)]) if n else np.zeros((count, 0), dtype=int)
    orders.setflags(write=False)
    return orders


@lru_cache(maxsize=16)
def exhaustive_permutations(n: int) -> np.ndarray:
    if n > MAX_EXHAUSTIVE_N:
        raise DomainError(f"exhaustive averaging is limited to n <= {MAX_EXHAUSTIVE_N}, got n={n}")
    orders = np.array(list(itertools.permutations(range(n))), dtype=int).reshape(math.factorial(n), n)
    orders.setflags(write=False)
    return orders


def _check_residuals(residuals: Sequence[float]) -> np.ndarray:
    residuals = np.asarray(residuals, dtype=float).ravel()
    if not np.all(np.isfinite(residuals)):
        raise DomainError("residuals must be finite")
    return residuals


def _sweep(residuals: np.ndarray, orders: np.ndarray, config: PrConfig):
    """Run PR along every row of ``orders`` at once.

    Returns final densities (K x M), log-marginals (K,) and expected precisions
    (K x n) indexed by original observation.
    """

    grid = config.grid
    q = grid.quadrature_weights
    u = grid.kernel_scales[None, :]
    inv_u2 = grid.kernel_scales ** -2.0
    count, n = orders.shape
    w = config.weights(n)

    psi = np.tile(config.psi0.values, (count, 1))
    ordered = residuals[orders]
    log_marginal = np.zeros(count)
    precision = np.empty((count, n))
    for i in range(n):
        with np.errstate(divide="ignore"):
            terms = config.log_kernel(ordered[:, i : i + 1], u) + np.log(psi * q)
        log_f = logsumexp(terms, axis=1)
        log_marginal += np.maximum(log_f, LOG_DENSITY_FLOOR)
        posterior = np.exp(terms - log_f[:, None])
        precision[:, i] = posterior @ inv_u2
        psi = (1.0 - w[i]) * psi + w[i] * posterior / q
        psi /= (psi @ q)[:, None]

    by_observation = np.empty_like(precision)
    np.put_along_axis(by_observation, orders, precision, axis=1)
    return psi, log_marginal, by_observation


def pr_pass(
    residuals: Sequence[float], config: PrConfig, permutation: Sequence[int] | None = None
) -> tuple[MixingDensity, float, np.ndarray]:
    """Single-sequence PR in the given order; weights come back in original order."""

    residuals = _check_residuals(residuals)
    n = residuals.size
    if n == 0:
        return config.psi0, 0.0, np.empty(0)
    order = np.arange(n) if permutation is None else np.asarray(permutation, dtype=int)
    if order.shape != (n,) or not np.array_equal(np.sort(order), np.arange(n)):
        raise DomainError("permutation must be a bijection on range(n)")
    psi, log_marginal, precision = _sweep(residuals, order[None, :], config)
    return MixingDensity.normalized(config.grid, psi[0]), float(log_marginal[0]), precision[0]


def pr_averaged(residuals: Sequence[float], config: PrConfig) -> PrResult:
    """PR averaged over the configured fixed permutations."""

    residuals = _check_residuals(residuals)
    n = residuals.size
    if n == 0:
        return PrResult(
            psi_n=config.psi0,
            log_marginal=0.0,
            per_obs_weights=np.empty(0),
            per_perm_log_marginals=np.zeros(config.n_permutations),
        )
    psi, log_marginals, precision = _sweep(residuals, config.orders(n), config)
    return PrResult(
        psi_n=MixingDensity.normalized(config.grid, psi.mean(axis=0)),
        log_marginal=float(log_marginals.mean()),
        per_obs_weights=precision.mean(axis=0),
        per_perm_log_marginals=log_marginals,
    )
