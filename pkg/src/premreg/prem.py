"""Hybrid PR-EM fitting of regression coefficients under a scale-mixture error law.

Each E-step runs permutation-averaged predictive recursion on the current
residuals and returns per-observation expected precisions; the M-step is a
weighted least squares solve with those precisions as weights.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from rich.console import Console

from .baselines import ols_sigma
from .errors import DomainError
from .linalg import weighted_lstsq
from .mixture import U_MIN_DEFAULT, gamma_psi0, uniform_psi0
from .models import MixingDensity, PremFit, RegressionData, ScaleGrid
from .pr import HarmonicWeights, PrConfig, WeightSchedule, pr_averaged
from .progress import ProgressEvent, stage_percent

console = Console(stderr=True)

UMAX_FLOOR = 50.0
UMAX_SIGMA_MULTIPLE = 3.0
ASCENT_SLACK = 1e-6
PSI0_KINDS = ("uniform", "gamma")

ProgressCallback = Callable[[ProgressEvent], None]


@dataclass(frozen=True, eq=False)
class PremConfig:
    """Settings for PR-EM; the scale grid itself is built per dataset from the LS scale."""

    grid_size: int = 100
    u_min: float = U_MIN_DEFAULT
    u_max: Optional[float] = None
    n_permutations: int = 25
    seed: int = 0
    weight_schedule: WeightSchedule = field(default_factory=HarmonicWeights)
    exhaustive: bool = False
    tol_delta: float = 1e-4
    max_iterations: int = 200
    beta_init: Optional[Sequence[float]] = None
    psi0: str = "uniform"
    gamma_shape: float = 2.0

    def __post_init__(self) -> None:
        if not self.tol_delta > 0:
            raise DomainError(f"tol_delta must be positive, got {self.tol_delta}")
        if self.max_iterations < 1:
            raise DomainError(f"max_iterations must be at least 1, got {self.max_iterations}")
        if self.grid_size < 2:
            raise DomainError(f"grid_size must be at least 2, got {self.grid_size}")
        if self.n_permutations < 1:
            raise DomainError(f"n_permutations must be at least 1, got {self.n_permutations}")
        if self.psi0 not in PSI0_KINDS:
            raise DomainError(f"psi0 must be one of {', '.join(PSI0_KINDS)}, got {self.psi0!r}")

    def pr_config(self, sigma_hat_ls: float) -> PrConfig:
        """PrConfig on the grid [u_min, u_max] implied by the LS scale estimate."""

        u_max = self.u_max if self.u_max is not None else default_umax(sigma_hat_ls)
        # no kernel narrower than one grid step; the u_min node otherwise spikes when a residual is ~0
        step = (u_max - self.u_min) / (self.grid_size - 1)
        grid = ScaleGrid.uniform(self.u_min, u_max, self.grid_size, min_kernel_scale=step)
        return PrConfig(
            grid=grid,
            psi0=self._initial_density(grid, sigma_hat_ls),
            weight_schedule=self.weight_schedule,
            n_permutations=self.n_permutations,
            permutation_seed=self.seed,
            exhaustive=self.exhaustive,
        )

    def _initial_density(self, grid: ScaleGrid, sigma_hat_ls: float) -> MixingDensity:
        if self.psi0 == "gamma":
            if sigma_hat_ls > 0:
                return gamma_psi0(grid, mode=sigma_hat_ls, shape=self.gamma_shape)
            console.log("gamma psi0 needs a positive LS scale; using the uniform initial density")
        return uniform_psi0(grid)


def default_umax(sigma_hat_ls: float) -> float:
    """max(50, 3 * sigma_hat)."""

    sigma = float(sigma_hat_ls)
    if not math.isfinite(sigma) or sigma < 0:
        raise DomainError(f"LS scale estimate must be finite and nonnegative, got {sigma_hat_ls!r}")
    return max(UMAX_FLOOR, UMAX_SIGMA_MULTIPLE * sigma)


def _run_e_step(beta: np.ndarray, data: RegressionData, pr_config: PrConfig):
    result = pr_averaged(data.residuals(beta), pr_config)
    return result.per_obs_weights, result.log_marginal, result.psi_n


def pr_loglik(beta: Sequence[float], data: RegressionData, config: PremConfig) -> float:
    """Permutation-averaged PR marginal log-likelihood of beta."""

    return e_step(beta, data, config)[1]


def e_step(beta: Sequence[float], data: RegressionData, config: PremConfig) -> tuple[np.ndarray, float, MixingDensity]:
    pr_config = config.pr_config(ols_sigma(data))
    return _run_e_step(np.asarray(beta, dtype=float), data, pr_config)


def m_step(data: RegressionData, weights: Sequence[float]) -> np.ndarray:
    """argmin_beta sum_i w_i (y_i - x_i' beta)^2."""

    return weighted_lstsq(data.X, data.y, np.asarray(weights, dtype=float), data.column_names)


def _initial_beta(data: RegressionData, config: PremConfig, beta_ols: np.ndarray) -> np.ndarray:
    if config.beta_init is None:
        return beta_ols
    beta = np.asarray(config.beta_init, dtype=float)
    if beta.shape != (data.p,) or not np.all(np.isfinite(beta)):
        raise DomainError(f"beta_init must be a finite vector of length {data.p}")
    return beta


def _ascent_violations(path: Sequence[float]) -> tuple[int, ...]:
    return tuple(
        t for t in range(1, len(path)) if path[t] < path[t - 1] - ASCENT_SLACK * abs(path[t - 1])
    )


def prem_fit(
    data: RegressionData,
    config: PremConfig | None = None,
    on_progress: ProgressCallback | None = None,
) -> PremFit:
    """Alternate PR E-steps and weighted least squares M-steps until the L1 change in beta drops below tol_delta."""

    config = config or PremConfig()
    beta_ols = weighted_lstsq(data.X, data.y, column_names=data.column_names)
    sigma_hat = ols_sigma(data, beta_ols)
    pr_config = config.pr_config(sigma_hat)
    beta = _initial_beta(data, config, beta_ols)

    loglik_path: List[float] = []
    beta_path: List[np.ndarray] = [beta]
    converged = False
    iterations = 0
    for iteration in range(1, config.max_iterations + 1):
        weights, loglik, _ = _run_e_step(beta, data, pr_config)
        loglik_path.append(loglik)
        beta_new = m_step(data, weights)
        delta = float(np.sum(np.abs(beta_new - beta)))
        beta = beta_new
        beta_path.append(beta)
        iterations = iteration
        if on_progress:
            on_progress(
                ProgressEvent(
                    stage="Fit",
                    percent=stage_percent("Fit", iteration / config.max_iterations),
                    message=f"PR-EM iteration {iteration}",
                    detail=f"loglik={loglik:.6f} delta={delta:.3g}",
                )
            )
        if delta < config.tol_delta:
            converged = True
            break

    weights, loglik, psi_hat = _run_e_step(beta, data, pr_config)
    loglik_path.append(loglik)

    violations = _ascent_violations(loglik_path)
    for t in violations:
        console.log(f"PR log-likelihood decreased at iteration {t}: {loglik_path[t - 1]:.6f} -> {loglik_path[t]:.6f}")
    if not converged:
        console.log(f"PR-EM stopped after {iterations} iterations without meeting tol_delta={config.tol_delta}")

    return PremFit(
        beta_hat=beta,
        psi_hat=psi_hat,
        obs_weights=weights,
        loglik_path=np.array(loglik_path),
        iterations=iterations,
        converged=converged,
        sigma_hat_ls=sigma_hat,
        beta_path=np.vstack(beta_path),
        ascent_violations=violations,
    )


def flag_outliers(fit: PremFit, threshold: float = 0.1) -> List[int]:
    """0-based rows whose weight is below threshold times the median weight."""

    if not threshold > 0:
        raise DomainError(f"threshold must be positive, got {threshold}")
    cutoff = threshold * float(np.median(fit.obs_weights))
    return [int(i) for i in np.flatnonzero(fit.obs_weights < cutoff)]


def loglik_objective(
    data: RegressionData, config: PremConfig, sigma_hat_ls: float | None = None
) -> Callable[[Sequence[float]], float]:
    """beta -> PR log-likelihood with the grid and permutations fixed once for every call."""

    sigma = ols_sigma(data) if sigma_hat_ls is None else sigma_hat_ls
    pr_config = config.pr_config(sigma)

    def objective(beta: Sequence[float]) -> float:
        return pr_averaged(data.residuals(np.asarray(beta, dtype=float)), pr_config).log_marginal

    return objective
