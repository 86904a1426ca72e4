"""Comparator estimators: least squares, Huber M-estimation, Student-t ML, L1,
and the grid-NPMLE profile likelihood.

Every iterative method here is an IRLS loop around ``linalg.weighted_lstsq``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from rich.console import Console
from scipy import stats

from .errors import DomainError
from .linalg import weighted_lstsq
from .mixture import normal_log_kernel
from .models import BaselineFit, RegressionData, ScaleGrid

console = Console(stderr=True)

MAD_CONSTANT = 0.6745
HUBER_C = 1.345
IRLS_TOL = 1e-8
IRLS_MAX_ITER = 50
L1_MAX_ITER = 200
NPMLE_EM_ITERS = 2000
NPMLE_REL_TOL = 1e-12
MIX_FLOOR = 1e-300


def _ols_beta(data: RegressionData) -> np.ndarray:
    return weighted_lstsq(data.X, data.y, column_names=data.column_names)


def ols_sigma(data: RegressionData, beta: np.ndarray | None = None) -> float:
    """Root mean squared error of the least squares fit, denominator n - p."""

    beta = _ols_beta(data) if beta is None else beta
    resid = data.residuals(beta)
    dof = max(data.n - data.p, 1)
    return float(np.sqrt(resid @ resid / dof))


def ols_fit(data: RegressionData) -> BaselineFit:
    beta = _ols_beta(data)
    sigma = ols_sigma(data, beta)
    return BaselineFit(method="LS", beta_hat=beta, scale_hat=sigma if sigma > 0 else None, iterations=1)


def ols_standard_errors(data: RegressionData) -> np.ndarray:
    """Classical standard errors sigma * sqrt(diag((X'X)^-1))."""

    _, R = np.linalg.qr(data.X)
    r_inv = np.linalg.inv(R)
    return ols_sigma(data) * np.sqrt(np.sum(r_inv**2, axis=1))


def mad_scale(resid: np.ndarray) -> float:
    return float(np.median(np.abs(resid)) / MAD_CONSTANT)


def huber_weights(resid: np.ndarray, scale: float, tuning_c: float = HUBER_C) -> np.ndarray:
    """min(1, c * s / |r|)."""

    abs_r = np.abs(resid)
    with np.errstate(divide="ignore"):
        return np.where(abs_r > tuning_c * scale, tuning_c * scale / abs_r, 1.0)


def student_t_weights(resid: np.ndarray, sigma2: float, df: float) -> np.ndarray:
    """(df + 1) / (df + r^2 / sigma^2)."""

    return (df + 1.0) / (df + np.square(resid) / sigma2)


def student_t_loglik(resid: np.ndarray, sigma: float, df: float) -> float:
    return float(np.sum(stats.t.logpdf(resid / sigma, df)) - resid.size * np.log(sigma))


def _irls(
    data: RegressionData,
    method: str,
    step: Callable[[np.ndarray], tuple[np.ndarray, float] | None],
    max_iter: int,
    tol: float,
) -> BaselineFit:
    """Shared IRLS driver; ``step`` maps residuals to (weights, scale) or None when degenerate."""

    beta = _ols_beta(data)
    scale = None
    weights = np.ones(data.n)
    for iteration in range(1, max_iter + 1):
        outcome = step(data.residuals(beta))
        if outcome is None:
            return BaselineFit(method=method, beta_hat=beta, scale_hat=scale, iterations=iteration, converged=True)
        weights, scale = outcome
        beta_new = weighted_lstsq(data.X, data.y, weights, data.column_names)
        shift = float(np.max(np.abs(beta_new - beta)))
        beta = beta_new
        if shift < tol:
            return BaselineFit(
                method=method, beta_hat=beta, scale_hat=scale, iterations=iteration, converged=True, weights=weights
            )
    console.log(f"{method}: IRLS did not converge in {max_iter} iterations")
    return BaselineFit(method=method, beta_hat=beta, scale_hat=scale, iterations=max_iter, converged=False, weights=weights)


def huber_irls(
    data: RegressionData, tuning_c: float = HUBER_C, tol: float = IRLS_TOL, max_iter: int = IRLS_MAX_ITER
) -> BaselineFit:
    """Huber M-estimate with the scale re-estimated by MAD/0.6745 every iteration."""

    if tuning_c <= 0:
        raise DomainError(f"Huber tuning constant must be positive, got {tuning_c}")

    def step(resid: np.ndarray):
        scale = mad_scale(resid)
        if scale == 0:
            return None
        return huber_weights(resid, scale, tuning_c), scale

    return _irls(data, "RLS", step, max_iter, tol)


def _positive_sqrt(value: float) -> float | None:
    return float(np.sqrt(value)) if value > 0 else None


def student_t_ml(data: RegressionData, df: float = 4.0, tol: float = IRLS_TOL, max_iter: int = IRLS_MAX_ITER) -> BaselineFit:
    """ECM for regression with t_df errors; sigma^2 is the weighted mean of squared residuals."""

    if df <= 0:
        raise DomainError(f"degrees of freedom must be positive, got {df}")
    method = f"ML_t{df:g}"
    beta = _ols_beta(data)
    resid = data.residuals(beta)
    sigma2 = float(resid @ resid / data.n)
    weights = np.ones(data.n)
    for iteration in range(1, max_iter + 1):
        if sigma2 <= 0:
            return BaselineFit(method=method, beta_hat=beta, iterations=iteration, converged=True)
        weights = student_t_weights(resid, sigma2, df)
        beta_new = weighted_lstsq(data.X, data.y, weights, data.column_names)
        resid = data.residuals(beta_new)
        sigma2 = float(np.sum(weights * resid**2) / data.n)
        shift = float(np.max(np.abs(beta_new - beta)))
        beta = beta_new
        if shift < tol:
            return BaselineFit(
                method=method,
                beta_hat=beta,
                scale_hat=_positive_sqrt(sigma2),
                iterations=iteration,
                converged=True,
                weights=weights,
            )
    console.log(f"{method}: EM did not converge in {max_iter} iterations")
    return BaselineFit(
        method=method, beta_hat=beta, scale_hat=_positive_sqrt(sigma2), iterations=max_iter, converged=False, weights=weights
    )


def l1_objective(data: RegressionData, beta: np.ndarray) -> float:
    return float(np.sum(np.abs(data.residuals(beta))))


def l1_fit(data: RegressionData, smoothing_eps: float = 1e-6, max_iter: int = L1_MAX_ITER) -> BaselineFit:
    """Least absolute deviations via IRLS on sum sqrt(r^2 + eps^2); returns the best iterate seen."""

    if smoothing_eps <= 0:
        raise DomainError(f"smoothing_eps must be positive, got {smoothing_eps}")
    beta = _ols_beta(data)
    best_beta, best_obj = beta, l1_objective(data, beta)
    for iteration in range(1, max_iter + 1):
        resid = data.residuals(beta)
        weights = 1.0 / np.sqrt(resid**2 + smoothing_eps**2)
        beta_new = weighted_lstsq(data.X, data.y, weights, data.column_names)
        obj = l1_objective(data, beta_new)
        if obj < best_obj:
            best_beta, best_obj = beta_new, obj
        shift = float(np.max(np.abs(beta_new - beta)))
        beta = beta_new
        if shift < 1e-10 * (1.0 + float(np.max(np.abs(beta)))):
            return BaselineFit(method="L1", beta_hat=best_beta, iterations=iteration, converged=True)
    console.log(f"L1: IRLS did not converge in {max_iter} iterations; returning best iterate")
    return BaselineFit(method="L1", beta_hat=best_beta, iterations=max_iter, converged=False)


@dataclass(frozen=True, eq=False)
class NpmleResult:
    points: np.ndarray
    masses: np.ndarray
    loglik: float
    loglik_path: np.ndarray


def npmle_mixing(
    residuals: Sequence[float],
    points: Sequence[float],
    em_iters: int = NPMLE_EM_ITERS,
    rel_tol: float = NPMLE_REL_TOL,
) -> NpmleResult:
    """Fixed-support EM for the mixing masses of a normal scale mixture.

    Each kernel row is divided by its maximum, so the updates are plain matrix
    products and the row scales are added back into the log-likelihood.
    """

    residuals = np.asarray(residuals, dtype=float)
    points = np.asarray(points, dtype=float)
    if em_iters < 1:
        raise DomainError("em_iters must be at least 1")
    if points.ndim != 1 or points.size < 1 or np.any(points <= 0):
        raise DomainError("support points must be a nonempty vector of positive scales")
    if residuals.ndim != 1 or residuals.size < 1:
        raise DomainError("NPMLE needs at least one residual")
    log_lik = normal_log_kernel(residuals[:, None], points[None, :])
    row_max = log_lik.max(axis=1)
    lik = np.exp(log_lik - row_max[:, None])
    offset = float(row_max.sum())
    masses = np.full(points.size, 1.0 / points.size)

    mix = np.maximum(lik @ masses, MIX_FLOOR)
    loglik = float(np.log(mix).sum()) + offset
    path = [loglik]
    for _ in range(em_iters):
        masses = masses * (lik.T @ (1.0 / mix)) / residuals.size
        masses /= masses.sum()
        mix = np.maximum(lik @ masses, MIX_FLOOR)
        updated = float(np.log(mix).sum()) + offset
        path.append(updated)
        done = abs(updated - loglik) <= rel_tol * abs(updated)
        loglik = updated
        if done:
            break
    return NpmleResult(points=points, masses=masses, loglik=loglik, loglik_path=np.array(path))


def npmle_profile_loglik(
    beta: Sequence[float], data: RegressionData, grid: ScaleGrid, em_iters: int = NPMLE_EM_ITERS
) -> float:
    """Profile log-likelihood of beta with the mixing distribution maximized on the grid points."""

    return npmle_mixing(data.residuals(np.asarray(beta, dtype=float)), grid.points, em_iters).loglik


BASELINES: dict[str, Callable[[RegressionData], BaselineFit]] = {
    "ls": ols_fit,
    "rls": huber_irls,
    "ml_t4": student_t_ml,
    "l1": l1_fit,
}
