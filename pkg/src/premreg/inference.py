"""Finite-difference curvature of the PR log-likelihood and Wald-type intervals."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence

import numpy as np
from rich.console import Console
from scipy import stats

from .baselines import _ols_beta, ols_standard_errors, student_t_loglik, student_t_ml
from .errors import DomainError, NumericalError
from .models import BaselineFit, ConfidenceInterval, CurvatureReport, PremFit, RegressionData
from .prem import PremConfig, loglik_objective

console = Console(stderr=True)

STEP_FLOOR = 1e-4
STEP_RELATIVE = 1e-4
HALVING_TOLERANCE = 0.05
INTERVAL_METHODS = ("prem", "ls", "ml_t4")

Objective = Callable[[np.ndarray], float]


def default_steps(beta_hat: Sequence[float]) -> np.ndarray:
    """h_j = max(1e-4, 1e-4 * |beta_j|)."""

    beta_hat = np.asarray(beta_hat, dtype=float)
    return np.maximum(STEP_FLOOR, STEP_RELATIVE * np.abs(beta_hat))


def _stencil(beta_hat: np.ndarray, steps: np.ndarray) -> List[np.ndarray]:
    p = beta_hat.size
    offsets = [np.zeros(p)]
    for i in range(p):
        for sign in (1.0, -1.0):
            shift = np.zeros(p)
            shift[i] = sign * steps[i]
            offsets.append(shift)
    for i in range(p):
        for j in range(i + 1, p):
            for si, sj in ((1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)):
                shift = np.zeros(p)
                shift[i] = si * steps[i]
                shift[j] = sj * steps[j]
                offsets.append(shift)
    return [beta_hat + offset for offset in offsets]


def hessian_fd(
    objective: Objective,
    beta_hat: Sequence[float],
    steps: Sequence[float] | None = None,
    max_workers: int | None = None,
) -> np.ndarray:
    """Hessian of -objective at beta_hat by central differences, symmetrized."""

    beta_hat = np.asarray(beta_hat, dtype=float)
    p = beta_hat.size
    steps = default_steps(beta_hat) if steps is None else np.asarray(steps, dtype=float)
    if steps.shape != (p,) or np.any(~(steps > 0)):
        raise DomainError(f"steps must be {p} positive values")

    points = _stencil(beta_hat, steps)
    if max_workers == 1:
        values = [float(objective(point)) for point in points]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            values = [float(v) for v in pool.map(objective, points)]
    for point, value in zip(points, values):
        if not np.isfinite(value):
            raise NumericalError(f"objective is not finite at beta={np.array2string(point, precision=6)}")

    f0 = values[0]
    axis = iter(values[1 : 1 + 2 * p])
    H = np.empty((p, p))
    for i in range(p):
        f_plus, f_minus = next(axis), next(axis)
        H[i, i] = -(f_plus - 2.0 * f0 + f_minus) / steps[i] ** 2
    cross = iter(values[1 + 2 * p :])
    for i in range(p):
        for j in range(i + 1, p):
            f_pp, f_pm, f_mp, f_mm = (next(cross) for _ in range(4))
            H[i, j] = H[j, i] = -(f_pp - f_pm - f_mp + f_mm) / (4.0 * steps[i] * steps[j])
    return 0.5 * (H + H.T)


def curvature(
    objective: Objective,
    beta_hat: Sequence[float],
    steps: Sequence[float] | None = None,
    max_workers: int | None = None,
) -> CurvatureReport:
    beta_hat = np.asarray(beta_hat, dtype=float)
    steps = default_steps(beta_hat) if steps is None else np.asarray(steps, dtype=float)
    H = hessian_fd(objective, beta_hat, steps, max_workers)
    eigenvalues = np.linalg.eigvalsh(H)
    try:
        inverse = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        inverse = np.full_like(H, np.nan)
    inverse = 0.5 * (inverse + inverse.T)
    return CurvatureReport(
        hessian=H,
        hessian_inverse=inverse,
        step_sizes=steps,
        condition_number=float(np.linalg.cond(H)),
        min_eigenvalue=float(eigenvalues[0]),
    )


def step_halving_check(
    objective: Objective,
    beta_hat: Sequence[float],
    steps: Sequence[float] | None = None,
    tolerance: float = HALVING_TOLERANCE,
    max_workers: int | None = None,
) -> tuple[float, bool]:
    """Largest relative change of the Hessian entries when every step is halved."""

    beta_hat = np.asarray(beta_hat, dtype=float)
    steps = default_steps(beta_hat) if steps is None else np.asarray(steps, dtype=float)
    full = hessian_fd(objective, beta_hat, steps, max_workers)
    half = hessian_fd(objective, beta_hat, steps / 2.0, max_workers)
    scale = np.max(np.abs(full))
    if scale == 0:
        return 0.0, True
    change = float(np.max(np.abs(half - full)) / scale)
    return change, change <= tolerance


def _multiplier(level: float) -> float:
    if not 0.0 < level < 1.0:
        raise DomainError(f"level must lie in (0, 1), got {level}")
    return float(stats.norm.ppf(0.5 * (1.0 + level)))


def intervals_from_curvature(
    beta_hat: Sequence[float],
    hessian_inverse: np.ndarray,
    level: float = 0.95,
    column_names: Sequence[str] | None = None,
) -> List[ConfidenceInterval]:
    """beta_j +/- z * sqrt(J_jj); a non-positive J_jj is an error for that coordinate."""

    beta_hat = np.asarray(beta_hat, dtype=float)
    names = list(column_names) if column_names else [f"b{j}" for j in range(beta_hat.size)]
    z = _multiplier(level)
    diagonal = np.diag(np.asarray(hessian_inverse, dtype=float))
    intervals = []
    for name, estimate, variance in zip(names, beta_hat, diagonal):
        if not (np.isfinite(variance) and variance > 0):
            raise NumericalError(f"inverse curvature for {name} is not positive ({variance!r})")
        half_width = z * float(np.sqrt(variance))
        intervals.append(
            ConfidenceInterval(
                coefficient=name, estimate=float(estimate), lower=float(estimate - half_width), upper=float(estimate + half_width)
            )
        )
    return intervals


def confidence_intervals(
    fit: PremFit,
    data: RegressionData,
    config: PremConfig,
    level: float = 0.95,
    steps: Sequence[float] | None = None,
    max_workers: int | None = None,
) -> List[ConfidenceInterval]:
    """Intervals from the inverse Hessian of -loglik at the PR-EM estimate."""

    if not fit.converged:
        console.log("confidence intervals requested for a PR-EM fit that did not converge")
    objective = loglik_objective(data, config, fit.sigma_hat_ls)
    report = curvature(objective, fit.beta_hat, steps, max_workers)
    if not report.positive_definite:
        eigenvalues, vectors = np.linalg.eigh(report.hessian)
        coordinate = int(np.argmax(np.abs(vectors[:, 0])))
        raise NumericalError(
            f"curvature is not positive definite: eigenvalue {eigenvalues[0]:.6g} "
            f"dominated by coefficient {data.column_names[coordinate]}"
        )
    return intervals_from_curvature(fit.beta_hat, report.hessian_inverse, level, data.column_names)


def ols_intervals(data: RegressionData, level: float = 0.95) -> List[ConfidenceInterval]:
    """Classical t-intervals for least squares."""

    if not 0.0 < level < 1.0:
        raise DomainError(f"level must lie in (0, 1), got {level}")
    beta = _ols_beta(data)
    errors = ols_standard_errors(data)
    quantile = float(stats.t.ppf(0.5 * (1.0 + level), max(data.n - data.p, 1)))
    return [
        ConfidenceInterval(coefficient=name, estimate=float(b), lower=float(b - quantile * se), upper=float(b + quantile * se))
        for name, b, se in zip(data.column_names, beta, errors)
    ]


def student_t_intervals(
    data: RegressionData,
    level: float = 0.95,
    df: float = 4.0,
    fit: BaselineFit | None = None,
    max_workers: int | None = None,
) -> List[ConfidenceInterval]:
    """Wald intervals for the t_df maximum likelihood fit.

    The observed information is taken over (beta, log sigma) jointly and the beta
    block of its inverse gives the variances.
    """

    _multiplier(level)
    fit = fit or student_t_ml(data, df)
    if fit.scale_hat is None:
        raise NumericalError(f"{fit.method} fit has no positive scale; residuals are all zero")
    if not fit.converged:
        console.log(f"Wald intervals requested for a {fit.method} fit that did not converge")
    p = data.p

    def objective(theta: np.ndarray) -> float:
        return student_t_loglik(data.residuals(theta[:p]), float(np.exp(theta[p])), df)

    theta_hat = np.append(fit.beta_hat, np.log(fit.scale_hat))
    report = curvature(objective, theta_hat, max_workers=max_workers)
    if not report.positive_definite:
        raise NumericalError(f"{fit.method} information is not positive definite (eigenvalue {report.min_eigenvalue:.6g})")
    return intervals_from_curvature(fit.beta_hat, report.hessian_inverse[:p, :p], level, data.column_names)

