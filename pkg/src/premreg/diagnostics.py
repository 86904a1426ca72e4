"""Residual Q-Q envelopes and one-dimensional likelihood slices."""
from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy import stats

from .baselines import NPMLE_EM_ITERS, npmle_profile_loglik, ols_sigma
from .errors import DomainError
from .models import EnvelopeBands, RegressionData, ScaleGrid
from .prem import PremConfig, loglik_objective

ENGINES = ("pr", "npmle")


def _generator(rng: np.random.Generator | int | None) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def qq_envelope(
    residuals: Sequence[float], n_simulations: int = 99, rng: np.random.Generator | int | None = None
) -> EnvelopeBands:
    """Standardized ordered residuals against normal quantiles, with a min/max simulated envelope."""

    residuals = np.asarray(residuals, dtype=float)
    n = residuals.size
    if n < 3:
        raise DomainError(f"a Q-Q envelope needs at least 3 residuals, got {n}")
    if n_simulations < 1:
        raise DomainError(f"n_simulations must be at least 1, got {n_simulations}")
    centered = residuals - residuals.mean()
    spread = centered.std(ddof=1)
    observed = np.sort(centered / spread if spread > 0 else centered)
    theoretical = stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    simulated = np.sort(_generator(rng).standard_normal((n_simulations, n)), axis=1)
    return EnvelopeBands(
        theoretical=theoretical,
        observed=observed,
        lower=simulated.min(axis=0),
        upper=simulated.max(axis=0),
        n_simulations=n_simulations,
    )


def slice_values(lo: float, hi: float, count: int) -> np.ndarray:
    if count < 2:
        raise DomainError(f"a slice needs at least 2 points, got {count}")
    if not lo < hi:
        raise DomainError(f"slice bounds must satisfy lo < hi, got [{lo}, {hi}]")
    return np.linspace(lo, hi, count)


def profile_slice(
    data: RegressionData,
    coefficient: int,
    values: Sequence[float],
    base_beta: Sequence[float],
    engine: str = "pr",
    config: PremConfig | None = None,
    em_iters: int = NPMLE_EM_ITERS,
) -> np.ndarray:
    """Log-likelihood along one coefficient with the others held at base_beta.

    The npmle engine maximizes over masses on a log-spaced support spanning the
    PR grid bounds, so atoms reach down to the small scales where the profile
    peaks next to each observation.
    """

    if engine not in ENGINES:
        raise DomainError(f"engine must be one of {', '.join(ENGINES)}, got {engine!r}")
    if not 0 <= coefficient < data.p:
        raise DomainError(f"coefficient index {coefficient} outside 0..{data.p - 1}")
    base = np.array(base_beta, dtype=float)
    if base.shape != (data.p,):
        raise DomainError(f"base beta must have {data.p} entries")
    config = config or PremConfig()
    sigma = ols_sigma(data)
    if engine == "pr":
        objective = loglik_objective(data, config, sigma)
    else:
        bounds = config.pr_config(sigma).grid
        grid = ScaleGrid.geometric(bounds.u_min, bounds.u_max, bounds.size)

        def objective(beta: np.ndarray) -> float:
            return npmle_profile_loglik(beta, data, grid, em_iters)

    out = np.empty(len(values))
    for k, value in enumerate(values):
        beta = base.copy()
        beta[coefficient] = value
        out[k] = objective(beta)
    return out


def count_local_maxima(values: Sequence[float]) -> int:
    """Strict interior local maxima, with runs of equal values treated as one point."""

    values = np.asarray(values, dtype=float)
    if values.size < 3:
        return 0
    keep = np.concatenate([[True], np.diff(values) != 0])
    runs = values[keep]
    if runs.size < 3:
        return 0
    middle = runs[1:-1]
    return int(np.sum((middle > runs[:-2]) & (middle > runs[2:])))
