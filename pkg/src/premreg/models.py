"""Data models for the premreg toolkit."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import DataError, DomainError

NORMALIZATION_TOL = 1e-10


def _frozen(values, dtype=float) -> np.ndarray:
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class ScaleGrid:
    """Discretization of the scale support [u_min, u_max] with trapezoid weights.

    The normal kernel is evaluated at ``kernel_scales``, the grid points floored at
    ``min_kernel_scale``; quadrature still runs over ``points``.
    """

    u_min: float
    u_max: float
    points: np.ndarray
    quadrature_weights: np.ndarray
    min_kernel_scale: float = 0.0

    def __post_init__(self) -> None:
        if not (np.isfinite(self.u_min) and np.isfinite(self.u_max)):
            raise DomainError("grid bounds must be finite")
        if self.u_min <= 0:
            raise DomainError(f"u_min must be positive, got {self.u_min}")
        if self.u_max <= self.u_min:
            raise DomainError(f"u_max ({self.u_max}) must exceed u_min ({self.u_min})")
        if not (np.isfinite(self.min_kernel_scale) and 0.0 <= self.min_kernel_scale < self.u_max):
            raise DomainError(f"min_kernel_scale must lie in [0, u_max), got {self.min_kernel_scale}")
        points = _frozen(self.points)
        weights = _frozen(self.quadrature_weights)
        if points.ndim != 1 or points.size < 2:
            raise DomainError("a scale grid needs at least two points")
        if weights.shape != points.shape:
            raise DomainError("quadrature weights must match the grid points")
        if np.any(np.diff(points) <= 0):
            raise DomainError("grid points must be strictly increasing")
        if np.any(weights <= 0):
            raise DomainError("quadrature weights must be positive")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "quadrature_weights", weights)
        object.__setattr__(self, "_kernel_scales", _frozen(np.maximum(points, self.min_kernel_scale)))

    @classmethod
    def uniform(cls, u_min: float, u_max: float, size: int = 100, min_kernel_scale: float = 0.0) -> "ScaleGrid":
        if size < 2:
            raise DomainError(f"grid size must be at least 2, got {size}")
        points = np.linspace(u_min, u_max, size)
        points[0], points[-1] = u_min, u_max
        step = (u_max - u_min) / (size - 1)
        weights = np.full(size, step)
        weights[0] = weights[-1] = 0.5 * step
        return cls(
            u_min=float(u_min),
            u_max=float(u_max),
            points=points,
            quadrature_weights=weights,
            min_kernel_scale=float(min_kernel_scale),
        )

    @classmethod
    def geometric(cls, u_min: float, u_max: float, size: int = 100) -> "ScaleGrid":
        """Log-spaced points, dense at small scales, with non-uniform trapezoid weights."""

        if size < 2:
            raise DomainError(f"grid size must be at least 2, got {size}")
        if not 0 < u_min < u_max:
            raise DomainError(f"geometric grid needs 0 < u_min < u_max, got [{u_min}, {u_max}]")
        points = np.geomspace(u_min, u_max, size)
        points[0], points[-1] = u_min, u_max
        gaps = np.diff(points)
        weights = np.empty(size)
        weights[0] = 0.5 * gaps[0]
        weights[-1] = 0.5 * gaps[-1]
        weights[1:-1] = 0.5 * (gaps[:-1] + gaps[1:])
        return cls(u_min=float(u_min), u_max=float(u_max), points=points, quadrature_weights=weights)

    @property
    def size(self) -> int:
        return int(self.points.size)

    @property
    def kernel_scales(self) -> np.ndarray:
        return self._kernel_scales

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.quadrature_weights, values))

    def to_dict(self) -> dict:
        return {"u_min": self.u_min, "u_max": self.u_max, "size": self.size, "min_kernel_scale": self.min_kernel_scale}


@dataclass(frozen=True, eq=False)
class MixingDensity:
    """Density values of the mixing distribution on a ScaleGrid."""

    grid: ScaleGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        values = _frozen(self.values)
        if values.shape != self.grid.points.shape:
            raise DomainError("density values must match the grid size")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise DomainError("density values must be finite and nonnegative")
        total = self.grid.integrate(values)
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise DomainError(f"mixing density integrates to {total!r}, expected 1")
        object.__setattr__(self, "values", values)

    @classmethod
    def normalized(cls, grid: ScaleGrid, values: np.ndarray) -> "MixingDensity":
        values = np.clip(np.asarray(values, dtype=float), 0.0, None)
        total = grid.integrate(values)
        if not np.isfinite(total) or total <= 0:
            raise DomainError("cannot normalize a density with zero or non-finite mass")
        return cls(grid=grid, values=values / total)

    @classmethod
    def uniform(cls, grid: ScaleGrid) -> "MixingDensity":
        return cls.normalized(grid, np.ones(grid.size))

    def node_masses(self) -> np.ndarray:
        """Probability attached to each grid node by the quadrature rule."""

        return self.grid.quadrature_weights * self.values

    def integral(self) -> float:
        return self.grid.integrate(self.values)

    def mass_between(self, lower: float, upper: float) -> float:
        inside = (self.grid.points >= lower) & (self.grid.points <= upper)
        return float(self.node_masses()[inside].sum())

    def mean(self) -> float:
        return float(np.dot(self.node_masses(), self.grid.points))

    def to_dict(self) -> dict:
        return {"grid": self.grid.to_dict(), "mean_scale": self.mean()}


@dataclass(frozen=True, eq=False)
class RegressionData:
    """Design matrix, response and column metadata for y = X beta + eps."""

    X: np.ndarray
    y: np.ndarray
    column_names: tuple[str, ...]
    has_intercept: bool = False

    def __post_init__(self) -> None:
        X = _frozen(self.X)
        y = _frozen(self.y)
        if X.ndim == 1:
            X = _frozen(X.reshape(-1, 1))
        if X.ndim != 2 or y.ndim != 1:
            raise DataError("X must be a matrix and y a vector")
        n, p = X.shape
        if y.size != n:
            raise DataError(f"X has {n} rows but y has {y.size} entries")
        if p < 1 or n < p:
            raise DataError(f"need n >= p >= 1, got n={n}, p={p}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataError("X and y must contain only finite values")
        names = tuple(str(name) for name in self.column_names)
        if len(names) != p:
            raise DataError(f"expected {p} column names, got {len(names)}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "column_names", names)

    @property
    def n(self) -> int:
        return int(self.X.shape[0])

    @property
    def p(self) -> int:
        return int(self.X.shape[1])

    def residuals(self, beta: Sequence[float]) -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (self.p,):
            raise DomainError(f"beta has shape {beta.shape}, expected ({self.p},)")
        return self.y - self.X @ beta

    def with_response(self, y: np.ndarray) -> "RegressionData":
        return RegressionData(X=self.X, y=y, column_names=self.column_names, has_intercept=self.has_intercept)


@dataclass(frozen=True, eq=False)
class PremFit:
    """Result of the hybrid PR-EM optimizer."""

    beta_hat: np.ndarray
    psi_hat: MixingDensity
    obs_weights: np.ndarray
    loglik_path: np.ndarray
    iterations: int
    converged: bool
    sigma_hat_ls: float
    beta_path: np.ndarray
    ascent_violations: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        for name in ("beta_hat", "obs_weights", "loglik_path", "beta_path"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def loglik(self) -> float:
        return float(self.loglik_path[-1])

    def to_dict(self, column_names: Sequence[str] | None = None) -> dict:
        names = list(column_names) if column_names else [f"b{j}" for j in range(self.beta_hat.size)]
        return {
            "method": "prem",
            "beta": dict(zip(names, (float(b) for b in self.beta_hat))),
            "iterations": self.iterations,
            "converged": self.converged,
            "loglik": self.loglik,
            "loglik_path": [float(v) for v in self.loglik_path],
            "sigma_hat_ls": self.sigma_hat_ls,
            "ascent_violations": list(self.ascent_violations),
            "mixing": self.psi_hat.to_dict(),
        }


@dataclass(frozen=True, eq=False)
class BaselineFit:
    """Result of one of the comparator estimators."""

    method: str
    beta_hat: np.ndarray
    scale_hat: Optional[float] = None
    iterations: int = 0
    converged: bool = True
    weights: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        beta = _frozen(self.beta_hat)
        if not np.all(np.isfinite(beta)):
            raise DomainError(f"{self.method}: non-finite coefficient estimate")
        if self.scale_hat is not None and not self.scale_hat > 0:
            raise DomainError(f"{self.method}: scale estimate must be positive, got {self.scale_hat}")
        object.__setattr__(self, "beta_hat", beta)
        if self.weights is not None:
            object.__setattr__(self, "weights", _frozen(self.weights))

    def to_dict(self, column_names: Sequence[str] | None = None) -> dict:
        names = list(column_names) if column_names else [f"b{j}" for j in range(self.beta_hat.size)]
        return {
            "method": self.method,
            "beta": dict(zip(names, (float(b) for b in self.beta_hat))),
            "scale": self.scale_hat,
            "iterations": self.iterations,
            "converged": self.converged,
        }


@dataclass(frozen=True, eq=False)
class CurvatureReport:
    """Finite-difference curvature of -loglik at the maximizer."""

    hessian: np.ndarray
    hessian_inverse: np.ndarray
    step_sizes: np.ndarray
    condition_number: float
    min_eigenvalue: float

    def __post_init__(self) -> None:
        for name in ("hessian", "hessian_inverse", "step_sizes"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def positive_definite(self) -> bool:
        return self.min_eigenvalue > 0


@dataclass(frozen=True)
class ConfidenceInterval:
    coefficient: str
    estimate: float
    lower: float
    upper: float

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, other: "ConfidenceInterval") -> bool:
        return self.lower < other.lower and other.upper < self.upper


@dataclass(frozen=True)
class OutlierAnnotation:
    row: int
    reason: str


@dataclass(frozen=True, eq=False)
class Dataset:
    """A named regression dataset with optional outlier annotations (0-based rows)."""

    name: str
    source: str
    payload: RegressionData
    response_column: str
    outlier_annotations: tuple[OutlierAnnotation, ...] = ()

    def __post_init__(self) -> None:
        for note in self.outlier_annotations:
            if not 0 <= note.row < self.payload.n:
                raise DataError(f"annotation references row {note.row} outside 0..{self.payload.n - 1}")

    def rows_tagged(self, reason: str) -> List[int]:
        return [note.row for note in self.outlier_annotations if note.reason == reason]


@dataclass(frozen=True, eq=False)
class EnvelopeBands:
    """Normal Q-Q plot data with a simulated pointwise envelope."""

    theoretical: np.ndarray
    observed: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    n_simulations: int

    def __post_init__(self) -> None:
        arrays = [_frozen(getattr(self, name)) for name in ("theoretical", "observed", "lower", "upper")]
        if len({a.size for a in arrays}) != 1:
            raise DomainError("envelope arrays must share one length")
        if np.any(arrays[2] > arrays[3]):
            raise DomainError("envelope lower band exceeds upper band")
        for name, array in zip(("theoretical", "observed", "lower", "upper"), arrays):
            object.__setattr__(self, name, array)

    def outside(self) -> np.ndarray:
        return (self.observed < self.lower) | (self.observed > self.upper)


@dataclass(frozen=True)
class MseRow:
    error: str
    method: str
    mse: Optional[float]
    replications: int
    failures: int
    seed: int


@dataclass
class MseTable:
    rows: List[MseRow] = field(default_factory=list)

    def get(self, error: str, method: str) -> MseRow:
        for row in self.rows:
            if row.error == error and row.method == method:
                return row
        raise KeyError((error, method))

    def extend(self, other: "MseTable") -> None:
        self.rows.extend(other.rows)

    def as_dict(self) -> Dict[tuple[str, str], Optional[float]]:
        return {(row.error, row.method): row.mse for row in self.rows}
