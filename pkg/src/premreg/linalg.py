"""Weighted least squares through a pivoted QR factorization."""
from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.linalg import qr, solve_triangular

from .errors import DataError, DomainError

RANK_RCOND = 1e-7


def rank_deficient_columns(X: np.ndarray, rcond: float = RANK_RCOND) -> list[int]:
    """Indices of columns a pivoted QR marks as linearly dependent."""

    _, R, pivot = qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0:
        return list(range(X.shape[1]))
    rank = int(np.sum(diag > rcond * diag[0]))
    return sorted(int(col) for col in pivot[rank:])


def weighted_lstsq(
    X: np.ndarray,
    y: np.ndarray,
    weights: np.ndarray | None = None,
    column_names: Sequence[str] | None = None,
) -> np.ndarray:
    """Minimize sum_i w_i (y_i - x_i' beta)^2 without forming X' W X.

    Raises DataError naming the deficient columns when sqrt(W) X is rank deficient.
    """

    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if weights is None:
        root = np.ones(y.size)
    else:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != y.shape:
            raise DomainError(f"expected {y.size} weights, got {weights.size}")
        if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
            raise DomainError("weights must be positive and finite")
        root = np.sqrt(weights)
    Xw = X * root[:, None]
    yw = y * root
    Q, R, pivot = qr(Xw, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > RANK_RCOND * diag[0])) if diag.size and diag[0] > 0 else 0
    if rank < X.shape[1]:
        names = list(column_names) if column_names else [f"column {j}" for j in range(X.shape[1])]
        dropped = sorted(int(col) for col in pivot[rank:])
        raise DataError(
            "design is rank deficient; dependent columns: " + ", ".join(names[j] for j in dropped)
        )
    coef = solve_triangular(R, Q.T @ yw, lower=False)
    beta = np.empty_like(coef)
    beta[pivot] = coef
    return beta
