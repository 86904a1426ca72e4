"""CSV ingestion and the JSON/CSV artifacts written by premreg."""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence

import numpy as np
import pandas as pd

from .errors import DataError
from .models import ConfidenceInterval, Dataset, EnvelopeBands, MixingDensity, MseTable, RegressionData

FLOAT_FORMAT = "%.17g"
INTERCEPT = "intercept"

REPORT_NAME = "report.json"
WEIGHTS_NAME = "weights.csv"
MIXING_NAME = "mixing.csv"
LIKPATH_NAME = "likpath.csv"
ENVELOPE_NAME = "envelope.csv"
RESIDUALS_NAME = "residuals.csv"


def _parse_cell(raw, row: int, column: str) -> float:
    text = raw.strip() if isinstance(raw, str) else ""
    if not text:
        raise DataError(f"row {row}, column {column!r}: missing value")
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"row {row}, column {column!r}: non-numeric value {raw!r}") from None
    if not math.isfinite(value):
        raise DataError(f"row {row}, column {column!r}: non-finite value {raw!r}")
    return value


def load_csv(
    path: str | Path,
    response: str,
    predictors: Sequence[str] | None = None,
    intercept: bool = True,
    name: str | None = None,
) -> Dataset:
    """Read a headed CSV into a Dataset; rows in error messages are 1-based data rows."""

    path = Path(path)
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    try:
        raw = pd.read_csv(path, header=None, dtype=str, keep_default_na=False, skip_blank_lines=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot parse {path}: {exc}") from exc
    header = [str(cell).strip() for cell in raw.iloc[0]]
    duplicates = sorted({col for col in header if header.count(col) > 1})
    if duplicates:
        raise DataError(f"duplicate column names in header: {', '.join(duplicates)}")
    body = raw.iloc[1:]
    body.columns = header

    predictors = [col for col in header if col != response] if predictors is None else list(predictors)
    missing = [col for col in [response, *predictors] if col not in header]
    if missing:
        raise DataError(f"columns not found in {path.name}: {', '.join(missing)} (available: {', '.join(header)})")

    def column(col: str) -> np.ndarray:
        return np.array([_parse_cell(cell, row, col) for row, cell in enumerate(body[col], start=1)], dtype=float)

    y = column(response)
    columns = [column(col) for col in predictors]
    names = list(predictors)
    if intercept:
        columns.insert(0, np.ones(y.size))
        names.insert(0, INTERCEPT)
    if not columns:
        raise DataError("the model has no columns: give predictors or enable the intercept")
    payload = RegressionData(X=np.column_stack(columns), y=y, column_names=tuple(names), has_intercept=intercept)
    return Dataset(name=name or path.stem, source=str(path), payload=payload, response_column=response)


def emit_csv(data: RegressionData, path: str | Path, response: str = "y") -> Path:
    """Write predictors and response so that load_csv(path, response, intercept=data.has_intercept) restores data."""

    names = list(data.column_names)
    X = data.X
    if data.has_intercept:
        names, X = names[1:], X[:, 1:]
    frame = pd.DataFrame(X, columns=names)
    frame[response] = data.y
    return _write_frame(frame, path)


def _write_frame(frame: pd.DataFrame, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def save_report(report: Dict[str, Any], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_report(path: str | Path) -> Dict[str, Any]:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _rows(count: int) -> np.ndarray:
    return np.arange(1, count + 1)


def write_weights(weights: Sequence[float], path: str | Path) -> Path:
    weights = np.asarray(weights, dtype=float)
    return _write_frame(pd.DataFrame({"row": _rows(weights.size), "weight": weights}), path)


def write_residuals(residuals: Sequence[float], path: str | Path) -> Path:
    residuals = np.asarray(residuals, dtype=float)
    return _write_frame(pd.DataFrame({"row": _rows(residuals.size), "residual": residuals}), path)


def write_mixing(psi: MixingDensity, path: str | Path) -> Path:
    return _write_frame(pd.DataFrame({"u": psi.grid.points, "psi": psi.values}), path)


def write_likpath(loglik_path: Sequence[float], path: str | Path) -> Path:
    values = np.asarray(loglik_path, dtype=float)
    return _write_frame(pd.DataFrame({"iteration": _rows(values.size), "loglik": values}), path)


def write_envelope(bands: EnvelopeBands, path: str | Path) -> Path:
    frame = pd.DataFrame(
        {"theoretical_q": bands.theoretical, "observed": bands.observed, "lower": bands.lower, "upper": bands.upper}
    )
    return _write_frame(frame, path)


def write_profile(beta_values: Sequence[float], logliks: Sequence[float], path: str | Path) -> Path:
    return _write_frame(pd.DataFrame({"beta_value": np.asarray(beta_values), "loglik": np.asarray(logliks)}), path)


def write_intervals(intervals: Iterable[ConfidenceInterval], path: str | Path) -> Path:
    records = [
        {"coefficient": ci.coefficient, "estimate": ci.estimate, "lower": ci.lower, "upper": ci.upper} for ci in intervals
    ]
    return _write_frame(pd.DataFrame(records, columns=["coefficient", "estimate", "lower", "upper"]), path)


def write_mse_table(table: MseTable, path: str | Path) -> Path:
    records: List[Dict[str, Any]] = [
        {
            "error": row.error,
            "method": row.method,
            "mse": np.nan if row.mse is None else row.mse,
            "replications": row.replications,
            "failures": row.failures,
            "seed": row.seed,
        }
        for row in table.rows
    ]
    columns = ["error", "method", "mse", "replications", "failures", "seed"]
    return _write_frame(pd.DataFrame(records, columns=columns), path)
