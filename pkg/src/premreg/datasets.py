"""Case-study datasets shipped with the package."""
from __future__ import annotations

from dataclasses import dataclass, replace
from importlib import resources
from typing import Dict, Tuple

from .errors import DataError
from .io import load_csv
from .models import Dataset, OutlierAnnotation

VERTICAL_OUTLIER = "vertical outlier"
REGRESSION_OUTLIER = "regression outlier"
LEVERAGE_POINT = "leverage point"


@dataclass(frozen=True)
class BundledSpec:
    filename: str
    response: str
    source: str
    annotations: Tuple[Tuple[range, str], ...]


BUNDLED: Dict[str, BundledSpec] = {
    "phones": BundledSpec(
        filename="phones.csv",
        response="calls",
        source="Belgian international phone calls 1950-1973 (R package MASS, dataset phones)",
        annotations=((range(14, 20), VERTICAL_OUTLIER),),
    ),
    "hbk": BundledSpec(
        filename="hbk.csv",
        response="Y",
        source="Hawkins, Bradu & Kass (1984) artificial data (R packages MASS/robustbase, dataset hbk)",
        annotations=((range(0, 10), REGRESSION_OUTLIER), (range(10, 14), LEVERAGE_POINT)),
    ),
}


def available() -> list[str]:
    return sorted(BUNDLED)


def is_bundled(name: str) -> bool:
    return name.lower() in BUNDLED


def bundled_dataset(name: str) -> Dataset:
    """Load a bundled dataset with its outlier annotations (0-based rows)."""

    spec = BUNDLED.get(name.lower())
    if spec is None:
        raise DataError(f"unknown dataset {name!r}; available: {', '.join(available())}")
    resource = resources.files("premreg").joinpath("data", spec.filename)
    with resources.as_file(resource) as path:
        dataset = load_csv(path, response=spec.response, intercept=True, name=name.lower())
    annotations = tuple(
        OutlierAnnotation(row=row, reason=reason) for rows, reason in spec.annotations for row in rows
    )
    return replace(dataset, source=spec.source, outlier_annotations=annotations)
