"""Monte Carlo comparison of the estimators under scale-mixture error laws."""
from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from rich.console import Console
from rich.table import Table
from scipy.linalg import cholesky, toeplitz

from .baselines import BASELINES
from .errors import DataError, DomainError
from .models import MseRow, MseTable, RegressionData
from .prem import PremConfig, prem_fit
from .progress import ProgressEvent, replication_percent

console = Console(stderr=True)

ERROR_TAGS = ("Normal", "Laplace", "T1", "T2", "NExp", "NUnif")
DESIGN_TAGS = ("iid_normal", "ar1")
METHOD_LABELS: Dict[str, str] = {"ls": "LS", "rls": "RLS", "ml_t4": "ML_t4", "l1": "L1", "prem": "PREM"}
DEFAULT_METHODS = ("ls", "rls", "ml_t4", "l1", "prem")
NUNIF_UPPER = 7.0

DESIGN_STREAM = 0
ERROR_STREAM = 1

ProgressCallback = Callable[[ProgressEvent], None]


@dataclass(frozen=True)
class ErrorDistribution:
    tag: str

    def __post_init__(self) -> None:
        canonical = {name.lower(): name for name in ERROR_TAGS}.get(str(self.tag).lower())
        if canonical is None:
            raise DomainError(f"unknown error distribution {self.tag!r}; expected one of {', '.join(ERROR_TAGS)}")
        object.__setattr__(self, "tag", canonical)


def sample_errors(dist: ErrorDistribution, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n errors; mixtures are sampled by composition, t laws from normals only."""

    z = rng.standard_normal(n)
    if dist.tag == "Normal":
        return z
    if dist.tag == "Laplace":
        return rng.laplace(0.0, 1.0, n)
    if dist.tag == "T1":
        return z / rng.standard_normal(n)
    if dist.tag == "T2":
        chi2 = rng.standard_normal(n) ** 2 + rng.standard_normal(n) ** 2
        return z / np.sqrt(chi2 / 2.0)
    if dist.tag == "NExp":
        return z * rng.exponential(1.0, n)
    return z * rng.uniform(0.0, NUNIF_UPPER, n)


@dataclass(frozen=True, eq=False)
class ScenarioSpec:
    error: ErrorDistribution
    n: int = 100
    p: int = 3
    design: str = "iid_normal"
    rho: float = 0.0
    beta_true: Optional[Sequence[float]] = None
    replications: int = 100
    seed: int = 0
    methods: Sequence[str] = DEFAULT_METHODS
    prem_config: PremConfig = field(default_factory=PremConfig)

    def __post_init__(self) -> None:
        if self.replications < 1:
            raise DomainError(f"replications must be at least 1, got {self.replications}")
        if self.p < 1 or self.n < self.p:
            raise DomainError(f"need n >= p >= 1, got n={self.n}, p={self.p}")
        if self.design not in DESIGN_TAGS:
            raise DomainError(f"unknown design {self.design!r}; expected one of {', '.join(DESIGN_TAGS)}")
        if self.design == "ar1" and not -1.0 < self.rho < 1.0:
            raise DomainError(f"AR1 correlation must lie in (-1, 1), got {self.rho}")
        if not self.methods:
            raise DomainError("at least one method is required")
        unknown = [m for m in self.methods if m not in METHOD_LABELS]
        if unknown:
            raise DomainError(f"unknown methods: {', '.join(unknown)}")
        beta = np.ones(self.p) if self.beta_true is None else np.asarray(self.beta_true, dtype=float)
        if beta.shape != (self.p,):
            raise DomainError(f"beta must have {self.p} entries, got {beta.size}")
        beta.setflags(write=False)
        object.__setattr__(self, "beta_true", beta)
        object.__setattr__(self, "methods", tuple(self.methods))


def replication_stream(seed: int, replication: int, purpose: int) -> np.random.Generator:
    """Counter-based stream keyed by (seed, replication, purpose)."""

    sequence = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(replication, purpose))
    return np.random.Generator(np.random.Philox(sequence))


def make_design(spec: ScenarioSpec, rng: np.random.Generator) -> RegressionData:
    """Intercept column plus p - 1 mean-zero normal covariates (iid or AR1 correlated)."""

    k = spec.p - 1
    covariates = rng.standard_normal((spec.n, k))
    if spec.design == "ar1" and k > 1:
        factor = cholesky(toeplitz(spec.rho ** np.arange(k)), lower=True)
        covariates = covariates @ factor.T
    X = np.column_stack([np.ones(spec.n), covariates])
    names = ("intercept",) + tuple(f"x{j}" for j in range(1, spec.p))
    return RegressionData(X=X, y=np.zeros(spec.n), column_names=names, has_intercept=True)


def _fit_method(method: str, data: RegressionData, spec: ScenarioSpec) -> np.ndarray:
    if method == "prem":
        return prem_fit(data, spec.prem_config).beta_hat
    return BASELINES[method](data).beta_hat


def _replicate(spec: ScenarioSpec, replication: int) -> Dict[str, Optional[float]]:
    design = make_design(spec, replication_stream(spec.seed, replication, DESIGN_STREAM))
    errors = sample_errors(spec.error, spec.n, replication_stream(spec.seed, replication, ERROR_STREAM))
    data = design.with_response(design.X @ spec.beta_true + errors)
    outcome: Dict[str, Optional[float]] = {}
    for method in spec.methods:
        try:
            beta = _fit_method(method, data, spec)
            outcome[method] = float(np.sum((beta - spec.beta_true) ** 2) / spec.p)
        except Exception as exc:  # noqa: BLE001
            console.log(f"{spec.error.tag}/{METHOD_LABELS[method]} replication {replication} failed: {exc}")
            outcome[method] = None
    return outcome


def run_scenario(
    spec: ScenarioSpec, max_workers: int | None = None, on_progress: ProgressCallback | None = None
) -> MseTable:
    """Mean of ||beta_hat - beta||^2 / p over replications, per method."""

    replications = range(spec.replications)
    results: List[Dict[str, Optional[float]]] = []
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        for done, outcome in enumerate(pool.map(lambda r: _replicate(spec, r), replications), start=1):
            results.append(outcome)
            if on_progress:
                on_progress(
                    ProgressEvent(
                        stage="Simulate",
                        percent=replication_percent(done, spec.replications),
                        message=f"{spec.error.tag}: replication {done}/{spec.replications}",
                    )
                )

    table = MseTable()
    for method in spec.methods:
        values = [outcome[method] for outcome in results if outcome[method] is not None]
        table.rows.append(
            MseRow(
                error=spec.error.tag,
                method=METHOD_LABELS[method],
                mse=float(np.mean(values)) if values else None,
                replications=spec.replications,
                failures=spec.replications - len(values),
                seed=spec.seed,
            )
        )
    return table


_LINE = re.compile(r"^\s*([A-Za-z_]+)\s*=\s*(.*?)\s*$")
_AR1 = re.compile(r"^ar1(?:\(\s*([-+0-9.eE]+)\s*\))?$", re.IGNORECASE)
SCENARIO_KEYS = ("error", "n", "p", "design", "rho", "beta", "replications", "seed", "methods")


def _split_list(value: str) -> List[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


def parse_scenario_file(path: Path, prem_config: PremConfig | None = None) -> List[ScenarioSpec]:
    """Read ``key = value`` lines; ``error`` may list several distributions, one scenario each."""

    problems: List[str] = []
    values: Dict[str, str] = {}
    for number, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        match = _LINE.match(line)
        if not match:
            problems.append(f"line {number}: expected 'key = value', got {raw.strip()!r}")
            continue
        key, value = match.group(1).lower(), match.group(2)
        if key not in SCENARIO_KEYS:
            problems.append(f"line {number}: unknown key {key!r}")
        elif key in values:
            problems.append(f"line {number}: duplicate key {key!r}")
        else:
            values[key] = value
    if "error" not in values:
        problems.append("missing required key 'error'")
    if problems:
        raise DataError("malformed scenario file:\n  " + "\n  ".join(problems))

    try:
        options: Dict[str, object] = {}
        for key in ("n", "p", "replications", "seed"):
            if key in values:
                options[key] = int(values[key])
        design = values.get("design", "iid_normal").strip()
        rho = float(values["rho"]) if "rho" in values else 0.0
        ar1 = _AR1.match(design)
        if ar1:
            options["design"] = "ar1"
            if ar1.group(1):
                rho = float(ar1.group(1))
        else:
            options["design"] = design.lower()
        options["rho"] = rho
        if "methods" in values:
            options["methods"] = tuple(m.lower() for m in _split_list(values["methods"]))
        if "beta" in values:
            beta = [float(b) for b in _split_list(values["beta"])]
            p = int(options.get("p", 3))
            options["beta_true"] = beta * p if len(beta) == 1 else beta
        if prem_config is not None:
            options["prem_config"] = prem_config
        return [ScenarioSpec(error=ErrorDistribution(tag), **options) for tag in _split_list(values["error"])]
    except (ValueError, DomainError) as exc:
        raise DataError(f"invalid scenario file {path}: {exc}") from exc


def print_mse_table(table: MseTable, out: Console | None = None) -> None:
    out = out or Console()
    methods = list(dict.fromkeys(row.method for row in table.rows))
    errors = list(dict.fromkeys(row.error for row in table.rows))
    view = Table(title="Empirical mean squared error")
    view.add_column("error")
    for method in methods:
        view.add_column(method, justify="right")
    lookup = {(row.error, row.method): row for row in table.rows}
    for error in errors:
        cells = []
        for method in methods:
            row = lookup.get((error, method))
            if row is None:
                cells.append("")
            elif row.mse is None:
                cells.append("failed")
            else:
                suffix = f" ({row.failures} failed)" if row.failures else ""
                cells.append(f"{row.mse:.4g}{suffix}")
        view.add_row(error, *cells)
    out.print(view)
