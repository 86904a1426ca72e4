"""Shared fit runner for the CLI commands."""
from __future__ import annotations

import os
import shutil
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Sequence

import numpy as np

from . import config as config_mod
from . import datasets
from . import io as io_mod
from .baselines import BASELINES, ols_fit, student_t_ml
from .diagnostics import profile_slice, qq_envelope, slice_values
from .errors import DataError, DomainError
from .inference import INTERVAL_METHODS, confidence_intervals, ols_intervals, student_t_intervals
from .models import BaselineFit, ConfidenceInterval, Dataset, PremFit, RegressionData
from .paths import source_label
from .prem import PremConfig, flag_outliers, prem_fit
from .progress import ProgressEvent, stage_percent

METHODS = ("prem", "ls", "rls", "ml_t4", "l1")

StageCallback = Callable[[str], None]
ProgressCallback = Callable[[ProgressEvent], None]


@dataclass
class PipelineCallbacks:
    on_stage_start: StageCallback | None = None
    on_stage_done: StageCallback | None = None
    on_stage_progress: ProgressCallback | None = None
    on_log: Callable[[str], None] | None = None
    on_error: Callable[[str, Exception], None] | None = None


@dataclass
class FitJob:
    source: str | Path
    method: str = "prem"
    out_dir: Path | None = None
    response: str | None = None
    predictors: Sequence[str] | None = None
    intercept: bool = True
    config: PremConfig = field(default_factory=PremConfig)
    seed: int = 0
    n_simulations: int = 99
    threads: int | None = None

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise DomainError(f"unknown method {self.method!r}; expected one of {', '.join(METHODS)}")

    def resolved_config(self, out_dir: Path) -> config_mod.AppConfig:
        """The settings this job ran with, in config-file form."""

        settings = self.config
        fit = config_mod.FitDefaults(
            grid_size=settings.grid_size,
            u_min=settings.u_min,
            n_permutations=settings.n_permutations,
            tol_delta=settings.tol_delta,
            max_iterations=settings.max_iterations,
            seed=self.seed,
            psi0=settings.psi0,
        )
        runtime = config_mod.RuntimeConfig(threads=self.threads, out_dir=str(out_dir.parent))
        return config_mod.AppConfig(fit=fit, runtime=runtime)


@contextmanager
def staged_directory(target: Path) -> Iterator[Path]:
    """Yield a scratch directory whose files are moved into ``target`` only if the block succeeds."""

    target = Path(target)
    target.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{target.name}-", dir=target.parent))
    try:
        yield staging
        target.mkdir(parents=True, exist_ok=True)
        for item in sorted(staging.iterdir()):
            os.replace(item, target / item.name)
    finally:
        shutil.rmtree(staging, ignore_errors=True)


def load_dataset(job: FitJob) -> Dataset:
    if isinstance(job.source, str):
        return datasets.bundled_dataset(job.source)
    if not job.response:
        raise DataError("a CSV source needs --response")
    return io_mod.load_csv(job.source, job.response, job.predictors, job.intercept)


class FitRunner:
    """Execute premreg fits while emitting structured events."""

    def __init__(self, callbacks: PipelineCallbacks | None = None):
        self.callbacks = callbacks or PipelineCallbacks()

    def run(self, job: FitJob) -> List[Path]:
        """Fit one method and write the report plus diagnostic CSVs into job.out_dir."""

        out_dir = Path(job.out_dir or Path("premreg_out") / f"{source_label(job.source)}_{job.method}")
        try:
            dataset = self._stage("Load", lambda: load_dataset(job))
            fit = self._stage("Fit", lambda: self._fit(dataset, job))
            diagnostics = self._stage("Diagnostics", lambda: self._diagnostics(dataset, fit, job))
            return self._stage("Export", lambda: self._export(dataset, fit, diagnostics, job, out_dir))
        except Exception as exc:  # noqa: BLE001
            if self.callbacks.on_error:
                self.callbacks.on_error("fit", exc)
            raise

    def run_ci(self, job: FitJob, level: float, out_path: Path) -> Path:
        """Fit job.method and write its confidence intervals as one CSV."""

        try:
            if job.method not in INTERVAL_METHODS:
                raise DomainError(f"intervals are available for {', '.join(INTERVAL_METHODS)}, not {job.method!r}")
            dataset = self._stage("Load", lambda: load_dataset(job))
            intervals = self._intervals(dataset.payload, job, level)
            return self._stage("Export", lambda: self._write_single(out_path, io_mod.write_intervals, intervals))
        except Exception as exc:  # noqa: BLE001
            if self.callbacks.on_error:
                self.callbacks.on_error("ci", exc)
            raise

    def _intervals(self, data: RegressionData, job: FitJob, level: float) -> List[ConfidenceInterval]:
        if job.method == "ls":
            return self._stage("Diagnostics", lambda: ols_intervals(data, level))
        if job.method == "ml_t4":
            fit = self._stage("Fit", lambda: student_t_ml(data))
            return self._stage(
                "Diagnostics", lambda: student_t_intervals(data, level, fit=fit, max_workers=job.threads)
            )
        fit = self._stage("Fit", lambda: prem_fit(data, job.config, on_progress=self._emit_progress))
        return self._stage(
            "Diagnostics", lambda: confidence_intervals(fit, data, job.config, level, max_workers=job.threads)
        )

    def run_profile(
        self,
        job: FitJob,
        coefficient: int,
        bounds: tuple[float, float, int],
        engine: str,
        out_path: Path,
    ) -> Path:
        """Likelihood slice along one coefficient, other coefficients at their least squares values."""

        try:
            dataset = self._stage("Load", lambda: load_dataset(job))
            data = dataset.payload
            if not 0 <= coefficient < data.p:
                raise DomainError(f"coefficient index {coefficient} outside 0..{data.p - 1}")
            values = slice_values(*bounds)
            base = self._stage("Fit", lambda: ols_fit(data).beta_hat)
            logliks = self._stage(
                "Diagnostics", lambda: profile_slice(data, coefficient, values, base, engine, job.config)
            )
            return self._stage("Export", lambda: self._write_single(out_path, io_mod.write_profile, values, logliks))
        except Exception as exc:  # noqa: BLE001
            if self.callbacks.on_error:
                self.callbacks.on_error("profile", exc)
            raise

    def _fit(self, dataset: Dataset, job: FitJob) -> PremFit | BaselineFit:
        if job.method == "prem":
            return prem_fit(dataset.payload, job.config, on_progress=self._emit_progress)
        return BASELINES[job.method](dataset.payload)

    def _diagnostics(self, dataset: Dataset, fit: PremFit | BaselineFit, job: FitJob) -> Dict[str, Any]:
        residuals = dataset.payload.residuals(fit.beta_hat)
        envelope = None
        if residuals.size >= 3:
            envelope = qq_envelope(residuals, job.n_simulations, np.random.default_rng(job.seed))
        else:
            self._log("fewer than 3 residuals; skipping the Q-Q envelope")
        return {"residuals": residuals, "envelope": envelope}

    def _report(self, dataset: Dataset, fit: PremFit | BaselineFit, job: FitJob) -> Dict[str, Any]:
        data = dataset.payload
        report: Dict[str, Any] = {
            "dataset": {
                "name": dataset.name,
                "source": dataset.source,
                "response": dataset.response_column,
                "n": data.n,
                "p": data.p,
            },
            "seed": job.seed,
            "fit": fit.to_dict(data.column_names),
        }
        if isinstance(fit, PremFit):
            config = job.config
            report["settings"] = {
                "grid_size": config.grid_size,
                "u_min": config.u_min,
                "u_max": fit.psi_hat.grid.u_max,
                "n_permutations": config.n_permutations,
                "tol_delta": config.tol_delta,
                "max_iterations": config.max_iterations,
                "psi0": config.psi0,
            }
            report["outlier_rows"] = [row + 1 for row in flag_outliers(fit)]
        return report

    def _export(
        self, dataset: Dataset, fit: PremFit | BaselineFit, diagnostics: Dict[str, Any], job: FitJob, out_dir: Path
    ) -> List[Path]:
        names: List[str] = []
        with staged_directory(out_dir) as staging:
            io_mod.save_report(self._report(dataset, fit, job), staging / io_mod.REPORT_NAME)
            io_mod.write_residuals(diagnostics["residuals"], staging / io_mod.RESIDUALS_NAME)
            config_mod.save_config(job.resolved_config(out_dir), staging / config_mod.CONFIG_NAME)
            names += [io_mod.REPORT_NAME, io_mod.RESIDUALS_NAME, config_mod.CONFIG_NAME]
            if diagnostics["envelope"] is not None:
                io_mod.write_envelope(diagnostics["envelope"], staging / io_mod.ENVELOPE_NAME)
                names.append(io_mod.ENVELOPE_NAME)
            weights = fit.obs_weights if isinstance(fit, PremFit) else fit.weights
            if weights is not None:
                io_mod.write_weights(weights, staging / io_mod.WEIGHTS_NAME)
                names.append(io_mod.WEIGHTS_NAME)
            if isinstance(fit, PremFit):
                io_mod.write_mixing(fit.psi_hat, staging / io_mod.MIXING_NAME)
                io_mod.write_likpath(fit.loglik_path, staging / io_mod.LIKPATH_NAME)
                names += [io_mod.MIXING_NAME, io_mod.LIKPATH_NAME]
        outputs = [out_dir / name for name in names]
        for path in outputs:
            self._log(f"Exported: {path}")
        return outputs

    def _write_single(self, out_path: Path, writer, *payload) -> Path:
        out_path = Path(out_path)
        with staged_directory(out_path.parent) as staging:
            writer(*payload, staging / out_path.name)
        self._log(f"Exported: {out_path}")
        return out_path

    def _stage(self, name: str, fn):
        if self.callbacks.on_stage_start:
            self.callbacks.on_stage_start(name)
        self._emit_progress(ProgressEvent(stage=name, percent=stage_percent(name, 0), message=f"{name}..."))
        result = fn()
        if self.callbacks.on_stage_done:
            self.callbacks.on_stage_done(name)
        self._emit_progress(ProgressEvent(stage=name, percent=stage_percent(name, 1), message=f"{name} done"))
        return result

    def _emit_progress(self, event: ProgressEvent):
        if self.callbacks.on_stage_progress:
            self.callbacks.on_stage_progress(event)

    def _log(self, line: str):
        if self.callbacks.on_log:
            self.callbacks.on_log(line)
