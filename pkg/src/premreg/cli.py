"""Typer CLI for premreg."""
from __future__ import annotations

from dataclasses import replace
from pathlib import Path
from typing import Callable, List, Optional, TypeVar

import typer
from rich.console import Console
from rich.progress import BarColumn, Progress, TaskProgressColumn, TextColumn
from rich.table import Table

from . import __version__, config, datasets
from .errors import DataError, DomainError, NumericalError
from .models import MseTable
from .paths import coerce_out_dir, default_out_dir, resolve_source, source_label
from .pipeline import METHODS, FitJob, FitRunner, PipelineCallbacks, staged_directory
from .simulation import parse_scenario_file, print_mse_table, run_scenario
from . import io as io_mod

EXIT_DATA = 3
EXIT_NUMERICAL = 4

app = typer.Typer(
    add_completion=False,
    help=(
        "premreg: robust linear regression with scale-mixture errors fitted by PR-EM. "
        f"Set {config.THREADS_ENV} to override the default worker thread count."
    ),
)
console = Console()
err_console = Console(stderr=True)

T = TypeVar("T")


def _load_defaults() -> config.AppConfig:
    try:
        return config.load_config()
    except DataError as exc:
        err_console.print(f"[yellow]Ignoring config file:[/yellow] {exc}")
        return config.AppConfig()


DEFAULTS = _load_defaults()
FIT = DEFAULTS.fit

DATA_HELP = "Bundled dataset name (phones, hbk) or path to a CSV file"
SEED_HELP = "Seed for permutations and simulated envelopes"
THREADS_HELP = f"Worker threads (default: ${config.THREADS_ENV} or the config file)"


@app.callback()
def main(ctx: typer.Context):
    """premreg CLI entrypoint."""
    ctx.obj = {}


def _guarded(action: Callable[[], T]) -> T:
    """Map library errors onto exit codes: usage 2, data or file 3, numerical 4."""

    try:
        return action()
    except NumericalError as exc:
        err_console.print(f"[red]Numerical failure:[/red] {exc}")
        raise typer.Exit(code=EXIT_NUMERICAL) from exc
    except DataError as exc:
        err_console.print(f"[red]Data error:[/red] {exc}")
        raise typer.Exit(code=EXIT_DATA) from exc
    except OSError as exc:
        err_console.print(f"[red]File error:[/red] {exc}")
        raise typer.Exit(code=EXIT_DATA) from exc
    except DomainError as exc:
        raise typer.BadParameter(str(exc)) from exc


def _progress_runner(progress: Progress, description: str) -> FitRunner:
    task = progress.add_task(description, total=100)
    return FitRunner(
        PipelineCallbacks(
            on_stage_progress=lambda event: progress.update(task, completed=event.percent, description=event.message),
            on_log=lambda line: progress.console.log(line),
        )
    )


def _progress() -> Progress:
    return Progress(
        TextColumn("[bold blue]{task.description}"),
        BarColumn(),
        TaskProgressColumn(),
        console=err_console,
        transient=True,
    )


def _split(raw: Optional[str]) -> Optional[List[str]]:
    if raw is None:
        return None
    return [item.strip() for item in raw.split(",") if item.strip()]


def _job(
    data: str,
    method: str,
    seed: int,
    response: Optional[str],
    predictors: Optional[str],
    intercept: bool,
    grid_size: int,
    n_permutations: int,
    tol_delta: float,
    max_iterations: int,
    u_max: Optional[float],
    psi0: str,
    threads: Optional[int],
    out_dir: Optional[Path] = None,
    envelope_sims: int = 99,
) -> FitJob:
    prem_config = FIT.prem_config(
        seed=seed,
        grid_size=grid_size,
        n_permutations=n_permutations,
        tol_delta=tol_delta,
        max_iterations=max_iterations,
        u_max=u_max,
        psi0=psi0,
    )
    return FitJob(
        source=resolve_source(data),
        method=method,
        out_dir=out_dir,
        response=response,
        predictors=_split(predictors),
        intercept=intercept,
        config=prem_config,
        seed=seed,
        n_simulations=envelope_sims,
        threads=threads if threads is not None else DEFAULTS.threads(),
    )


@app.command()
def fit(
    data: str = typer.Option(..., "--data", help=DATA_HELP),
    method: str = typer.Option("prem", help=f"Estimator: {'|'.join(METHODS)}"),
    seed: int = typer.Option(FIT.seed, help=SEED_HELP),
    response: Optional[str] = typer.Option(None, help="Response column (CSV sources)"),
    predictors: Optional[str] = typer.Option(None, help="Comma-separated predictor columns; default: all others"),
    intercept: bool = typer.Option(True, help="Add an intercept column (CSV sources)"),
    out: Optional[Path] = typer.Option(None, help="Output directory; defaults to <out_dir>/<data>_<method>"),
    grid_size: int = typer.Option(FIT.grid_size, help="Scale grid points"),
    n_permutations: int = typer.Option(FIT.n_permutations, help="Fixed permutations averaged by PR"),
    tol_delta: float = typer.Option(FIT.tol_delta, help="Stop when the L1 change in beta falls below this"),
    max_iterations: int = typer.Option(FIT.max_iterations, help="PR-EM iteration cap"),
    u_max: Optional[float] = typer.Option(None, help="Upper scale bound; default max(50, 3*sigma_LS)"),
    psi0: str = typer.Option(FIT.psi0, help="Initial mixing density: uniform|gamma"),
    envelope_sims: int = typer.Option(99, help="Simulated sets for the residual Q-Q envelope"),
    threads: Optional[int] = typer.Option(None, help=THREADS_HELP),
):
    """Fit a regression and write report.json plus diagnostic CSVs."""

    def action() -> List[Path]:
        job = _job(
            data, method.lower(), seed, response, predictors, intercept, grid_size, n_permutations,
            tol_delta, max_iterations, u_max, psi0, threads, envelope_sims=envelope_sims,
        )
        job.out_dir = coerce_out_dir(out) if out else default_out_dir(DEFAULTS.runtime.out_dir, job.source, job.method)
        with _progress() as progress:
            return _progress_runner(progress, f"Fitting {source_label(job.source)}").run(job)

    outputs = _guarded(action)
    for path in outputs:
        console.print(f"Wrote [bold]{path}[/bold]")


@app.command()
def ci(
    data: str = typer.Option(..., "--data", help=DATA_HELP),
    method: str = typer.Option("prem", help="Interval method: prem (PR curvature) | ls (t-intervals) | ml_t4 (Wald)"),
    level: float = typer.Option(FIT.level, help="Confidence level in (0, 1)"),
    seed: int = typer.Option(FIT.seed, help=SEED_HELP),
    response: Optional[str] = typer.Option(None, help="Response column (CSV sources)"),
    predictors: Optional[str] = typer.Option(None, help="Comma-separated predictor columns; default: all others"),
    intercept: bool = typer.Option(True, help="Add an intercept column (CSV sources)"),
    out: Optional[Path] = typer.Option(None, help="Output CSV; defaults to <out_dir>/<data>_<method>_ci.csv"),
    grid_size: int = typer.Option(FIT.grid_size, help="Scale grid points"),
    n_permutations: int = typer.Option(FIT.n_permutations, help="Fixed permutations averaged by PR"),
    tol_delta: float = typer.Option(FIT.tol_delta, help="Stop when the L1 change in beta falls below this"),
    max_iterations: int = typer.Option(FIT.max_iterations, help="PR-EM iteration cap"),
    u_max: Optional[float] = typer.Option(None, help="Upper scale bound; default max(50, 3*sigma_LS)"),
    psi0: str = typer.Option(FIT.psi0, help="Initial mixing density: uniform|gamma"),
    threads: Optional[int] = typer.Option(None, help=THREADS_HELP),
):
    """Confidence intervals: PR-EM curvature by default, or the LS and t_4 ML comparators."""

    def action() -> Path:
        job = _job(
            data, method.lower(), seed, response, predictors, intercept, grid_size, n_permutations,
            tol_delta, max_iterations, u_max, psi0, threads,
        )
        target = out or Path(DEFAULTS.runtime.out_dir) / f"{source_label(job.source)}_{job.method}_ci.csv"
        with _progress() as progress:
            return _progress_runner(progress, "Confidence intervals").run_ci(job, level, target)

    console.print(f"Wrote [bold]{_guarded(action)}[/bold]")


@app.command()
def profile(
    data: str = typer.Option(..., "--data", help=DATA_HELP),
    coefficient: int = typer.Option(0, help="0-based index of the coefficient to vary"),
    lo: float = typer.Option(..., help="Lower end of the slice"),
    hi: float = typer.Option(..., help="Upper end of the slice"),
    count: int = typer.Option(101, help="Points along the slice"),
    engine: str = typer.Option("pr", help="Objective: pr (PR marginal) | npmle (grid NPMLE profile)"),
    seed: int = typer.Option(FIT.seed, help=SEED_HELP),
    response: Optional[str] = typer.Option(None, help="Response column (CSV sources)"),
    predictors: Optional[str] = typer.Option(None, help="Comma-separated predictor columns; default: all others"),
    intercept: bool = typer.Option(True, help="Add an intercept column (CSV sources)"),
    out: Optional[Path] = typer.Option(None, help="Output CSV; defaults to <out_dir>/<data>_profile_<engine>.csv"),
    grid_size: int = typer.Option(FIT.grid_size, help="Scale grid points"),
    n_permutations: int = typer.Option(FIT.n_permutations, help="Fixed permutations averaged by PR"),
    u_max: Optional[float] = typer.Option(None, help="Upper scale bound; default max(50, 3*sigma_LS)"),
):
    """Log-likelihood slice along one coefficient, others held at least squares values."""

    def action() -> Path:
        job = _job(
            data, "prem", seed, response, predictors, intercept, grid_size, n_permutations,
            FIT.tol_delta, FIT.max_iterations, u_max, FIT.psi0, None,
        )
        target = out or Path(DEFAULTS.runtime.out_dir) / f"{source_label(job.source)}_profile_{engine}.csv"
        with _progress() as progress:
            return _progress_runner(progress, "Profiling").run_profile(
                job, coefficient, (lo, hi, count), engine.lower(), target
            )

    console.print(f"Wrote [bold]{_guarded(action)}[/bold]")


@app.command()
def simulate(
    scenario: Path = typer.Argument(..., help="Scenario file of 'key = value' lines"),
    out: Optional[Path] = typer.Option(None, help="Output CSV; defaults to <out_dir>/mse.csv"),
    seed: Optional[int] = typer.Option(None, help="Override the scenario seed"),
    replications: Optional[int] = typer.Option(None, help="Override the scenario replication count"),
    n_permutations: int = typer.Option(FIT.n_permutations, help="Fixed permutations averaged by PR"),
    threads: Optional[int] = typer.Option(None, help=THREADS_HELP),
):
    """Empirical MSE of each estimator under the scenario's error laws."""

    def action() -> tuple[MseTable, Path]:
        if not scenario.exists():
            raise DataError(f"scenario file not found: {scenario}")
        prem_config = FIT.prem_config(n_permutations=n_permutations)
        specs = parse_scenario_file(scenario, prem_config)
        overrides = {key: value for key, value in (("seed", seed), ("replications", replications)) if value is not None}
        specs = [replace(spec, **overrides) for spec in specs]
        workers = threads if threads is not None else DEFAULTS.threads()
        table = MseTable()
        with _progress() as progress:
            task = progress.add_task("Simulating", total=100)

            def on_progress(event) -> None:
                progress.update(task, completed=event.percent, description=event.message)

            for spec in specs:
                table.extend(run_scenario(spec, max_workers=workers, on_progress=on_progress))
        target = out or Path(DEFAULTS.runtime.out_dir) / "mse.csv"
        with staged_directory(target.parent) as staging:
            io_mod.write_mse_table(table, staging / target.name)
        return table, target

    table, target = _guarded(action)
    print_mse_table(table, console)
    console.print(f"Wrote [bold]{target}[/bold]")


@app.command(name="datasets")
def datasets_cmd():
    """List the bundled case-study datasets."""

    view = Table(title="Bundled datasets")
    for column in ("name", "n", "p", "response", "annotations", "source"):
        view.add_column(column)
    for name in datasets.available():
        dataset = _guarded(lambda: datasets.bundled_dataset(name))
        tags = sorted({note.reason for note in dataset.outlier_annotations})
        summary = "; ".join(
            f"{reason}: rows {', '.join(str(r + 1) for r in dataset.rows_tagged(reason))}" for reason in tags
        )
        view.add_row(
            name, str(dataset.payload.n), str(dataset.payload.p), dataset.response_column, summary, dataset.source
        )
    console.print(view)


@app.command()
def version():
    """Print the premreg version."""

    console.print(__version__)


if __name__ == "__main__":  # pragma: no cover
    app()


# Entry point for console_scripts
main = app
