# ABOUTME: Main CLI application entry point using asyncclick for native async support
# ABOUTME: Commands to simulate benchmarks, fit and query vector-field models, run experiments and search lengthscales

from collections.abc import Callable
from pathlib import Path

import asyncclick as click
import numpy as np
from pydantic import ValidationError
from rich.console import Console

from odefield.bench.experiments import ExperimentConfig, ExperimentError, ExperimentKind, ExperimentOutcome
from odefield.bench.systems import SystemName, add_noise, get_system, lifted_series, sample_times, simulate_benchmark
from odefield.config import RunConfig, get_config, load_run_config
from odefield.core.service import FitService
from odefield.dynamics.odeint import IntegrationError
from odefield.gp.field import GridSpec, field_on_grid
from odefield.gp.kernel import DimensionMismatchError, NonPositiveDefiniteError
from odefield.io.model_store import ModelFormatError, read_model, write_model
from odefield.io.reports import write_report
from odefield.io.series import (
    SeriesFormatError,
    read_series,
    read_series_file,
    write_field,
    write_prediction,
    write_series,
)
from odefield.model.fit import FitError, FitFailedError, FittedModel, RestartResult
from odefield.model.predict import predict
from odefield.model.selection import as_lengthscales
from odefield.utils.logging import (
    LoggingMode,
    configure_logging,
    create_restart_progress,
    get_logging_status,
    with_run_context,
)
from odefield.utils.rich_tables import (
    create_experiment_table,
    create_fit_summary_table,
    create_logging_status_table,
    create_restart_table,
    create_selection_table,
    print_rich_table,
)

console = Console()

DOMAIN_ERRORS = (
    SeriesFormatError,
    ModelFormatError,
    FitError,
    IntegrationError,
    ExperimentError,
    NonPositiveDefiniteError,
    DimensionMismatchError,
    ValidationError,
    ValueError,
    IndexError,
    OSError,
)


def _run_config(ctx, **overrides) -> RunConfig:
    try:
        return load_run_config(ctx.obj.get("config_path"), **overrides)
    except (FileNotFoundError, ValidationError) as e:
        raise click.UsageError(str(e)) from e


def _artifact_path(cfg: RunConfig, explicit: str | None, default_name: str) -> Path:
    return Path(explicit) if explicit else cfg.output_dir / default_name


def _parse_floats(text: str, what: str) -> tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise click.UsageError(f"{what} must be comma-separated numbers, got {text!r}") from None
    if not values:
        raise click.UsageError(f"{what} is empty")
    return values


def parse_times_spec(spec: str) -> np.ndarray:
    """``start:step:end`` with the end included when it lies on the step grid."""
    parts = spec.split(":")
    if not spec.strip() or len(parts) != 3:
        raise click.UsageError(f"times must look like start:step:end, got {spec!r}")
    try:
        start, step, end = (float(p) for p in parts)
    except ValueError:
        raise click.UsageError(f"times must look like start:step:end, got {spec!r}") from None
    if step <= 0 or end < start:
        raise click.UsageError("times need a positive step and end >= start")
    count = int(np.floor((end - start) / step + 1e-9)) + 1
    return start + step * np.arange(count)


def read_times_file(path: str) -> np.ndarray:
    """One time per line; an optional ``t`` header line is skipped."""
    tokens = Path(path).read_text(encoding="utf-8").split()
    if tokens and tokens[0].strip().lower() == "t":
        tokens = tokens[1:]
    if not tokens:
        raise click.UsageError(f"times file {path} is empty")
    try:
        return np.array([float(t) for t in tokens])
    except ValueError as e:
        raise click.UsageError(f"times file {path}: {e}") from e


def _restart_callback(json_output: bool, total: int):
    """Progress tracker (or None) and the per-restart callback feeding it."""
    if json_output:
        return None, None
    tracker = create_restart_progress(console, total)

    def on_restart(result: RestartResult) -> None:
        tracker.advance()

    return tracker, on_restart


async def _with_progress(json_output: bool, total: int, run: Callable[[FitService], object], workers: int):
    tracker, on_restart = _restart_callback(json_output, total)
    service = FitService(workers=workers, on_restart=on_restart)
    if tracker is None:
        return await run(service)
    with tracker:
        return await run(service)


def _fit_report(model: FittedModel, log_posterior: float) -> dict:
    params = model.params
    return {
        "log_posterior": log_posterior,
        "sigma_f": params.sigma_f,
        "lengthscales": params.lengthscales.tolist(),
        "omega": params.omega.tolist(),
        "n_inducing": params.n_inducing,
        "n_series": params.n_series,
        "diagnostics": model.diagnostics,
    }


@click.command()
@click.option("--system", "system_name", type=click.Choice([s.value for s in SystemName]), default="vdp")
@click.option("--n", "n_points", type=int, default=25, show_default=True, help="Number of sample times")
@click.option("--cycles", type=float, help="Span in cycles of the orbit (system default when omitted)")
@click.option("--noise", "sigma_n", type=float, default=0.0, show_default=True, help="Gaussian noise std")
@click.option("--seed", type=int, help="Noise seed (config seed when omitted)")
@click.option("--x0", help="Initial state as comma-separated values")
@click.option("--lift-dim", type=int, help="Lift the orbit to a 3-D latent and map it to this many dimensions")
@click.option("--out", help="Noisy series CSV")
@click.option("--clean-out", help="Clean series CSV")
@click.pass_context
async def simulate(
    ctx,
    system_name: str,
    n_points: int,
    cycles: float | None,
    sigma_n: float,
    seed: int | None,
    x0: str | None,
    lift_dim: int | None,
    out: str | None,
    clean_out: str | None,
):
    """
    🌀 Simulate a benchmark system and write clean and noisy CSVs.
    """
    cfg = _run_config(ctx, seed=seed)
    with with_run_context("simulate", system=system_name, seed=cfg.seed) as logger:
        try:
            system = get_system(system_name)
            start = _parse_floats(x0, "--x0") if x0 else None
            times = sample_times(system, n_points, cycles)
            if lift_dim is not None:
                lifted = lifted_series(system, times, lift_dim, sigma_n, cfg.seed, start, cfg.solver_config())
                clean, noisy = lifted.clean, lifted.noisy
            else:
                clean = simulate_benchmark(system, start, times, cfg.solver_config())
                noisy = add_noise(clean, sigma_n, cfg.seed)
            noisy_path = write_series(_artifact_path(cfg, out, f"{system_name}.csv"), noisy)
            clean_path = write_series(_artifact_path(cfg, clean_out, f"{system_name}_clean.csv"), clean)
        except DOMAIN_ERRORS as e:
            logger.error("Simulation failed", error=str(e))
            raise click.ClickException(str(e)) from e

        logger.info("Simulation written", noisy=str(noisy_path), clean=str(clean_path), points=clean.size)
        if not ctx.obj["json_output"]:
            console.print(f"✅ Wrote [bold green]{noisy_path}[/bold green] and [green]{clean_path}[/green]")


@click.command()
@click.argument("data", type=click.Path(dir_okay=False))
@click.option("--model-out", help="Model file (JSON)")
@click.option("--report-out", help="Fit report file")
@click.option("--field-out", help="Write the learned field on a regular grid as CSV")
@click.option("--field-size", type=int, default=8, show_default=True, help="Field grid points per dimension")
@click.option("--restarts", type=int, help="Optimisation restarts")
@click.option("--lengthscale", type=float, help="Isotropic kernel lengthscale")
@click.option("--seed", type=int, help="Restart seed")
@click.option("--workers", type=int, help="Worker processes for restarts")
@click.pass_context
async def fit(
    ctx,
    data: str,
    model_out: str | None,
    report_out: str | None,
    field_out: str | None,
    field_size: int,
    restarts: int | None,
    lengthscale: float | None,
    seed: int | None,
    workers: int | None,
):
    """
    📈 Fit a vector-field model to a series CSV.
    """
    cfg = _run_config(ctx, restarts=restarts, lengthscale=lengthscale, seed=seed, workers=workers)
    json_output = ctx.obj["json_output"]
    stem = Path(data).stem
    model_path = _artifact_path(cfg, model_out, f"{stem}.model.json")
    report_path = _artifact_path(cfg, report_out, f"{stem}.fit.txt")

    with with_run_context("fit", data=data, seed=cfg.seed) as logger:
        try:
            dataset = read_series(data)
            fit_cfg = cfg.fit_config(dataset.dim)
            model = await _with_progress(
                json_output, fit_cfg.restarts, lambda service: service.fit(dataset, None, fit_cfg), cfg.workers
            )
            value = model.log_posterior(dataset)
            write_model(model_path, model)
            write_report(report_path, _fit_report(model, value))
            if field_out:
                spec = GridSpec.around(dataset.stacked_states(), field_size, cfg.grid_margin)
                points, values = field_on_grid(model.vector_field, spec)
                write_field(field_out, points, values)
        except FitFailedError as e:
            write_report(report_path, {"error": str(e), "diagnostics": e.diagnostics})
            logger.error("Fit failed", error=str(e), report=str(report_path))
            raise click.ClickException(f"{e} (diagnostics in {report_path})") from e
        except DOMAIN_ERRORS as e:
            logger.error("Fit failed", error=str(e))
            raise click.ClickException(str(e)) from e

        logger.info("Model written", model=str(model_path), report=str(report_path), log_posterior=value)
        if not json_output:
            print_rich_table(console, create_fit_summary_table(model, value))
            if model.diagnostics is not None:
                print_rich_table(console, create_restart_table(model.diagnostics))
            console.print(f"💾 Model saved to [bold green]{model_path}[/bold green]")


@click.command(name="predict")
@click.argument("model_file", type=click.Path(dir_okay=False))
@click.option("--times", "times_spec", help="Prediction times as start:step:end")
@click.option("--times-file", type=click.Path(dir_okay=False), help="File with one prediction time per line")
@click.option("--series", "series_index", type=int, default=0, show_default=True, help="Series whose x0 to use")
@click.option("--from-state", help="Start from this state instead of the fitted x0")
@click.option("--out", help="Prediction CSV with +-omega band columns")
@click.pass_context
async def predict_command(
    ctx,
    model_file: str,
    times_spec: str | None,
    times_file: str | None,
    series_index: int,
    from_state: str | None,
    out: str | None,
):
    """
    🔮 Integrate a fitted model at the requested times.

    Times are given either as start:step:end (end included when on the grid)
    or as a file with one time per line.
    """
    if (times_spec is None) == (times_file is None):
        raise click.UsageError("give exactly one of --times or --times-file")
    times = parse_times_spec(times_spec) if times_spec is not None else read_times_file(times_file)
    cfg = _run_config(ctx)
    out_path = _artifact_path(cfg, out, f"{Path(model_file).stem}.prediction.csv")

    with with_run_context("predict", model=model_file, points=len(times)) as logger:
        try:
            model = read_model(model_file)
            state = _parse_floats(from_state, "--from-state") if from_state else None
            trajectory = predict(model, times, state, series=series_index)
            write_prediction(out_path, trajectory)
        except DOMAIN_ERRORS as e:
            logger.error("Prediction failed", error=str(e))
            raise click.ClickException(str(e)) from e

        logger.info("Prediction written", out=str(out_path))
        if not ctx.obj["json_output"]:
            console.print(f"🔮 Wrote [bold green]{out_path}[/bold green] ({trajectory.size} points)")


def _write_experiment(outcome: ExperimentOutcome, out_dir: Path, stem: str, kind: ExperimentKind) -> dict[str, str]:
    artifacts = {
        "prediction": write_series(out_dir / f"{stem}.{kind.value}.prediction.csv", outcome.prediction),
        "latent_prediction": write_prediction(out_dir / f"{stem}.{kind.value}.latent.csv", outcome.latent_prediction),
        "model": write_model(out_dir / f"{stem}.{kind.value}.model.json", outcome.model),
    }
    return {name: str(path) for name, path in artifacts.items()}


@click.command()
@click.argument("data", type=click.Path(dir_okay=False))
@click.option("--kind", type=click.Choice([k.value for k in ExperimentKind]), default="forecast", show_default=True)
@click.option("--truth", type=click.Path(dir_okay=False), help="Noise-free series to score against")
@click.option("--pca-dim", type=int, help="Fit in a PCA latent space of this dimension (0 disables)")
@click.option("--downsample", type=int, help="Keep every k-th frame")
@click.option("--restarts", type=int, help="Optimisation restarts")
@click.option("--seed", type=int, help="Restart seed")
@click.option("--workers", type=int, help="Worker processes for restarts")
@click.option("--out-dir", type=click.Path(file_okay=False), help="Directory for the report and CSVs")
@click.pass_context
async def experiment(
    ctx,
    data: str,
    kind: str,
    truth: str | None,
    pca_dim: int | None,
    downsample: int | None,
    restarts: int | None,
    seed: int | None,
    workers: int | None,
    out_dir: str | None,
):
    """
    🧪 Run a forecasting or imputation experiment on one series.
    """
    cfg = _run_config(
        ctx, pca_dim=pca_dim, downsample=downsample, restarts=restarts, seed=seed, workers=workers, output_dir=out_dir
    )
    json_output = ctx.obj["json_output"]
    experiment_kind = ExperimentKind(kind)
    stem = Path(data).stem

    with with_run_context("experiment", data=data, kind=kind, seed=cfg.seed) as logger:
        try:
            series_file = read_series_file(data)
            if series_file.dataset.n_series != 1:
                raise ExperimentError(f"experiments take one series, {data} holds {series_file.dataset.n_series}")
            series = series_file.dataset.series[0]
            reference = read_series(truth).series[0] if truth else None
            exp_cfg: ExperimentConfig = cfg.experiment_config(cfg.pca_dim or series.dim)
            outcome = await _with_progress(
                json_output,
                exp_cfg.fit.restarts,
                lambda service: service.run_experiment(experiment_kind, series, exp_cfg, reference),
                cfg.workers,
            )
            cfg.output_dir.mkdir(parents=True, exist_ok=True)
            artifacts = _write_experiment(outcome, cfg.output_dir, stem, experiment_kind)
            report_path = cfg.output_dir / f"{stem}.{kind}.report.txt"
            artifacts["report"] = str(report_path)
            report = outcome.report.model_copy(update={"artifacts": artifacts})
            write_report(report_path, report)
        except DOMAIN_ERRORS as e:
            logger.error("Experiment failed", error=str(e))
            raise click.ClickException(str(e)) from e

        logger.info("Experiment finished", rmse=report.rmse, report=str(report_path))
        if not json_output:
            print_rich_table(console, create_experiment_table(report))


@click.command()
@click.argument("data", type=click.Path(dir_okay=False))
@click.option("--lengthscales", "lengthscale_list", help="Comma-separated candidates (config grid when omitted)")
@click.option("--restarts", type=int, help="Optimisation restarts per candidate")
@click.option("--seed", type=int, help="Restart seed")
@click.option("--workers", type=int, help="Worker processes for restarts")
@click.option("--report-out", help="Selection report file")
@click.pass_context
async def gridsearch(
    ctx,
    data: str,
    lengthscale_list: str | None,
    restarts: int | None,
    seed: int | None,
    workers: int | None,
    report_out: str | None,
):
    """
    🔍 Pick the lengthscale with the lowest validation RMSE on the last 20% of each series.
    """
    candidates = _parse_floats(lengthscale_list, "--lengthscales") if lengthscale_list else None
    cfg = _run_config(ctx, restarts=restarts, seed=seed, workers=workers)
    candidates = candidates or tuple(cfg.lengthscale_grid)
    json_output = ctx.obj["json_output"]
    report_path = _artifact_path(cfg, report_out, f"{Path(data).stem}.gridsearch.txt")

    with with_run_context("gridsearch", data=data, candidates=len(candidates)) as logger:
        try:
            dataset = read_series(data)
            fit_cfg = cfg.fit_config(dataset.dim)
            options = [as_lengthscales(c, dataset.dim) for c in candidates]
            total = fit_cfg.restarts * len(options) if len(options) > 1 else 0
            result = await _with_progress(
                json_output or total == 0,
                total,
                lambda service: service.select_lengthscale(dataset, None, options, fit_cfg),
                cfg.workers,
            )
            write_report(report_path, result)
        except DOMAIN_ERRORS as e:
            logger.error("Lengthscale search failed", error=str(e))
            raise click.ClickException(str(e)) from e

        logger.info("Lengthscale selected", best=list(result.best), report=str(report_path))
        if not json_output:
            print_rich_table(console, create_selection_table(result))


def _initialize_logging(json_output: bool, log_level: str | None = None, log_file: str | None = None) -> None:
    """Initialize logging configuration."""
    try:
        config = get_config()
        mode = LoggingMode.PRODUCTION if json_output else (config.log_mode or LoggingMode.INTERACTIVE)

        # Use config defaults when CLI parameters are not provided
        final_log_level = log_level or config.log_level
        final_log_file = log_file or (str(config.log_file) if config.log_file else None)

        configure_logging(mode=mode, log_level=final_log_level, log_file=final_log_file)
    except (FileNotFoundError, PermissionError, OSError, ValidationError):
        # Handle race conditions during parallel test execution
        mode = LoggingMode.PRODUCTION if json_output else LoggingMode.INTERACTIVE
        configure_logging(mode=mode, log_level=log_level or "INFO", log_file=log_file)


@click.command(name="logging-status")
def logging_status():
    """
    📊 Show current logging configuration and status.
    """
    status = get_logging_status()
    logging_table = create_logging_status_table(status)
    print_rich_table(console, logging_table)


@click.group(invoke_without_command=True)
@click.option("--json", is_flag=True, help="Output structured JSON logs instead of rich interface")
@click.option("--log-level", help="Logging level (DEBUG, INFO, WARNING, ERROR)")
@click.option("--log-file", help="Custom log file path")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="Flat key=value run config file")
@click.pass_context
def app(ctx, json: bool, log_level: str | None, log_file: str | None, config_path: str | None):
    """
    🧭 odefield - learn unknown ODE dynamics from noisy time series

    Fits a Gaussian-process vector field on inducing points by MAP estimation
    with sensitivity-equation gradients, then forecasts and imputes.
    """
    # Store global options in context for commands to access
    ctx.ensure_object(dict)
    ctx.obj["json_output"] = json
    ctx.obj["config_path"] = config_path

    _initialize_logging(json, log_level, log_file)

    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())


app.add_command(simulate)
app.add_command(fit)
app.add_command(predict_command)
app.add_command(experiment)
app.add_command(gridsearch)
app.add_command(logging_status)


if __name__ == "__main__":
    app()
