# ABOUTME: MAP fitting of the ODE model: inducing-vector initialisation, seeded restarts and the best-restart reducer
# ABOUTME: Restart jobs are picklable pure functions so they can run in worker processes

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field
from scipy.linalg import cho_solve

from odefield.dynamics.odeint import SolverConfig, Trajectory, integrate
from odefield.gp.field import GridSpec, InducingSet, eval_field, make_grid, whiten
from odefield.gp.kernel import kernel_matrix, robust_cholesky
from odefield.model.params import Dataset, ModelParams, ParamLayout, first_states
from odefield.model.posterior import PosteriorObjective, log_posterior, posterior_terms
from odefield.optim.lbfgs import NonFiniteStartError, OptimConfig, maximize
from odefield.utils.logging import get_logger, with_operation_context

logger = get_logger(__name__)

DEFAULT_SEED = 20170614
DEFAULT_SCALES = (0.25, 0.5, 1.0, 2.0, 4.0)


class FitError(RuntimeError):
    """Base class for fitting failures."""


class FitConfig(BaseModel):
    """Everything one fit needs besides the data."""

    model_config = ConfigDict(frozen=True)

    restarts: int = Field(default=100, gt=0, description="Number of perturbed optimisation restarts")
    perturbation_scale: float = Field(default=0.1, ge=0, description="Std of the whitened restart perturbation")
    seed: int = Field(default=DEFAULT_SEED, ge=0)
    grid_size: int = Field(default=5, ge=2, description="Inducing grid points per dimension")
    grid_margin: float = Field(default=0.1, ge=0, description="Grid box widening per side, relative to the data span")
    lengthscale: float = Field(default=1.0, gt=0, description="Isotropic kernel lengthscale")
    lengthscales: tuple[float, ...] | None = Field(default=None, description="Per-dimension override")
    initial_sigma_f: float = Field(default=1.0, gt=0)
    initial_noise: tuple[float, ...] | None = Field(
        default=None, description="Initial noise std per dimension, 10% of the data std when unset"
    )
    scale_candidates: tuple[float, ...] = Field(default=DEFAULT_SCALES, min_length=1)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    optim: OptimConfig = Field(default_factory=OptimConfig)
    workers: int = Field(default=1, gt=0, description="Worker processes for restarts")

    def lengthscale_vector(self, dim: int) -> NDArray[np.float64]:
        if self.lengthscales is not None:
            if len(self.lengthscales) != dim:
                raise ValueError(f"{len(self.lengthscales)} lengthscales given for dimension {dim}")
            return np.array(self.lengthscales, dtype=float)
        return np.full(dim, self.lengthscale)

    def grid_for(self, data: Dataset) -> GridSpec:
        return GridSpec.around(data.stacked_states(), self.grid_size, self.grid_margin)


class RestartSummary(BaseModel):
    index: int
    value: float | None = Field(description="Final log posterior, None when the restart failed")
    initial_value: float | None = None
    status: str
    iterations: int = 0
    evaluations: int = 0
    error: str | None = None


class FitDiagnostics(BaseModel):
    restarts: list[RestartSummary]
    best_index: int | None = None
    failures: int = 0
    init_scale: float | None = None
    terms: dict[str, float] = Field(default_factory=dict)

    @property
    def values(self) -> list[float | None]:
        return [r.value for r in self.restarts]


class FitFailedError(FitError):
    """Every restart failed."""

    def __init__(self, message: str, diagnostics: FitDiagnostics):
        self.diagnostics = diagnostics
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class RestartJob:
    index: int
    seed: int
    start: NDArray[np.float64]
    perturbation_scale: float
    data: Dataset
    locations: NDArray[np.float64]
    layout: ParamLayout
    lengthscales: NDArray[np.float64]
    solver: SolverConfig
    optim: OptimConfig

    def objective(self) -> PosteriorObjective:
        return PosteriorObjective(self.data, self.locations, self.layout, self.lengthscales, self.solver)


@dataclass(frozen=True, eq=False)
class RestartResult:
    index: int
    vector: NDArray[np.float64] | None
    value: float
    initial_value: float
    status: str
    iterations: int = 0
    evaluations: int = 0
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.vector is None or not np.isfinite(self.value)

    def summary(self) -> RestartSummary:
        return RestartSummary(
            index=self.index,
            value=None if self.failed else self.value,
            initial_value=self.initial_value if np.isfinite(self.initial_value) else None,
            status=self.status,
            iterations=self.iterations,
            evaluations=self.evaluations,
            error=self.error,
        )


def restart_start(job: RestartJob) -> NDArray[np.float64]:
    """The perturbed starting vector of a restart; only U~ is perturbed."""
    rng = np.random.default_rng(np.random.SeedSequence([job.seed, job.index]))
    vector = job.start.copy()
    noise = rng.standard_normal(job.layout.u_tilde.stop - job.layout.u_tilde.start)
    vector[job.layout.u_tilde] += job.perturbation_scale * noise
    return vector


def run_restart(job: RestartJob) -> RestartResult:
    """One L-BFGS ascent from a seeded perturbation of the initial parameters."""
    objective = job.objective()
    start = restart_start(job)
    initial_value = log_posterior(objective.params(start), job.data, job.locations, job.solver)
    try:
        result = maximize(objective, start, job.optim)
    except NonFiniteStartError as e:
        logger.debug("Restart could not start", restart=job.index, error=str(e))
        return RestartResult(job.index, None, -np.inf, initial_value, "failed-start", error=str(e))

    # the reported value comes from the plain integration that predictions use
    value = log_posterior(objective.params(result.x), job.data, job.locations, job.solver)
    logger.debug(
        "Restart finished",
        restart=job.index,
        status=str(result.status),
        value=value,
        iterations=result.iterations,
    )
    failed = not np.isfinite(value)
    return RestartResult(
        index=job.index,
        vector=None if failed else result.x,
        value=-np.inf if failed else value,
        initial_value=initial_value,
        status=str(result.status),
        iterations=result.iterations,
        evaluations=result.evaluations,
        error="final parameters diverge" if failed else None,
    )


def select_best(results: list[RestartResult]) -> RestartResult | None:
    """Highest final log posterior, ties to the lowest restart index."""
    best = None
    for result in sorted(results, key=lambda r: r.index):
        if result.failed:
            continue
        if best is None or result.value > best.value:
            best = result
    return best


def initial_noise(data: Dataset, cfg: FitConfig) -> NDArray[np.float64]:
    if cfg.initial_noise is not None:
        noise = np.array(cfg.initial_noise, dtype=float)
        if noise.shape != (data.dim,) or np.any(noise <= 0):
            raise ValueError(f"initial noise needs {data.dim} positive entries")
        return noise
    std = np.std(data.stacked_states(), axis=0)
    return np.where(std > 0, 0.1 * std, 0.1)


def empirical_derivatives(data: Dataset) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Divided differences (y_i - y_{i-1}) / (t_i - t_{i-1}), each paired with the later sample y_i."""
    states = []
    slopes = []
    for series in data:
        states.append(series.states[1:])
        slopes.append(np.diff(series.states, axis=0) / np.diff(series.times)[:, None])
    return np.concatenate(states), np.concatenate(slopes)


def init_inducing(
    data: Dataset,
    locations: ArrayLike,
    params: ModelParams,
    cfg: SolverConfig | None = None,
    scales: tuple[float, ...] = DEFAULT_SCALES,
) -> tuple[NDArray[np.float64], float]:
    """Whitened inducing vectors interpolating scaled empirical derivatives.

    U0 = K(Z,Y) K(Y,Y)^-1 c Ydot with c picked from ``scales`` by log posterior (first wins ties).
    Returns (U~0, c).
    """
    locations = np.asarray(locations, dtype=float)
    kernel = params.kernel
    points, slopes = empirical_derivatives(data)
    chol = robust_cholesky(kernel_matrix(points, points, kernel), scale=kernel.variance, name="K(Y,Y)")
    base = kernel_matrix(locations, points, kernel) @ cho_solve((chol.lower, True), slopes)
    lower = InducingSet.factorize(locations, kernel).lower

    best_value = -np.inf
    best_scale = scales[0]
    best_u_tilde = whiten(scales[0] * base, lower)
    for scale in scales:
        u_tilde = whiten(scale * base, lower)
        value = log_posterior(params.replace(u_tilde=u_tilde), data, locations, cfg)
        logger.debug("Inducing scale candidate", scale=scale, value=value)
        if value > best_value:
            best_value, best_scale, best_u_tilde = value, scale, u_tilde
    return best_u_tilde, best_scale


def initial_params(data: Dataset, locations: ArrayLike, cfg: FitConfig) -> tuple[ModelParams, float]:
    """Initial state: first observations, sigma_f from config, noise from the data spread, U~ from init_inducing."""
    locations = np.asarray(locations, dtype=float)
    params = ModelParams(
        x0=first_states(data),
        u_tilde=np.zeros_like(locations),
        log_sigma_f=float(np.log(cfg.initial_sigma_f)),
        lengthscales=cfg.lengthscale_vector(data.dim),
        log_omega=np.log(initial_noise(data, cfg)),
    )
    u_tilde, scale = init_inducing(data, locations, params, cfg.solver, cfg.scale_candidates)
    return params.replace(u_tilde=u_tilde), scale


@dataclass(frozen=True, eq=False)
class FitPlan:
    """Initial parameters and the restart jobs derived from them."""

    data: Dataset
    grid: GridSpec
    locations: NDArray[np.float64]
    initial: ModelParams
    init_scale: float
    jobs: list[RestartJob]
    config: FitConfig


def plan_fit(data: Dataset, grid: GridSpec | None = None, cfg: FitConfig | None = None) -> FitPlan:
    cfg = cfg or FitConfig()
    grid = grid or cfg.grid_for(data)
    if grid.dim != data.dim:
        raise ValueError(f"grid has dimension {grid.dim}, data {data.dim}")
    locations = make_grid(grid)
    initial, scale = initial_params(data, locations, cfg)
    layout = ParamLayout.of(initial)
    start = layout.flatten(initial)
    jobs = [
        RestartJob(
            index=index,
            seed=cfg.seed,
            start=start,
            perturbation_scale=cfg.perturbation_scale,
            data=data,
            locations=locations,
            layout=layout,
            lengthscales=initial.lengthscales,
            solver=cfg.solver,
            optim=cfg.optim,
        )
        for index in range(cfg.restarts)
    ]
    logger.info(
        "Fit planned",
        series=data.n_series,
        points=data.n_points,
        inducing=locations.shape[0],
        restarts=cfg.restarts,
        init_scale=scale,
    )
    return FitPlan(data, grid, locations, initial, scale, jobs, cfg)


@dataclass(frozen=True, eq=False)
class FittedModel:
    """MAP parameters with the fixed grid, time origins and the solver they were fitted with."""

    params: ModelParams
    locations: NDArray[np.float64]
    time_origins: NDArray[np.float64]
    solver: SolverConfig
    diagnostics: FitDiagnostics | None = None

    @cached_property
    def inducing(self) -> InducingSet:
        return self.params.inducing(self.locations)

    @property
    def dim(self) -> int:
        return self.params.dim

    @property
    def omega(self) -> NDArray[np.float64]:
        return self.params.omega

    def vector_field(self, x: ArrayLike) -> NDArray[np.float64]:
        return eval_field(x, self.inducing)

    def log_posterior(self, data: Dataset) -> float:
        return log_posterior(self.params, data, self.locations, self.solver)

    def fitted_trajectories(self, data: Dataset) -> list[Trajectory]:
        return [
            integrate(self.inducing, x0, series.times, self.solver, start=float(series.times[0]))
            for x0, series in zip(self.params.x0, data, strict=True)
        ]


def finish_fit(plan: FitPlan, results: list[RestartResult]) -> FittedModel:
    """Reduce restart results to the fitted model; raises FitFailedError when none succeeded."""
    best = select_best(results)
    summaries = [r.summary() for r in sorted(results, key=lambda r: r.index)]
    failures = sum(r.failed for r in results)
    diagnostics = FitDiagnostics(restarts=summaries, failures=failures, init_scale=plan.init_scale)
    if best is None:
        logger.error("All restarts failed", restarts=len(results))
        raise FitFailedError(f"all {len(results)} restarts failed", diagnostics)

    params = plan.jobs[0].layout.unflatten(best.vector, plan.initial.lengthscales)
    terms = posterior_terms(params, plan.data, plan.locations, plan.config.solver)
    diagnostics = diagnostics.model_copy(update={"best_index": best.index, "terms": terms.as_dict()})
    logger.info(
        "Fit finished",
        best_restart=best.index,
        value=best.value,
        failures=failures,
        sigma_f=params.sigma_f,
        omega=params.omega.tolist(),
    )
    return FittedModel(
        params=params,
        locations=plan.locations,
        time_origins=plan.data.time_origins,
        solver=plan.config.solver,
        diagnostics=diagnostics,
    )


@with_operation_context("fit")
def fit(
    data: Dataset,
    grid: GridSpec | None = None,
    cfg: FitConfig | None = None,
    *,
    on_restart: Callable[[RestartResult], None] | None = None,
) -> FittedModel:
    """MAP estimate by L-BFGS from ``cfg.restarts`` seeded perturbations, run in order in-process."""
    plan = plan_fit(data, grid, cfg)
    results = []
    for job in plan.jobs:
        result = run_restart(job)
        results.append(result)
        if on_restart is not None:
            on_restart(result)
    return finish_fit(plan, results)
