# ABOUTME: Async orchestration of fits, lengthscale searches and experiments on top of the pure model code
# ABOUTME: Restart jobs go to worker processes through anyio, bounded by a capacity limiter

from __future__ import annotations

from collections.abc import Callable, Sequence
from functools import partial

import anyio
import anyio.from_thread
import anyio.to_process
import anyio.to_thread

from odefield.bench.experiments import PREPARERS, ExperimentConfig, ExperimentKind, ExperimentOutcome, finish_experiment
from odefield.dynamics.odeint import Trajectory
from odefield.gp.field import GridSpec
from odefield.model.fit import (
    FitConfig,
    FittedModel,
    RestartJob,
    RestartResult,
    finish_fit,
    plan_fit,
    run_restart,
)
from odefield.model.params import Dataset
from odefield.model.selection import DEFAULT_LENGTHSCALES, Candidate, SelectionResult, select_lengthscale
from odefield.utils.logging import get_logger, with_async_operation_context


def run_restart_in_worker(job: RestartJob) -> RestartResult:
    """Worker-process entry point; the worker has no log sinks of its own."""
    from loguru import logger

    logger.remove()
    return run_restart(job)


class FitService:
    """Runs the restarts of a fit in order in-process, or across ``workers`` processes.

    Restart seeds depend only on (seed, restart index), so results do not depend on the
    number of workers.
    """

    def __init__(self, workers: int = 1, on_restart: Callable[[RestartResult], None] | None = None):
        if workers < 1:
            raise ValueError("workers must be positive")
        self.workers = workers
        self.on_restart = on_restart
        self.limiter = anyio.CapacityLimiter(workers)
        self.logger = get_logger(__name__)

    def _report(self, result: RestartResult) -> None:
        if self.on_restart is not None:
            self.on_restart(result)

    async def run_jobs(self, jobs: Sequence[RestartJob]) -> list[RestartResult]:
        if self.workers == 1:
            results = []
            for job in jobs:
                result = await anyio.to_thread.run_sync(run_restart, job, limiter=self.limiter)
                self._report(result)
                results.append(result)
            return results

        results: list[RestartResult | None] = [None] * len(jobs)

        async def run(position: int, job: RestartJob) -> None:
            result = await anyio.to_process.run_sync(run_restart_in_worker, job, limiter=self.limiter)
            self._report(result)
            results[position] = result

        async with anyio.create_task_group() as tg:
            for position, job in enumerate(jobs):
                tg.start_soon(run, position, job)
        return [r for r in results if r is not None]

    @with_async_operation_context("fit")
    async def fit(self, data: Dataset, grid: GridSpec | None = None, cfg: FitConfig | None = None) -> FittedModel:
        plan = await anyio.to_thread.run_sync(plan_fit, data, grid, cfg)
        self.logger.info("Running restarts", restarts=len(plan.jobs), workers=self.workers)
        results = await self.run_jobs(plan.jobs)
        return finish_fit(plan, results)

    async def select_lengthscale(
        self,
        data: Dataset,
        grid: GridSpec | None = None,
        candidates: Sequence[Candidate] = DEFAULT_LENGTHSCALES,
        cfg: FitConfig | None = None,
    ) -> SelectionResult:
        """The synchronous search run in a worker thread, each candidate fitted with this service's restarts."""

        def fit_candidate(head: Dataset, head_grid: GridSpec | None, candidate_cfg: FitConfig) -> FittedModel:
            return anyio.from_thread.run(self.fit, head, head_grid, candidate_cfg)

        search = partial(select_lengthscale, data, grid, candidates, cfg, fitter=fit_candidate)
        return await anyio.to_thread.run_sync(search)

    async def run_experiment(
        self,
        kind: ExperimentKind,
        series: Trajectory,
        cfg: ExperimentConfig | None = None,
        truth: Trajectory | None = None,
    ) -> ExperimentOutcome:
        cfg = cfg or ExperimentConfig()
        split = PREPARERS[kind](series, cfg, truth)
        model = await self.fit(split.train, None, cfg.fit)
        return finish_experiment(split, model)

    async def run_experiments(
        self, kind: ExperimentKind, series: Sequence[Trajectory], cfg: ExperimentConfig | None = None
    ) -> list[ExperimentOutcome]:
        """One experiment per series, run concurrently; outcomes keep the input order."""
        outcomes: list[ExperimentOutcome | None] = [None] * len(series)

        async def run(position: int, trajectory: Trajectory) -> None:
            outcomes[position] = await self.run_experiment(kind, trajectory, cfg)

        async with anyio.create_task_group() as tg:
            for position, trajectory in enumerate(series):
                tg.start_soon(run, position, trajectory)
        return [o for o in outcomes if o is not None]
