# ABOUTME: Lengthscale selection by fitting on the first 80% of each series and scoring the held-out tail
# ABOUTME: Ties go to the larger (smoother) lengthscale; failed candidates stay in the report without a score

from __future__ import annotations

from collections.abc import Callable, Sequence

import numpy as np
from pydantic import BaseModel, Field

from odefield.dynamics.odeint import IntegrationError, Trajectory
from odefield.gp.field import GridSpec
from odefield.model.fit import FitConfig, FitError, FittedModel, fit
from odefield.model.params import Dataset
from odefield.model.predict import predict
from odefield.utils.logging import get_logger, with_operation_context

logger = get_logger(__name__)

DEFAULT_LENGTHSCALES = (0.5, 0.75, 1.0, 1.25, 1.5)
TRAIN_FRACTION = 0.8

Candidate = float | Sequence[float]
Fitter = Callable[[Dataset, GridSpec | None, FitConfig], FittedModel]


class SelectionError(FitError):
    """No lengthscale candidate could be fitted."""


class CandidateScore(BaseModel):
    lengthscales: tuple[float, ...]
    rmse: float | None = Field(default=None, description="Validation RMSE, None when failed or not scored")
    error: str | None = None


class SelectionResult(BaseModel):
    best: tuple[float, ...]
    candidates: list[CandidateScore]


def as_lengthscales(candidate: Candidate, dim: int) -> tuple[float, ...]:
    """Scalar candidates apply to every dimension."""
    values = np.atleast_1d(np.asarray(candidate, dtype=float))
    if values.size == 1:
        values = np.full(dim, values[0])
    if values.shape != (dim,) or np.any(values <= 0):
        raise ValueError(f"lengthscale candidate {candidate!r} does not give {dim} positive values")
    return tuple(values.tolist())


def validation_split(data: Dataset, fraction: float = TRAIN_FRACTION) -> tuple[Dataset, list[Trajectory]]:
    """Split each series at t0 + fraction * span into training head and validation tail."""
    heads = []
    tails = []
    for index, series in enumerate(data):
        cut = series.times[0] + fraction * (series.times[-1] - series.times[0])
        head = series.times <= cut
        if head.sum() < 2 or (~head).sum() < 1:
            raise SelectionError(f"series {index} is too short for a {fraction:.0%} validation split")
        heads.append(series.select(head))
        tails.append(series.select(~head))
    return Dataset(tuple(heads)), tails


def validation_rmse(model: FittedModel, tail: Sequence[Trajectory]) -> float:
    """RMSE of predictions from the fitted initial states at the held-out times."""
    squared = []
    for index, series in enumerate(tail):
        predicted = predict(model, series.times, series=index)
        squared.append((predicted.states - series.states).ravel() ** 2)
    return float(np.sqrt(np.mean(np.concatenate(squared))))


def pick_best(scores: list[CandidateScore]) -> tuple[float, ...]:
    """Lowest validation RMSE; among equal scores the larger mean lengthscale wins."""
    scored = [s for s in scores if s.rmse is not None]
    if not scored:
        raise SelectionError(f"all {len(scores)} lengthscale candidates failed")
    best = min(scored, key=lambda s: (s.rmse, -float(np.mean(s.lengthscales))))
    return best.lengthscales


def score_candidate(
    lengthscales: tuple[float, ...],
    head: Dataset,
    tail: Sequence[Trajectory],
    grid: GridSpec | None,
    cfg: FitConfig,
    fitter: Fitter = fit,
) -> CandidateScore:
    candidate_cfg = cfg.model_copy(update={"lengthscales": lengthscales})
    try:
        model = fitter(head, grid, candidate_cfg)
        rmse = validation_rmse(model, tail)
    except (FitError, IntegrationError) as e:
        logger.warning("Lengthscale candidate failed", lengthscales=lengthscales, error=str(e))
        return CandidateScore(lengthscales=lengthscales, error=str(e))
    logger.info("Lengthscale candidate scored", lengthscales=lengthscales, rmse=rmse)
    return CandidateScore(lengthscales=lengthscales, rmse=rmse)


@with_operation_context("select_lengthscale")
def select_lengthscale(
    data: Dataset,
    grid: GridSpec | None = None,
    candidates: Sequence[Candidate] = DEFAULT_LENGTHSCALES,
    cfg: FitConfig | None = None,
    *,
    fitter: Fitter = fit,
) -> SelectionResult:
    """Cross-validated lengthscale choice over ``candidates`` (isotropic scalars or per-dimension vectors).

    ``fitter`` fits one candidate on the training heads; the async service passes its parallel fit here.
    """
    cfg = cfg or FitConfig()
    if not candidates:
        raise ValueError("at least one lengthscale candidate is required")
    options = [as_lengthscales(c, data.dim) for c in candidates]
    if len(options) == 1:
        return SelectionResult(best=options[0], candidates=[CandidateScore(lengthscales=options[0])])

    head, tail = validation_split(data)
    scores = [score_candidate(option, head, tail, grid, cfg, fitter) for option in options]
    return SelectionResult(best=pick_best(scores), candidates=scores)
