# ABOUTME: Forecasting and imputation experiment protocols with optional downsampling and PCA
# ABOUTME: Splits a series, fits on the training frames, predicts and scores RMSE in the original space

from __future__ import annotations

from dataclasses import dataclass
from enum import StrEnum

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field

from odefield.bench.metrics import rmse, rmse_per_dimension
from odefield.bench.pca import PcaProjection, pca_fit
from odefield.dynamics.odeint import Trajectory
from odefield.model.fit import FitConfig, FitDiagnostics, FittedModel, fit
from odefield.model.params import Dataset
from odefield.model.predict import predict
from odefield.utils.logging import get_logger, with_operation_context

logger = get_logger(__name__)


class ExperimentError(RuntimeError):
    """The series cannot be split or prepared for the requested protocol."""


class ExperimentKind(StrEnum):
    FORECAST = "forecast"
    IMPUTE = "impute"


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    fit: FitConfig = Field(default_factory=FitConfig)
    pca_dim: int = Field(default=0, ge=0, description="Latent dimension, 0 disables PCA")
    downsample: int = Field(default=1, ge=1, description="Keep every k-th frame")
    forecast_split: float = Field(default=0.5, gt=0, lt=1, description="Training share of the time range")
    impute_fraction: float = Field(default=0.2, gt=0, lt=1, description="Share of frames removed from the middle")


class ExperimentReport(BaseModel):
    kind: ExperimentKind
    rmse: float
    rmse_per_dimension: list[float]
    n_frames: int
    n_train: int
    n_test: int
    observed_dim: int
    pca_dim: int
    explained_variance: list[float] | None = None
    log_posterior: float
    sigma_f: float
    lengthscales: list[float]
    omega: list[float]
    diagnostics: FitDiagnostics | None = None
    artifacts: dict[str, str] = Field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class ExperimentSplit:
    """A prepared experiment: the (downsampled) series, its train/test masks and the training data to fit."""

    kind: ExperimentKind
    series: Trajectory
    truth: Trajectory
    train_mask: NDArray[np.bool_]
    test_mask: NDArray[np.bool_]
    projection: PcaProjection | None
    train: Dataset

    @property
    def test_times(self) -> NDArray[np.float64]:
        return self.series.times[self.test_mask]


@dataclass(frozen=True, eq=False)
class ExperimentOutcome:
    report: ExperimentReport
    prediction: Trajectory
    latent_prediction: Trajectory
    model: FittedModel


def _downsample(trajectory: Trajectory, factor: int) -> Trajectory:
    return trajectory if factor == 1 else trajectory.select(slice(None, None, factor))


def _training_data(series: Trajectory, mask: NDArray[np.bool_], pca_dim: int) -> tuple[Dataset, PcaProjection | None]:
    train = series.select(mask)
    if train.size < 2:
        raise ExperimentError(f"only {train.size} training frame(s) left")
    if pca_dim == 0:
        return Dataset.of(train), None
    try:
        projection = pca_fit(train.states, pca_dim)
    except ValueError as e:
        raise ExperimentError(str(e)) from e
    return Dataset.of(projection.project_trajectory(train)), projection


def _prepare(
    kind: ExperimentKind, series: Trajectory, truth: Trajectory | None, mask: NDArray[np.bool_], cfg: ExperimentConfig
) -> ExperimentSplit:
    train, projection = _training_data(series, mask, cfg.pca_dim)
    if (~mask).sum() == 0:
        raise ExperimentError("no test frames left")
    return ExperimentSplit(kind, series, truth, mask, ~mask, projection, train)


def _aligned_truth(series: Trajectory, truth: Trajectory | None, cfg: ExperimentConfig) -> Trajectory:
    if truth is None:
        return series
    truth = _downsample(truth, cfg.downsample)
    if truth.size != series.size or not np.allclose(truth.times, series.times):
        raise ExperimentError("truth must be sampled at the same times as the series")
    return truth


def prepare_forecast(series: Trajectory, cfg: ExperimentConfig, truth: Trajectory | None = None) -> ExperimentSplit:
    """Train on frames up to the time midpoint, test on the rest."""
    series = _downsample(series, cfg.downsample)
    cut = series.times[0] + cfg.forecast_split * (series.times[-1] - series.times[0])
    return _prepare(ExperimentKind.FORECAST, series, _aligned_truth(series, truth, cfg), series.times <= cut, cfg)


def prepare_imputation(series: Trajectory, cfg: ExperimentConfig, truth: Trajectory | None = None) -> ExperimentSplit:
    """Remove a centred contiguous block of round(fraction * N) frames and test on it."""
    series = _downsample(series, cfg.downsample)
    gap = max(1, round(cfg.impute_fraction * series.size))
    start = (series.size - gap) // 2
    if start == 0 or start + gap >= series.size:
        raise ExperimentError(f"{series.size} frames are too few to remove {gap} from the middle")
    mask = np.ones(series.size, dtype=bool)
    mask[start : start + gap] = False
    return _prepare(ExperimentKind.IMPUTE, series, _aligned_truth(series, truth, cfg), mask, cfg)


def finish_experiment(split: ExperimentSplit, model: FittedModel) -> ExperimentOutcome:
    """Predict the whole time range from the fitted initial state and score the test frames."""
    latent = predict(model, split.series.times)
    projection = split.projection
    prediction = projection.reconstruct_trajectory(latent) if projection is not None else latent
    prediction = prediction.with_noise(None)
    score = rmse(prediction, split.truth, split.test_times)
    per_dim = rmse_per_dimension(prediction, split.truth, split.test_times)
    report = ExperimentReport(
        kind=split.kind,
        rmse=score,
        rmse_per_dimension=per_dim.tolist(),
        n_frames=split.series.size,
        n_train=int(split.train_mask.sum()),
        n_test=int(split.test_mask.sum()),
        observed_dim=split.series.dim,
        pca_dim=projection.latent_dim if projection is not None else 0,
        explained_variance=projection.explained_variance_ratio.tolist() if projection is not None else None,
        log_posterior=model.log_posterior(split.train),
        sigma_f=model.params.sigma_f,
        lengthscales=model.params.lengthscales.tolist(),
        omega=model.omega.tolist(),
        diagnostics=model.diagnostics,
    )
    logger.info("Experiment scored", kind=str(split.kind), rmse=score, n_test=report.n_test)
    return ExperimentOutcome(report=report, prediction=prediction, latent_prediction=latent, model=model)


@with_operation_context("forecast_experiment")
def run_forecast_experiment(
    series: Trajectory, cfg: ExperimentConfig | None = None, truth: Trajectory | None = None
) -> ExperimentOutcome:
    cfg = cfg or ExperimentConfig()
    split = prepare_forecast(series, cfg, truth)
    return finish_experiment(split, fit(split.train, None, cfg.fit))


@with_operation_context("imputation_experiment")
def run_imputation_experiment(
    series: Trajectory, cfg: ExperimentConfig | None = None, truth: Trajectory | None = None
) -> ExperimentOutcome:
    cfg = cfg or ExperimentConfig()
    split = prepare_imputation(series, cfg, truth)
    return finish_experiment(split, fit(split.train, None, cfg.fit))


PREPARERS = {ExperimentKind.FORECAST: prepare_forecast, ExperimentKind.IMPUTE: prepare_imputation}
