# ABOUTME: Versioned JSON model files holding the grid, whitened inducing vectors, hyperparameters and x0
# ABOUTME: Pydantic schema; floats are written with shortest round-trip repr so reloads are exact

from __future__ import annotations

from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError

from odefield.dynamics.odeint import SolverConfig
from odefield.io.atomic import write_atomic
from odefield.model.fit import FitDiagnostics, FittedModel
from odefield.model.params import ModelParams
from odefield.utils.logging import get_logger

logger = get_logger(__name__)

FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    """A model file is missing or does not match the schema."""


class UnsupportedModelVersionError(ModelFormatError):
    def __init__(self, version: int):
        self.version = version
        super().__init__(f"unsupported model format version {version} (this build reads version {FORMAT_VERSION})")


class _VersionHeader(BaseModel):
    model_config = ConfigDict(extra="ignore")

    format_version: int


class ModelFile(BaseModel):
    """On-disk representation of a fitted model."""

    model_config = ConfigDict(extra="forbid")

    format_version: int = FORMAT_VERSION
    locations: list[list[float]]
    u_tilde: list[list[float]]
    log_sigma_f: float
    lengthscales: list[float]
    log_omega: list[float]
    x0: list[list[float]]
    time_origins: list[float]
    solver: SolverConfig
    diagnostics: FitDiagnostics | None = None

    @classmethod
    def from_model(cls, model: FittedModel) -> ModelFile:
        params = model.params
        return cls(
            locations=model.locations.tolist(),
            u_tilde=params.u_tilde.tolist(),
            log_sigma_f=params.log_sigma_f,
            lengthscales=params.lengthscales.tolist(),
            log_omega=params.log_omega.tolist(),
            x0=params.x0.tolist(),
            time_origins=model.time_origins.tolist(),
            solver=model.solver,
            diagnostics=model.diagnostics,
        )

    def to_model(self) -> FittedModel:
        params = ModelParams(
            x0=np.array(self.x0),
            u_tilde=np.array(self.u_tilde),
            log_sigma_f=self.log_sigma_f,
            lengthscales=np.array(self.lengthscales),
            log_omega=np.array(self.log_omega),
        )
        locations = np.array(self.locations)
        if locations.shape != params.u_tilde.shape:
            raise ModelFormatError(f"locations {locations.shape} and inducing vectors {params.u_tilde.shape} differ")
        if len(self.time_origins) != params.n_series:
            raise ModelFormatError(f"{len(self.time_origins)} time origins for {params.n_series} initial states")
        return FittedModel(
            params=params,
            locations=locations,
            time_origins=np.array(self.time_origins),
            solver=self.solver,
            diagnostics=self.diagnostics,
        )


def write_model(path: str | Path, model: FittedModel) -> Path:
    text = ModelFile.from_model(model).model_dump_json(indent=2)
    written = write_atomic(path, text + "\n")
    logger.debug("Model written", path=str(written), inducing=model.locations.shape[0])
    return written


def read_model(path: str | Path) -> FittedModel:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ModelFormatError(f"{path}: cannot read model file ({e.strerror})") from e
    try:
        version = _VersionHeader.model_validate_json(text).format_version
    except ValidationError as e:
        raise ModelFormatError(f"{path}: not a model file ({e.error_count()} schema errors)") from e
    if version != FORMAT_VERSION:
        raise UnsupportedModelVersionError(version)
    try:
        return ModelFile.model_validate_json(text).to_model()
    except ModelFormatError:
        raise
    except ValueError as e:
        raise ModelFormatError(f"{path}: invalid model file: {e}") from e
