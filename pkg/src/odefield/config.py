# ABOUTME: Run configuration using Pydantic Settings: environment, .env, optional flat config file and CLI overrides
# ABOUTME: Builds the typed solver, optimiser, fit and experiment configs used by the library

from pathlib import Path
from typing import Any, Literal

from dotenv import dotenv_values
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

from odefield.bench.experiments import ExperimentConfig
from odefield.dynamics.odeint import SolverConfig
from odefield.model.fit import DEFAULT_SEED, FitConfig
from odefield.model.selection import DEFAULT_LENGTHSCALES
from odefield.optim.lbfgs import OptimConfig

ENV_PREFIX = "ODEFIELD_"


class RunConfig(BaseSettings):
    """Run configuration with environment variable support."""

    model_config = SettingsConfigDict(
        env_prefix=ENV_PREFIX,
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",  # Ignore unknown environment variables
    )

    # Logging Configuration
    log_mode: Literal["interactive", "production"] | None = Field(
        default=None, description="Logging output mode, detected from the terminal when unset"
    )
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = Field(default="INFO", description="Logging verbosity")
    log_file: Path | None = Field(default=None, description="Custom log file path (overrides default)")

    # Reproducibility
    seed: int = Field(default=DEFAULT_SEED, ge=0, description="Seed of every random draw in a run")

    # Inducing grid and kernel
    grid_size: int = Field(default=5, ge=2, description="Inducing points per state dimension")
    grid_margin: float = Field(default=0.1, ge=0, description="Grid box widening per side relative to the data span")
    lengthscale: float = Field(default=1.0, gt=0, description="Isotropic kernel lengthscale")
    lengthscale_grid: list[float] = Field(
        default_factory=lambda: list(DEFAULT_LENGTHSCALES), description="Cross-validation candidates"
    )
    initial_sigma_f: float = Field(default=1.0, gt=0, description="Initial kernel signal standard deviation")
    initial_noise: float | None = Field(
        default=None, gt=0, description="Initial noise std for every dimension, 10% of the data std when unset"
    )

    # Optimisation
    restarts: int = Field(default=100, gt=0, description="Perturbed L-BFGS restarts per fit")
    perturbation_scale: float = Field(default=0.1, ge=0, description="Restart perturbation std (whitened domain)")
    max_iterations: int = Field(default=500, gt=0, description="L-BFGS iterations per restart")
    workers: int = Field(default=1, gt=0, description="Worker processes for restarts")

    # ODE solver
    rtol: float = Field(default=1e-6, gt=0, description="Integrator relative tolerance")
    atol: float = Field(default=1e-8, gt=0, description="Integrator absolute tolerance")
    max_steps: int = Field(default=100_000, gt=0, description="Integrator step budget")

    # Experiments
    pca_dim: int = Field(default=0, ge=0, description="PCA latent dimension, 0 disables PCA")
    downsample: int = Field(default=1, ge=1, description="Keep every k-th frame before experiments")
    output_dir: Path = Field(default=Path("."), description="Directory for artifacts without an explicit path")

    def solver_config(self) -> SolverConfig:
        return SolverConfig(rtol=self.rtol, atol=self.atol, max_steps=self.max_steps)

    def optim_config(self) -> OptimConfig:
        return OptimConfig(max_iterations=self.max_iterations)

    def fit_config(self, dim: int | None = None) -> FitConfig:
        initial_noise = None
        if self.initial_noise is not None and dim is not None:
            initial_noise = (self.initial_noise,) * dim
        return FitConfig(
            restarts=self.restarts,
            perturbation_scale=self.perturbation_scale,
            seed=self.seed,
            grid_size=self.grid_size,
            grid_margin=self.grid_margin,
            lengthscale=self.lengthscale,
            initial_sigma_f=self.initial_sigma_f,
            initial_noise=initial_noise,
            solver=self.solver_config(),
            optim=self.optim_config(),
            workers=self.workers,
        )

    def experiment_config(self, dim: int | None = None) -> ExperimentConfig:
        return ExperimentConfig(fit=self.fit_config(dim), pca_dim=self.pca_dim, downsample=self.downsample)


def read_config_file(path: str | Path) -> dict[str, Any]:
    """Flat key=value file (dotenv syntax); keys are case-insensitive, with or without the env prefix."""
    values = {}
    for key, value in dotenv_values(path).items():
        if value is None:
            continue
        name = key.strip().lower()
        if name.startswith(ENV_PREFIX.lower()):
            name = name[len(ENV_PREFIX) :]
        values[name] = value
    return values


def load_run_config(path: str | Path | None = None, **overrides: Any) -> RunConfig:
    """Environment < config file < explicit overrides (None overrides are ignored)."""
    values: dict[str, Any] = {}
    if path is not None:
        config_path = Path(path)
        if not config_path.is_file():
            raise FileNotFoundError(f"config file {config_path} does not exist")
        values.update(read_config_file(config_path))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)


# Global config instance - lazy loaded when first accessed
_config_instance: RunConfig | None = None


def get_config() -> RunConfig:
    """Get the global configuration instance.

    Creates the config on first access, subsequent calls return the same instance.

    Returns:
        RunConfig: The run configuration instance
    """
    global _config_instance
    if _config_instance is None:
        _config_instance = RunConfig()
    return _config_instance


def reload_config() -> RunConfig:
    """Reload configuration from environment variables.

    Useful for testing or when environment variables change at runtime.

    Returns:
        RunConfig: A fresh configuration instance
    """
    global _config_instance
    _config_instance = RunConfig()
    return _config_instance
