# ABOUTME: Ground-truth benchmark oscillators (Van der Pol, FitzHugh-Nagumo, Lotka-Volterra) and data generators
# ABOUTME: Period detection, seeded observation noise, lifted high-dimensional series and vector-field error

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass
from enum import StrEnum
from functools import cache

import numpy as np
from numpy.typing import ArrayLike, NDArray

from odefield.dynamics.odeint import SolverConfig, Trajectory, integrate
from odefield.utils.logging import get_logger

logger = get_logger(__name__)

LATENT_DIM = 3


class SystemName(StrEnum):
    VDP = "vdp"
    FHN = "fhn"
    LV = "lv"


def van_der_pol(x: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.array([x[1], (1.0 - x[0] ** 2) * x[1] - x[0]])


def fitzhugh_nagumo(x: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.array([3.0 * (x[0] - x[0] ** 3 / 3.0 + x[1]), (0.2 - 3.0 * x[0] - 0.2 * x[1]) / 3.0])


def lotka_volterra(x: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.array([1.5 * x[0] - x[0] * x[1], -3.0 * x[1] + x[0] * x[1]])


@dataclass(frozen=True)
class BenchmarkSystem:
    """A two-dimensional benchmark with its reference initial state and training span in cycles."""

    name: SystemName
    field: Callable[[NDArray[np.float64]], NDArray[np.float64]]
    default_x0: tuple[float, float]
    training_cycles: float
    description: str

    def __call__(self, x: ArrayLike) -> NDArray[np.float64]:
        return eval_true_field(self, x)

    @property
    def period(self) -> float:
        """Cycle period of the orbit through ``default_x0``."""
        return _canonical_period(self.name)


SYSTEMS: dict[SystemName, BenchmarkSystem] = {
    SystemName.VDP: BenchmarkSystem(SystemName.VDP, van_der_pol, (2.0, 0.0), 1.0, "Van der Pol oscillator"),
    SystemName.FHN: BenchmarkSystem(SystemName.FHN, fitzhugh_nagumo, (-1.0, 1.0), 1.0, "FitzHugh-Nagumo neuron"),
    SystemName.LV: BenchmarkSystem(SystemName.LV, lotka_volterra, (5.0, 1.0), 1.7, "Lotka-Volterra predator-prey"),
}


def get_system(name: str | SystemName) -> BenchmarkSystem:
    try:
        return SYSTEMS[SystemName(str(name).lower())]
    except ValueError:
        valid = ", ".join(s.value for s in SystemName)
        raise ValueError(f"unknown system {name!r}, expected one of: {valid}") from None


def eval_true_field(system: BenchmarkSystem, x: ArrayLike) -> NDArray[np.float64]:
    x = np.asarray(x, dtype=float)
    if x.shape != (2,):
        raise ValueError(f"benchmark systems are two-dimensional, got state of shape {x.shape}")
    return system.field(x)


def simulate_benchmark(
    system: BenchmarkSystem, x0: ArrayLike | None, times: ArrayLike, cfg: SolverConfig | None = None
) -> Trajectory:
    """Clean trajectory of the true system, with ``x0`` the state at the first requested time."""
    times = np.asarray(times, dtype=float)
    x0 = system.default_x0 if x0 is None else x0
    return integrate(system.field, x0, times, cfg, start=float(times[0]))


def crossing_period(times: ArrayLike, values: ArrayLike, min_crossings: int = 2) -> float:
    """Mean time between upward crossings of ``values`` through their mean."""
    t = np.asarray(times, dtype=float)
    level = np.asarray(values, dtype=float)
    level = level - level.mean()
    upward = np.flatnonzero((level[:-1] < 0) & (level[1:] >= 0))
    if upward.size < min_crossings:
        raise ValueError(f"found {upward.size} upward crossing(s), need {min_crossings}")
    # linear interpolation of the crossing instants
    frac = -level[upward] / (level[upward + 1] - level[upward])
    crossings = t[upward] + frac * (t[upward + 1] - t[upward])
    return float(np.mean(np.diff(crossings)))


def estimate_period(
    system: BenchmarkSystem,
    x0: ArrayLike | None = None,
    cfg: SolverConfig | None = None,
    *,
    horizon: float = 120.0,
    resolution: float = 0.005,
    transient: float = 0.25,
) -> float:
    """Crossing period of x1 after discarding the transient."""
    times = np.arange(0.0, horizon + resolution / 2, resolution)
    trajectory = simulate_benchmark(system, x0, times, cfg or SolverConfig(rtol=1e-9, atol=1e-11))
    keep = times >= transient * horizon
    try:
        return crossing_period(times[keep], trajectory.states[keep, 0], min_crossings=3)
    except ValueError as e:
        raise ValueError(f"no periodic orbit detected for {system.name} within t <= {horizon}: {e}") from None


@cache
def _canonical_period(name: SystemName) -> float:
    return estimate_period(SYSTEMS[name])


def sample_times(system: BenchmarkSystem, n_points: int, cycles: float | None = None) -> NDArray[np.float64]:
    """``n_points`` equispaced times from 0 over ``cycles`` periods (the system's training span by default)."""
    if n_points < 2:
        raise ValueError("at least two sample times are required")
    cycles = system.training_cycles if cycles is None else cycles
    if cycles <= 0:
        raise ValueError("cycles must be positive")
    return np.linspace(0.0, cycles * system.period, n_points)


def add_noise(trajectory: Trajectory, sigma_n: float, seed: int | None) -> Trajectory:
    """Independent zero-mean Gaussian noise on every entry; ``sigma_n = 0`` returns the same values."""
    if sigma_n < 0:
        raise ValueError("noise level must be nonnegative")
    noise = np.full(trajectory.dim, float(sigma_n))
    if sigma_n == 0:
        return trajectory.with_noise(noise)
    rng = np.random.default_rng(seed)
    noisy = trajectory.states + sigma_n * rng.standard_normal(trajectory.states.shape)
    return Trajectory(trajectory.times, noisy, noise)


@dataclass(frozen=True, eq=False)
class LiftedSeries:
    """A benchmark orbit lifted to a 3-D latent and mapped linearly to ``mapping.shape[0]`` observed dimensions."""

    latent: Trajectory
    clean: Trajectory
    noisy: Trajectory
    mapping: NDArray[np.float64]


def lift(states: NDArray[np.float64]) -> NDArray[np.float64]:
    """(x1, x2) -> (x1, x2, x1 * x2 / 2)."""
    states = np.atleast_2d(states)
    return np.column_stack([states[:, 0], states[:, 1], 0.5 * states[:, 0] * states[:, 1]])


def lifted_series(
    system: BenchmarkSystem,
    times: ArrayLike,
    observed_dim: int,
    sigma_n: float,
    seed: int,
    x0: ArrayLike | None = None,
    cfg: SolverConfig | None = None,
) -> LiftedSeries:
    """Synthetic high-dimensional series with a known low-dimensional latent dynamics."""
    if observed_dim < LATENT_DIM:
        raise ValueError(f"observed dimension must be at least {LATENT_DIM}")
    orbit = simulate_benchmark(system, x0, times, cfg)
    latent = Trajectory(orbit.times, lift(orbit.states))
    rng = np.random.default_rng(np.random.SeedSequence([seed, observed_dim]))
    mapping = rng.standard_normal((observed_dim, LATENT_DIM)) / np.sqrt(LATENT_DIM)
    clean = Trajectory(orbit.times, latent.states @ mapping.T)
    noisy = add_noise(clean, sigma_n, seed)
    logger.debug("Lifted series generated", system=str(system.name), observed_dim=observed_dim, points=orbit.size)
    return LiftedSeries(latent=latent, clean=clean, noisy=noisy, mapping=mapping)


def field_error(
    learned: Callable[[NDArray[np.float64]], ArrayLike],
    reference: Callable[[NDArray[np.float64]], ArrayLike],
    states: ArrayLike,
) -> float:
    """mean ||f_learned(x) - f_ref(x)|| / mean ||f_ref(x)|| over the given states."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    diffs = []
    norms = []
    for x in states:
        ref = np.asarray(reference(x), dtype=float)
        diffs.append(np.linalg.norm(np.asarray(learned(x), dtype=float) - ref))
        norms.append(np.linalg.norm(ref))
    scale = float(np.mean(norms))
    if scale == 0:
        raise ValueError("reference field vanishes on all states")
    return float(np.mean(diffs)) / scale
