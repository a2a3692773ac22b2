# ABOUTME: Shared pytest fixtures: small synthetic datasets and model parameters
# ABOUTME: Kept tiny (3x3 grids, a handful of observations) so gradient checks stay fast

import numpy as np
import pytest
from loguru import logger

from odefield.dynamics.odeint import SolverConfig, Trajectory, integrate
from odefield.gp.field import GridSpec, make_grid
from odefield.model.params import Dataset, ModelParams


def spiral(x):
    return np.array([-0.1 * x[0] + x[1], -x[0] - 0.1 * x[1]])


@pytest.fixture(autouse=True)
def _silence_loguru():
    """No loguru sinks unless a test configures them."""
    logger.remove()
    yield
    logger.remove()


@pytest.fixture
def tight_solver():
    return SolverConfig(rtol=1e-10, atol=1e-12)


@pytest.fixture
def spiral_data():
    """Two noisy series of a damped linear spiral."""
    rng = np.random.default_rng(11)
    series = []
    for x0, times in [([1.0, 0.0], np.linspace(0.0, 3.0, 8)), ([0.0, -0.8], np.linspace(0.5, 3.0, 6))]:
        clean = integrate(spiral, x0, times, SolverConfig(rtol=1e-10, atol=1e-12), start=float(times[0]))
        series.append(Trajectory(times, clean.states + 0.02 * rng.standard_normal(clean.states.shape)))
    return Dataset.of(*series)


@pytest.fixture
def spiral_locations():
    return make_grid(GridSpec(lower=(-1.5, -1.5), upper=(1.5, 1.5), counts=(3, 3)))


@pytest.fixture
def spiral_params(spiral_data, spiral_locations):
    rng = np.random.default_rng(5)
    return ModelParams(
        x0=np.stack([s.states[0] for s in spiral_data]),
        u_tilde=0.5 * rng.standard_normal(spiral_locations.shape),
        log_sigma_f=np.log(0.9),
        lengthscales=np.array([1.1, 1.1]),
        log_omega=np.log([0.05, 0.08]),
    )
