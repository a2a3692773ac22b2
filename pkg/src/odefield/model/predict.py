# ABOUTME: Forecasting and imputation by integrating a fitted vector field over requested times
# ABOUTME: Predictions carry the fitted per-dimension noise scale omega as their noise band

from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike

from odefield.dynamics.odeint import SolverConfig, Trajectory, integrate
from odefield.model.fit import FittedModel


def predict(
    model: FittedModel,
    times: ArrayLike,
    from_state: ArrayLike | None = None,
    *,
    series: int = 0,
    start: float | None = None,
    cfg: SolverConfig | None = None,
) -> Trajectory:
    """Integrate the fitted field from the initial state of ``series`` (or ``from_state``).

    Integration starts at the series' time origin unless ``start`` is given. Integration
    errors propagate with the last valid time.
    """
    if not 0 <= series < model.params.n_series:
        raise IndexError(f"model has {model.params.n_series} series, got index {series}")
    x0 = model.params.x0[series] if from_state is None else np.asarray(from_state, dtype=float)
    origin = float(model.time_origins[series]) if start is None else float(start)
    trajectory = integrate(model.inducing, x0, times, cfg or model.solver, start=origin)
    return trajectory.with_noise(model.omega)
