# ABOUTME: Root mean square error between trajectories at selected times
# ABOUTME: Optionally reconstructs latent trajectories to the original space before comparing

from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike, NDArray

from odefield.bench.pca import PcaProjection
from odefield.dynamics.odeint import Trajectory


def _rows_at(trajectory: Trajectory, times: NDArray[np.float64], what: str) -> NDArray[np.int64]:
    index = np.clip(np.searchsorted(trajectory.times, times), 0, trajectory.size - 1)
    # the previous sample can be the closer one
    previous = np.clip(index - 1, 0, trajectory.size - 1)
    closer = np.abs(trajectory.times[previous] - times) < np.abs(trajectory.times[index] - times)
    index = np.where(closer, previous, index)
    tolerance = 1e-9 * np.maximum(1.0, np.abs(times))
    missing = np.abs(trajectory.times[index] - times) > tolerance
    if np.any(missing):
        raise ValueError(f"{what} is not sampled at t={times[np.argmax(missing)]!r}")
    return index


def _original_space(states: NDArray[np.float64], projection: PcaProjection | None) -> NDArray[np.float64]:
    if projection is not None and states.shape[1] == projection.latent_dim != projection.input_dim:
        return projection.reconstruct(states)
    return states


def _errors(
    pred: Trajectory,
    truth: Trajectory,
    eval_times: ArrayLike | None,
    projection: PcaProjection | None,
) -> NDArray[np.float64]:
    times = truth.times if eval_times is None else np.atleast_1d(np.asarray(eval_times, dtype=float))
    if times.size == 0:
        raise ValueError("no evaluation times given")
    predicted = _original_space(pred.states[_rows_at(pred, times, "prediction")], projection)
    actual = _original_space(truth.states[_rows_at(truth, times, "truth")], projection)
    if predicted.shape != actual.shape:
        raise ValueError(f"prediction {predicted.shape} and truth {actual.shape} differ in shape")
    return predicted - actual


def rmse(
    pred: Trajectory,
    truth: Trajectory,
    eval_times: ArrayLike | None = None,
    projection: PcaProjection | None = None,
) -> float:
    """sqrt(mean squared error) over all entries at ``eval_times`` (all truth times when None)."""
    return float(np.sqrt(np.mean(_errors(pred, truth, eval_times, projection) ** 2)))


def rmse_per_dimension(
    pred: Trajectory,
    truth: Trajectory,
    eval_times: ArrayLike | None = None,
    projection: PcaProjection | None = None,
) -> NDArray[np.float64]:
    return np.sqrt(np.mean(_errors(pred, truth, eval_times, projection) ** 2, axis=0))
