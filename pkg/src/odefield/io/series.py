# ABOUTME: CSV reading and writing of time series (header t,x1,...,xP with an optional series column)
# ABOUTME: Locale-independent 17-significant-digit output; parse errors name the offending line

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray

from odefield.dynamics.odeint import Trajectory
from odefield.io.atomic import write_atomic
from odefield.model.params import Dataset
from odefield.utils.logging import get_logger

logger = get_logger(__name__)

TIME_COLUMN = "t"
SERIES_COLUMN = "series"
FLOAT_FORMAT = "%.17g"


class SeriesFormatError(ValueError):
    """A series file is missing, empty or malformed; ``line`` is 1-based and counts the header."""

    def __init__(self, path: str | Path, message: str, line: int | None = None):
        self.path = Path(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else str(self.path)
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True, eq=False)
class SeriesFile:
    path: Path
    value_columns: tuple[str, ...]
    series_ids: tuple[str, ...]
    dataset: Dataset

    @property
    def columns(self) -> tuple[str, ...]:
        return (TIME_COLUMN, *self.value_columns)


def _load_frame(path: Path) -> pd.DataFrame:
    if not path.is_file():
        raise SeriesFormatError(path, "file does not exist")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True, skip_blank_lines=False)
    except pd.errors.EmptyDataError:
        raise SeriesFormatError(path, "file is empty") from None
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        raise SeriesFormatError(path, f"malformed row: {e}", int(match.group(1)) if match else None) from e
    frame.columns = [str(c).strip() for c in frame.columns]
    # the index holds 1-based file line numbers (header on line 1)
    frame.index = pd.RangeIndex(2, len(frame) + 2)
    if not frame.empty:
        blank = frame.fillna("").apply(lambda column: column.astype(str).str.strip() == "").all(axis=1)
        frame = frame[~blank]
    if frame.empty:
        raise SeriesFormatError(path, "file has a header but no rows", 2)
    return frame


def _numeric(frame: pd.DataFrame, columns: list[str], path: Path) -> NDArray[np.float64]:
    numeric = frame[columns].apply(pd.to_numeric, errors="coerce").to_numpy(dtype=float)
    bad = ~np.isfinite(numeric)
    if np.any(bad):
        row, col = np.argwhere(bad)[0]
        raw = frame[columns[col]].iloc[row]
        raise SeriesFormatError(path, f"invalid value {raw!r} in column {columns[col]!r}", int(frame.index[row]))
    return numeric


def read_series_file(path: str | Path) -> SeriesFile:
    path = Path(path)
    frame = _load_frame(path)
    names = {c.lower(): c for c in frame.columns}
    if TIME_COLUMN not in names:
        raise SeriesFormatError(path, f"header must contain a {TIME_COLUMN!r} column", 1)
    time_column = names[TIME_COLUMN]
    series_column = names.get(SERIES_COLUMN)
    value_columns = [c for c in frame.columns if c not in (time_column, series_column)]
    if not value_columns:
        raise SeriesFormatError(path, "no value columns", 1)

    times = _numeric(frame, [time_column], path)[:, 0]
    values = _numeric(frame, value_columns, path)
    ids = frame[series_column].str.strip().to_numpy() if series_column else np.full(len(frame), "0", dtype=object)

    trajectories = []
    series_ids = tuple(pd.unique(ids).tolist())
    for series_id in series_ids:
        rows = np.flatnonzero(ids == series_id)
        steps = np.diff(times[rows])
        if np.any(steps <= 0):
            offending = rows[int(np.argmax(steps <= 0)) + 1]
            raise SeriesFormatError(
                path, f"times must be strictly increasing within series {series_id!r}", int(frame.index[offending])
            )
        trajectories.append(Trajectory(times[rows], values[rows]))

    try:
        dataset = Dataset(tuple(trajectories))
    except ValueError as e:
        raise SeriesFormatError(path, str(e)) from e
    logger.debug("Series file read", path=str(path), series=len(series_ids), rows=len(frame), dim=len(value_columns))
    return SeriesFile(path, tuple(value_columns), series_ids, dataset)


def read_series(path: str | Path) -> Dataset:
    return read_series_file(path).dataset


def default_columns(dim: int, prefix: str = "x") -> list[str]:
    return [f"{prefix}{j + 1}" for j in range(dim)]


def _to_csv(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def write_series(path: str | Path, trajectory: Trajectory, columns: list[str] | None = None) -> Path:
    columns = columns or default_columns(trajectory.dim)
    frame = pd.DataFrame(trajectory.states, columns=columns)
    frame.insert(0, TIME_COLUMN, trajectory.times)
    return write_atomic(path, _to_csv(frame))


def write_dataset(path: str | Path, dataset: Dataset, columns: list[str] | None = None) -> Path:
    """All series of a dataset in one file, distinguished by the series column."""
    columns = columns or default_columns(dataset.dim)
    frames = []
    for index, series in enumerate(dataset):
        frame = pd.DataFrame(series.states, columns=columns)
        frame.insert(0, TIME_COLUMN, series.times)
        frame.insert(0, SERIES_COLUMN, index)
        frames.append(frame)
    return write_atomic(path, _to_csv(pd.concat(frames, ignore_index=True)))


def write_prediction(path: str | Path, trajectory: Trajectory, columns: list[str] | None = None) -> Path:
    """Predicted means with ``<col>_lower`` / ``<col>_upper`` bands at +- omega per dimension."""
    columns = columns or default_columns(trajectory.dim)
    noise = trajectory.noise if trajectory.noise is not None else np.zeros(trajectory.dim)
    frame = pd.DataFrame({TIME_COLUMN: trajectory.times})
    for j, name in enumerate(columns):
        frame[name] = trajectory.states[:, j]
        frame[f"{name}_lower"] = trajectory.states[:, j] - noise[j]
        frame[f"{name}_upper"] = trajectory.states[:, j] + noise[j]
    return write_atomic(path, _to_csv(frame))


def write_field(path: str | Path, points: ArrayLike, values: ArrayLike) -> Path:
    """Vector field samples as columns x1..xD, f1..fD."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    values = np.atleast_2d(np.asarray(values, dtype=float))
    frame = pd.concat(
        [
            pd.DataFrame(points, columns=default_columns(points.shape[1])),
            pd.DataFrame(values, columns=default_columns(values.shape[1], "f")),
        ],
        axis=1,
    )
    return write_atomic(path, _to_csv(frame))
