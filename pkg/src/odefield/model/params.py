# ABOUTME: Optimisable model parameters, their flat-vector layout and the observed dataset
# ABOUTME: ModelParams holds x0 per series, whitened inducing vectors, log sigma_f, lengthscales and log noise

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from odefield.dynamics.odeint import Trajectory
from odefield.gp.field import InducingSet
from odefield.gp.kernel import DimensionMismatchError, KernelParams


def _frozen(array: ArrayLike, shape: tuple[int, ...] | None = None) -> NDArray[np.float64]:
    array = np.array(array, dtype=float)
    if shape is not None:
        array = array.reshape(shape)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Dataset:
    """One or more observed series sharing the state dimension D."""

    series: tuple[Trajectory, ...]

    def __post_init__(self) -> None:
        series = tuple(self.series)
        if not series:
            raise ValueError("a dataset needs at least one series")
        dims = {s.dim for s in series}
        if len(dims) != 1:
            raise DimensionMismatchError(f"series disagree on the state dimension: {sorted(dims)}")
        for index, s in enumerate(series):
            if s.size < 2:
                raise ValueError(f"series {index} has {s.size} observation(s), at least 2 are required")
        object.__setattr__(self, "series", series)

    @classmethod
    def of(cls, *series: Trajectory) -> Dataset:
        return cls(tuple(series))

    @property
    def dim(self) -> int:
        return self.series[0].dim

    @property
    def n_series(self) -> int:
        return len(self.series)

    @property
    def n_points(self) -> int:
        return sum(s.size for s in self.series)

    @property
    def time_origins(self) -> NDArray[np.float64]:
        return np.array([s.times[0] for s in self.series])

    def stacked_states(self) -> NDArray[np.float64]:
        return np.concatenate([s.states for s in self.series])

    def map(self, transform) -> Dataset:
        return Dataset(tuple(transform(s) for s in self.series))

    def __iter__(self):
        return iter(self.series)

    def __len__(self) -> int:
        return len(self.series)


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Full parameter state of the model.

    ``x0[s]`` is the state of series ``s`` at its first observation time. Lengthscales are
    carried along but never enter the optimisation vector.
    """

    x0: NDArray[np.float64]
    u_tilde: NDArray[np.float64]
    log_sigma_f: float
    lengthscales: NDArray[np.float64]
    log_omega: NDArray[np.float64]

    def __post_init__(self) -> None:
        u_tilde = _frozen(np.atleast_2d(self.u_tilde))
        dim = u_tilde.shape[1]
        x0 = _frozen(np.atleast_2d(self.x0))
        if x0.shape[1] != dim:
            raise DimensionMismatchError(f"initial states have dimension {x0.shape[1]}, inducing vectors {dim}")
        lengthscales = _frozen(np.atleast_1d(self.lengthscales))
        log_omega = _frozen(np.atleast_1d(self.log_omega))
        if lengthscales.shape != (dim,) or log_omega.shape != (dim,):
            raise DimensionMismatchError(f"lengthscales and noise scales must have {dim} entries")
        values = [x0, u_tilde, lengthscales, log_omega, np.array([self.log_sigma_f], dtype=float)]
        if not all(np.all(np.isfinite(v)) for v in values):
            raise ValueError("model parameters must be finite")
        if np.any(lengthscales <= 0):
            raise ValueError("lengthscales must be positive")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "u_tilde", u_tilde)
        object.__setattr__(self, "lengthscales", lengthscales)
        object.__setattr__(self, "log_omega", log_omega)
        object.__setattr__(self, "log_sigma_f", float(self.log_sigma_f))

    @property
    def dim(self) -> int:
        return self.u_tilde.shape[1]

    @property
    def n_series(self) -> int:
        return self.x0.shape[0]

    @property
    def n_inducing(self) -> int:
        return self.u_tilde.shape[0]

    @property
    def sigma_f(self) -> float:
        return float(np.exp(self.log_sigma_f))

    @property
    def omega(self) -> NDArray[np.float64]:
        return np.exp(self.log_omega)

    @property
    def kernel(self) -> KernelParams:
        return KernelParams(log_sigma_f=self.log_sigma_f, lengthscales=self.lengthscales)

    def inducing(self, locations: ArrayLike) -> InducingSet:
        return InducingSet.from_whitened(locations, self.u_tilde, self.kernel)

    def replace(self, **changes) -> ModelParams:
        fields = {
            "x0": self.x0,
            "u_tilde": self.u_tilde,
            "log_sigma_f": self.log_sigma_f,
            "lengthscales": self.lengthscales,
            "log_omega": self.log_omega,
        }
        fields.update(changes)
        return ModelParams(**fields)


@dataclass(frozen=True)
class ParamLayout:
    """Flat optimisation vector ``[vec(x0), vec(U~), log sigma_f, log omega]`` (row-major vecs)."""

    n_series: int
    n_inducing: int
    dim: int

    @classmethod
    def of(cls, params: ModelParams) -> ParamLayout:
        return cls(params.n_series, params.n_inducing, params.dim)

    @property
    def x0(self) -> slice:
        return slice(0, self.n_series * self.dim)

    @property
    def u_tilde(self) -> slice:
        start = self.x0.stop
        return slice(start, start + self.n_inducing * self.dim)

    @property
    def log_sigma_f(self) -> int:
        return self.u_tilde.stop

    @property
    def log_omega(self) -> slice:
        start = self.log_sigma_f + 1
        return slice(start, start + self.dim)

    @property
    def size(self) -> int:
        return self.log_omega.stop

    def pack(
        self,
        x0: ArrayLike,
        u_tilde: ArrayLike,
        log_sigma_f: float,
        log_omega: ArrayLike,
    ) -> NDArray[np.float64]:
        vector = np.empty(self.size)
        vector[self.x0] = np.ravel(x0)
        vector[self.u_tilde] = np.ravel(u_tilde)
        vector[self.log_sigma_f] = log_sigma_f
        vector[self.log_omega] = np.ravel(log_omega)
        return vector

    def flatten(self, params: ModelParams) -> NDArray[np.float64]:
        if ParamLayout.of(params) != self:
            raise DimensionMismatchError(f"parameters do not fit layout {self}")
        return self.pack(params.x0, params.u_tilde, params.log_sigma_f, params.log_omega)

    def unflatten(self, vector: ArrayLike, lengthscales: ArrayLike) -> ModelParams:
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (self.size,):
            raise DimensionMismatchError(f"expected a vector of {self.size} entries, got shape {vector.shape}")
        return ModelParams(
            x0=vector[self.x0].reshape(self.n_series, self.dim),
            u_tilde=vector[self.u_tilde].reshape(self.n_inducing, self.dim),
            log_sigma_f=float(vector[self.log_sigma_f]),
            lengthscales=np.asarray(lengthscales, dtype=float),
            log_omega=vector[self.log_omega],
        )


def first_states(series: Sequence[Trajectory] | Iterable[Trajectory]) -> NDArray[np.float64]:
    """The first observation of every series, the natural starting guess for x0."""
    return np.stack([s.states[0] for s in series])
