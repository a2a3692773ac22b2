# ABOUTME: Gaussian-process vector field interpolated from inducing vectors on a fixed grid
# ABOUTME: Field value, state Jacobian J, parameter weights w(x) for R, grids and the whitening transform

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.linalg import cho_solve, solve_triangular

from odefield.gp.kernel import (
    CholeskyResult,
    DimensionMismatchError,
    KernelParams,
    kernel_matrix,
    kernel_row,
    kernel_row_grad,
    robust_cholesky,
)


class GridSpec(BaseModel):
    """Axis-aligned box with a number of equidistant grid points per dimension."""

    model_config = ConfigDict(frozen=True)

    lower: tuple[float, ...] = Field(description="Lower bound per dimension")
    upper: tuple[float, ...] = Field(description="Upper bound per dimension")
    counts: tuple[int, ...] = Field(description="Number of grid points per dimension (>= 2)")

    @model_validator(mode="after")
    def _check_box(self) -> GridSpec:
        if not (len(self.lower) == len(self.upper) == len(self.counts)) or not self.counts:
            raise ValueError("lower, upper and counts must have the same non-zero length")
        if any(c < 2 for c in self.counts):
            raise ValueError(f"every dimension needs at least 2 grid points, got {self.counts}")
        for lo, hi in zip(self.lower, self.upper, strict=True):
            if not (np.isfinite(lo) and np.isfinite(hi)) or lo >= hi:
                raise ValueError(f"grid bounds must be finite with lower < upper, got [{lo}, {hi}]")
        return self

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @classmethod
    def around(cls, states: ArrayLike, count: int | tuple[int, ...] = 5, margin: float = 0.1) -> GridSpec:
        """Bounding box of the observed states, widened by ``margin`` of its span on each side."""
        states = np.atleast_2d(np.asarray(states, dtype=float))
        lo = states.min(axis=0)
        hi = states.max(axis=0)
        span = hi - lo
        # a constant coordinate still needs a box of non-zero width
        span = np.where(span > 0, span, 1.0)
        lo = lo - margin * span
        hi = hi + margin * span
        counts = (count,) * states.shape[1] if isinstance(count, int) else tuple(count)
        return cls(lower=tuple(lo.tolist()), upper=tuple(hi.tolist()), counts=counts)


def make_grid(spec: GridSpec) -> NDArray[np.float64]:
    """Equidistant Cartesian grid, shape (M, D); the last dimension varies fastest."""
    axes = [np.linspace(lo, hi, n) for lo, hi, n in zip(spec.lower, spec.upper, spec.counts, strict=True)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def whiten(u: ArrayLike, lower: NDArray[np.float64]) -> NDArray[np.float64]:
    """U~ = L^-1 U, applied column-wise (one scalar solve per state dimension)."""
    return solve_triangular(lower, np.asarray(u, dtype=float), lower=True)


def unwhiten(u_tilde: ArrayLike, lower: NDArray[np.float64]) -> NDArray[np.float64]:
    """U = L U~."""
    return lower @ np.asarray(u_tilde, dtype=float)


def _frozen(array: ArrayLike) -> NDArray[np.float64]:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class InducingSet:
    """Inducing locations Z, inducing vectors U (and whitened U~) and the kernel defining the field.

    Immutable: parameter updates go through ``with_whitened`` / ``with_kernel`` which build a
    new set. ``alpha = k(Z,Z)^-1 U`` is computed once per set.
    """

    locations: NDArray[np.float64]
    u_tilde: NDArray[np.float64]
    kernel: KernelParams
    chol: CholeskyResult
    u: NDArray[np.float64] = field(init=False)
    alpha: NDArray[np.float64] = field(init=False)

    def __post_init__(self) -> None:
        if self.locations.shape != self.u_tilde.shape:
            raise DimensionMismatchError(
                f"locations {self.locations.shape} and inducing vectors {self.u_tilde.shape} differ in shape"
            )
        if self.locations.shape[1] != self.kernel.dim:
            raise DimensionMismatchError(
                f"locations have dimension {self.locations.shape[1]} but kernel has {self.kernel.dim}"
            )
        u = unwhiten(self.u_tilde, self.chol.lower)
        object.__setattr__(self, "u", _frozen(u))
        object.__setattr__(self, "alpha", _frozen(cho_solve((self.chol.lower, True), u)))

    @staticmethod
    def factorize(locations: NDArray[np.float64], kernel: KernelParams) -> CholeskyResult:
        return robust_cholesky(kernel_matrix(locations, locations, kernel), scale=kernel.variance, name="K(Z,Z)")

    @classmethod
    def from_whitened(cls, locations: ArrayLike, u_tilde: ArrayLike, kernel: KernelParams) -> InducingSet:
        locations = _frozen(np.atleast_2d(locations))
        return cls(locations, _frozen(u_tilde), kernel, cls.factorize(locations, kernel))

    @classmethod
    def from_vectors(cls, locations: ArrayLike, u: ArrayLike, kernel: KernelParams) -> InducingSet:
        locations = _frozen(np.atleast_2d(locations))
        chol = cls.factorize(locations, kernel)
        return cls(locations, _frozen(whiten(u, chol.lower)), kernel, chol)

    def with_whitened(self, u_tilde: ArrayLike) -> InducingSet:
        return InducingSet(self.locations, _frozen(u_tilde), self.kernel, self.chol)

    def with_kernel(self, kernel: KernelParams) -> InducingSet:
        """Same whitened vectors under new hyperparameters (U changes with L)."""
        return InducingSet(self.locations, self.u_tilde, kernel, self.factorize(self.locations, kernel))

    @property
    def size(self) -> int:
        return self.locations.shape[0]

    @property
    def dim(self) -> int:
        return self.locations.shape[1]

    @property
    def lower(self) -> NDArray[np.float64]:
        return self.chol.lower

    @property
    def log_det(self) -> float:
        """log |k(Z,Z) + jitter I| of the scalar matrix."""
        return 2.0 * float(np.sum(np.log(np.diag(self.chol.lower))))

    def scalar_matrix(self) -> NDArray[np.float64]:
        return kernel_matrix(self.locations, self.locations, self.kernel)

    def weights(self, x: NDArray[np.float64], row: NDArray[np.float64] | None = None) -> NDArray[np.float64]:
        """w(x) = k(x,Z) k(Z,Z)^-1."""
        if row is None:
            row = kernel_row(x, self.locations, self.kernel)
        return cho_solve((self.chol.lower, True), row)

    def __call__(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        return kernel_row(x, self.locations, self.kernel) @ self.alpha


def _as_state(x: ArrayLike, inducing: InducingSet) -> NDArray[np.float64]:
    x = np.asarray(x, dtype=float)
    if x.shape != (inducing.dim,):
        raise DimensionMismatchError(f"state has shape {x.shape}, expected ({inducing.dim},)")
    return x


def eval_field(x: ArrayLike, inducing: InducingSet) -> NDArray[np.float64]:
    """f(x) = K(x,Z) K(Z,Z)^-1 vec(U), evaluated per dimension as k(x,Z) alpha[:, d]."""
    return inducing(_as_state(x, inducing))


def field_state_jacobian(x: ArrayLike, inducing: InducingSet) -> NDArray[np.float64]:
    """J[d, j] = df_d / dx_j = sum_m alpha[m, d] d k(x, z_m) / dx_j."""
    x = _as_state(x, inducing)
    row = kernel_row(x, inducing.locations, inducing.kernel)
    return inducing.alpha.T @ kernel_row_grad(x, inducing.locations, row, inducing.kernel)


def field_param_jacobian(x: ArrayLike, inducing: InducingSet) -> NDArray[np.float64]:
    """The M-vector w(x) = k(x,Z) k(Z,Z)^-1.

    Under the decomposable kernel df_d / du_{m,d'} = delta_{d d'} w_m(x), so w is the whole
    D x MD Jacobian R; use ``expand_param_jacobian`` for the dense matrix.
    """
    return inducing.weights(_as_state(x, inducing))


def expand_param_jacobian(weights: NDArray[np.float64], dim: int) -> NDArray[np.float64]:
    """Dense D x (M*D) matrix for vec(U) ordered as u_{m,d} -> m*D + d."""
    return np.kron(weights[None, :], np.eye(dim))


def field_on_grid(vector_field, spec: GridSpec) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Evaluate any callable field on a regular grid; returns (points, values)."""
    points = make_grid(spec)
    return points, np.stack([np.asarray(vector_field(p), dtype=float) for p in points])
