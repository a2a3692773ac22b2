# ABOUTME: Scalar Gaussian kernel, its spatial gradient and kernel matrix assembly
# ABOUTME: Robust Cholesky factorisation with escalating diagonal jitter driven by tenacity

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import LinAlgError, cholesky
from tenacity import RetryError, Retrying, retry_if_exception_type, stop_after_attempt

from odefield.utils.logging import get_logger

logger = get_logger(__name__)

MAX_JITTER_ATTEMPTS = 6
INITIAL_RELATIVE_JITTER = 1e-10


class DimensionMismatchError(ValueError):
    """Raised when state vectors and lengthscales disagree on the dimension D."""


class NonPositiveDefiniteError(ArithmeticError):
    """Raised when a kernel matrix cannot be factorised even with the largest jitter."""

    def __init__(self, name: str, size: int, last_jitter: float):
        self.name = name
        self.size = size
        self.last_jitter = last_jitter
        super().__init__(
            f"Matrix {name!r} ({size}x{size}) is not positive definite "
            f"after {MAX_JITTER_ATTEMPTS} attempts (last jitter {last_jitter:.3e})"
        )


@dataclass(frozen=True, slots=True, eq=False)
class KernelParams:
    """Hyperparameters of the decomposable Gaussian kernel.

    The signal standard deviation is stored in the log domain, lengthscales linearly
    (they are selected on a grid, never optimised by gradient).
    """

    log_sigma_f: float
    lengthscales: NDArray[np.float64]

    def __post_init__(self) -> None:
        lengthscales = np.atleast_1d(np.asarray(self.lengthscales, dtype=float)).copy()
        if lengthscales.ndim != 1 or lengthscales.size == 0:
            raise ValueError("lengthscales must be a non-empty vector")
        if not np.all(np.isfinite(lengthscales)) or np.any(lengthscales <= 0):
            raise ValueError(f"lengthscales must be positive and finite, got {lengthscales}")
        if not np.isfinite(self.log_sigma_f):
            raise ValueError("log_sigma_f must be finite")
        lengthscales.setflags(write=False)
        object.__setattr__(self, "lengthscales", lengthscales)
        object.__setattr__(self, "log_sigma_f", float(self.log_sigma_f))

    @classmethod
    def from_linear(cls, sigma_f: float, lengthscales: ArrayLike) -> KernelParams:
        if sigma_f <= 0:
            raise ValueError(f"sigma_f must be positive, got {sigma_f}")
        return cls(log_sigma_f=float(np.log(sigma_f)), lengthscales=np.asarray(lengthscales, dtype=float))

    @classmethod
    def isotropic(cls, sigma_f: float, lengthscale: float, dim: int) -> KernelParams:
        return cls.from_linear(sigma_f, np.full(dim, float(lengthscale)))

    @property
    def sigma_f(self) -> float:
        return float(np.exp(self.log_sigma_f))

    @property
    def variance(self) -> float:
        return float(np.exp(2.0 * self.log_sigma_f))

    @property
    def dim(self) -> int:
        return self.lengthscales.size

    def with_log_sigma_f(self, log_sigma_f: float) -> KernelParams:
        return KernelParams(log_sigma_f=log_sigma_f, lengthscales=self.lengthscales)


class CholeskyResult(NamedTuple):
    lower: NDArray[np.float64]
    jitter: float


def _check_dim(x: NDArray[np.float64], params: KernelParams, what: str) -> None:
    if x.shape[-1] != params.dim:
        raise DimensionMismatchError(f"{what} has dimension {x.shape[-1]} but lengthscales have {params.dim}")


def eval_kernel(z: ArrayLike, z_prime: ArrayLike, params: KernelParams) -> float:
    """k(z, z') = sigma_f^2 exp(-1/2 sum_j (z_j - z'_j)^2 / l_j^2)."""
    z = np.asarray(z, dtype=float)
    z_prime = np.asarray(z_prime, dtype=float)
    _check_dim(z, params, "z")
    _check_dim(z_prime, params, "z_prime")
    scaled = (z - z_prime) / params.lengthscales
    return params.variance * float(np.exp(-0.5 * np.dot(scaled, scaled)))


def eval_kernel_grad(z: ArrayLike, z_prime: ArrayLike, params: KernelParams) -> NDArray[np.float64]:
    """Gradient of k(z, z') with respect to its first argument."""
    z = np.asarray(z, dtype=float)
    z_prime = np.asarray(z_prime, dtype=float)
    value = eval_kernel(z, z_prime, params)
    return -value * (z - z_prime) / params.lengthscales**2


def kernel_matrix(a: ArrayLike, b: ArrayLike, params: KernelParams) -> NDArray[np.float64]:
    """Scalar kernel matrix between two point sets of shape (M_a, D) and (M_b, D)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    _check_dim(a, params, "A")
    _check_dim(b, params, "B")
    scaled = (a[:, None, :] - b[None, :, :]) / params.lengthscales
    return params.variance * np.exp(-0.5 * np.einsum("ijk,ijk->ij", scaled, scaled))


def kernel_row(x: NDArray[np.float64], points: NDArray[np.float64], params: KernelParams) -> NDArray[np.float64]:
    """k(x, Z) for a single state; the hot path of every vector-field evaluation."""
    scaled = (x - points) / params.lengthscales
    return params.variance * np.exp(-0.5 * np.einsum("ij,ij->i", scaled, scaled))


def kernel_row_grad(
    x: NDArray[np.float64], points: NDArray[np.float64], row: NDArray[np.float64], params: KernelParams
) -> NDArray[np.float64]:
    """Rows of d k(x, z_m) / dx, shape (M, D), reusing the already computed k(x, Z)."""
    return -row[:, None] * (x - points) / params.lengthscales**2


def robust_cholesky(k: ArrayLike, *, scale: float | None = None, name: str = "K") -> CholeskyResult:
    """Lower Cholesky factor of a symmetric matrix, adding jitter only when needed.

    Jitter starts at zero, then 1e-10 * scale and grows tenfold per attempt, with at most
    six attempts. ``scale`` defaults to the largest diagonal entry (sigma_f^2 for kernel
    matrices).
    """
    k = np.asarray(k, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise DimensionMismatchError(f"{name} must be square, got shape {k.shape}")
    size = k.shape[0]
    if scale is None:
        scale = float(np.max(np.abs(np.diag(k)))) if size else 1.0
    identity = np.eye(size)
    jitter = 0.0

    retrying = Retrying(
        stop=stop_after_attempt(MAX_JITTER_ATTEMPTS),
        retry=retry_if_exception_type(LinAlgError),
    )
    try:
        for attempt in retrying:
            with attempt:
                number = attempt.retry_state.attempt_number
                jitter = 0.0 if number == 1 else INITIAL_RELATIVE_JITTER * scale * 10.0 ** (number - 2)
                lower = cholesky(k + jitter * identity, lower=True)
    except RetryError as e:
        raise NonPositiveDefiniteError(name, size, jitter) from e.last_attempt.exception()

    if jitter > 0:
        logger.debug("Cholesky needed jitter", matrix=name, size=size, jitter=jitter)
    return CholeskyResult(lower=lower, jitter=jitter)
