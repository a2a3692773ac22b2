# ABOUTME: Forward sensitivity equations co-integrated with the state of a GP vector field
# ABOUTME: Augmented system x' = f(x), S_u' = J S_u + R, S_x0' = J S_x0 solved by the same adaptive stepper

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import cho_solve

from odefield.dynamics.odeint import (
    DormandPrince54,
    IntegrationError,
    OdeSolver,
    SolverConfig,
    Trajectory,
)
from odefield.gp.field import InducingSet
from odefield.gp.kernel import DimensionMismatchError, kernel_row, kernel_row_grad
from odefield.utils.logging import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True, eq=False)
class SensitivityState:
    """Sensitivities at every requested time.

    ``s_u[n, i, m, d]`` is dx_i(t_n) / dU[m, d] and ``s_x0[n, i, j]`` is dx_i(t_n) / dx0_j.
    J mixes state dimensions, so every (i, d) pair is kept; only the forcing term R
    is block diagonal.
    """

    s_u: NDArray[np.float64]
    s_x0: NDArray[np.float64]

    @property
    def size(self) -> int:
        return self.s_u.shape[0]

    @property
    def matrix(self) -> NDArray[np.float64]:
        """Dense D x (M*D) matrices, one per time, with u_{m,d} at column m*D + d."""
        n, dim, m, _ = self.s_u.shape
        return self.s_u.reshape(n, dim, m * dim)

    def at(self, index: int) -> SensitivityState:
        return SensitivityState(self.s_u[index : index + 1], self.s_x0[index : index + 1])


class _AugmentedRhs:
    """Right-hand side of the state plus sensitivity system for one inducing set."""

    def __init__(self, inducing: InducingSet):
        self.inducing = inducing
        self.dim = inducing.dim
        self.size = inducing.size
        self.n_su = self.dim * self.size * self.dim
        self._diag = np.arange(self.dim)

    @property
    def width(self) -> int:
        return self.dim + self.n_su + self.dim * self.dim

    def split(self, y: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
        d = self.dim
        x = y[..., :d]
        su = y[..., d : d + self.n_su].reshape(*y.shape[:-1], d, self.size, d)
        sx = y[..., d + self.n_su :].reshape(*y.shape[:-1], d, d)
        return x, su, sx

    def initial(self, x0: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.concatenate([x0, np.zeros(self.n_su), np.eye(self.dim).ravel()])

    def __call__(self, _t: float, y: NDArray[np.float64]) -> NDArray[np.float64]:
        inducing = self.inducing
        x, su, sx = self.split(y)
        row = kernel_row(x, inducing.locations, inducing.kernel)
        fx = row @ inducing.alpha
        jac = inducing.alpha.T @ kernel_row_grad(x, inducing.locations, row, inducing.kernel)
        weights = cho_solve((inducing.lower, True), row)

        d_su = np.tensordot(jac, su, axes=1)
        d_su[self._diag, :, self._diag] += weights
        d_sx = jac @ sx
        return np.concatenate([fx, d_su.ravel(), d_sx.ravel()])


def integrate_with_sensitivities(
    inducing: InducingSet,
    x0: ArrayLike,
    times: ArrayLike,
    cfg: SolverConfig | None = None,
    *,
    start: float = 0.0,
    solver: OdeSolver | None = None,
) -> tuple[Trajectory, SensitivityState]:
    """Integrate the learned field together with dx/dU and dx/dx0.

    Error control covers the sensitivity components with the same tolerances as the state;
    only the state takes part in the divergence check.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != inducing.dim:
        raise DimensionMismatchError(f"initial state has {x0.size} entries, field has dimension {inducing.dim}")
    rhs = _AugmentedRhs(inducing)
    solver = solver or DormandPrince54(cfg)

    try:
        augmented = solver.solve(rhs, rhs.initial(x0), times, start=start, monitored=inducing.dim)
    except IntegrationError as e:
        logger.debug("Sensitivity integration failed", error=str(e), last_time=e.last_time, inducing=inducing.size)
        raise

    states, s_u, s_x0 = rhs.split(augmented)
    return Trajectory(np.asarray(times, dtype=float), states), SensitivityState(s_u.copy(), s_x0.copy())
