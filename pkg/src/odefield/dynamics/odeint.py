# ABOUTME: Adaptive Dormand-Prince 5(4) integration with 4th-order dense output at requested times
# ABOUTME: Trajectory and SolverConfig value types plus the integration error hierarchy

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass
from typing import Protocol

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field

from odefield.utils.logging import get_logger

logger = get_logger(__name__)

DIVERGENCE_NORM = 1e9

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0

Rhs = Callable[[float, NDArray[np.float64]], NDArray[np.float64]]
VectorField = Callable[[NDArray[np.float64]], ArrayLike]


class IntegrationError(RuntimeError):
    """Base class for failed integrations; ``last_time`` is the last successfully reached time."""

    def __init__(self, message: str, last_time: float):
        self.last_time = last_time
        super().__init__(f"{message} (last valid time {last_time:.6g})")


class DivergenceError(IntegrationError):
    """Step size underflow or a state that left the finite region."""


class StepBudgetError(IntegrationError):
    """More steps than ``SolverConfig.max_steps`` were needed."""


class SolverConfig(BaseModel):
    """Tolerances and limits of the adaptive integrator."""

    model_config = ConfigDict(frozen=True)

    rtol: float = Field(default=1e-6, gt=0, description="Relative tolerance")
    atol: float = Field(default=1e-8, gt=0, description="Absolute tolerance")
    first_step: float | None = Field(default=None, gt=0, description="Initial step, estimated when unset")
    max_steps: int = Field(default=100_000, gt=0, description="Accepted plus rejected steps per integration")
    max_step: float | None = Field(default=None, gt=0, description="Largest allowed step, unbounded when unset")

    def halved(self) -> SolverConfig:
        return self.model_copy(update={"rtol": self.rtol / 2, "atol": self.atol / 2})


def _frozen(array: NDArray[np.float64]) -> NDArray[np.float64]:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Ordered (time, state) samples; ``noise`` optionally holds a per-dimension noise scale."""

    times: NDArray[np.float64]
    states: NDArray[np.float64]
    noise: NDArray[np.float64] | None = None

    def __post_init__(self) -> None:
        times = np.array(self.times, dtype=float).reshape(-1)
        states = np.array(self.states, dtype=float)
        if states.ndim == 1:
            states = states.reshape(times.size, -1)
        if times.size == 0:
            raise ValueError("a trajectory needs at least one sample")
        if states.ndim != 2 or states.shape[0] != times.size:
            raise ValueError(f"states shape {states.shape} does not match {times.size} times")
        if not np.all(np.isfinite(times)):
            raise ValueError("times must be finite")
        if np.any(np.diff(times) <= 0):
            bad = int(np.argmax(np.diff(times) <= 0)) + 1
            raise ValueError(f"times must be strictly increasing (sample {bad}: {times[bad]!r})")
        if not np.all(np.isfinite(states)):
            raise ValueError("states must be finite")
        object.__setattr__(self, "times", _frozen(times))
        object.__setattr__(self, "states", _frozen(states))
        if self.noise is not None:
            noise = np.array(self.noise, dtype=float).reshape(-1)
            if noise.shape != (states.shape[1],) or np.any(noise < 0):
                raise ValueError(f"noise must be {states.shape[1]} nonnegative scales")
            object.__setattr__(self, "noise", _frozen(noise))

    @property
    def size(self) -> int:
        return self.times.size

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def select(self, mask: ArrayLike) -> Trajectory:
        """Samples picked by a boolean mask or an index array, noise carried over."""
        return Trajectory(self.times[mask], self.states[mask], self.noise)

    def with_states(self, states: ArrayLike) -> Trajectory:
        return Trajectory(self.times, np.asarray(states, dtype=float), self.noise)

    def with_noise(self, noise: ArrayLike | None) -> Trajectory:
        return Trajectory(self.times, self.states, noise)


class OdeSolver(Protocol):
    """Anything that integrates ``rhs`` from ``y0`` at ``start`` and samples it at ``times``."""

    def solve(
        self, rhs: Rhs, y0: ArrayLike, times: ArrayLike, *, start: float = 0.0, monitored: int | None = None
    ) -> NDArray[np.float64]: ...


class DormandPrince54:
    """Explicit embedded Runge-Kutta 5(4) pair with FSAL and Shampine's 4th-order continuous extension.

    Local error is controlled in the max norm with per-component scale
    ``atol + rtol * max(|y|, |y_new|)``.
    """

    C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
    A = (
        (),
        (1 / 5,),
        (3 / 40, 9 / 40),
        (44 / 45, -56 / 15, 32 / 9),
        (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
        (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    )
    B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
    B_HAT = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
    E = B - B_HAT
    ORDER = 5
    # y(t + theta h) = y + h * sum_i k_i * (P[i] @ [theta, theta^2, theta^3, theta^4])
    P = np.array(
        [
            [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
            [0, 0, 0, 0],
            [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
            [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
            [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
            [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
            [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
        ]
    )

    def __init__(self, config: SolverConfig | None = None):
        self.config = config or SolverConfig()

    def _step(
        self, rhs: Rhs, t: float, y: NDArray[np.float64], f: NDArray[np.float64], h: float
    ) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
        """One step of size ``h``; returns the new state, the error estimate and all seven stages."""
        k = np.empty((7, y.size))
        k[0] = f
        for i in range(1, 6):
            dy = np.dot(self.A[i], k[:i])
            k[i] = rhs(t + self.C[i] * h, y + h * dy)
        y_new = y + h * np.dot(self.B[:6], k[:6])
        k[6] = rhs(t + h, y_new)
        error = h * np.dot(self.E, k)
        return y_new, error, k

    def _initial_step(self, rhs: Rhs, t: float, y: NDArray[np.float64], f: NDArray[np.float64]) -> float:
        cfg = self.config
        scale = cfg.atol + cfg.rtol * np.abs(y)
        d0 = np.sqrt(np.mean((y / scale) ** 2))
        d1 = np.sqrt(np.mean((f / scale) ** 2))
        h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        f1 = rhs(t + h0, y + h0 * f)
        d2 = np.sqrt(np.mean(((f1 - f) / scale) ** 2)) / h0
        if not np.isfinite(d2):
            return h0
        if max(d1, d2) <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** (1.0 / self.ORDER)
        return float(min(100 * h0, h1))

    def _dense(self, theta: float, h: float, y: NDArray[np.float64], k: NDArray[np.float64]) -> NDArray[np.float64]:
        powers = np.cumprod(np.full(4, theta))
        return y + h * (k.T @ (self.P @ powers))

    def solve(
        self, rhs: Rhs, y0: ArrayLike, times: ArrayLike, *, start: float = 0.0, monitored: int | None = None
    ) -> NDArray[np.float64]:
        """Integrate from ``start`` and return the state at every requested time, shape (N, len(y0)).

        Only the first ``monitored`` components (all when None) take part in the divergence check.
        """
        cfg = self.config
        times = np.asarray(times, dtype=float).reshape(-1)
        if times.size == 0:
            raise ValueError("at least one output time is required")
        if times[0] < start:
            raise ValueError(f"output times must not precede the start time {start}")
        if np.any(np.diff(times) <= 0):
            raise ValueError("output times must be strictly increasing")

        t = float(start)
        y = np.array(y0, dtype=float).reshape(-1)
        watch = slice(None) if monitored is None else slice(0, monitored)
        out = np.empty((times.size, y.size))

        k = 0
        while k < times.size and times[k] == t:
            out[k] = y
            k += 1
        if k == times.size:
            return out

        t_end = float(times[-1])
        max_step = cfg.max_step or np.inf
        with np.errstate(over="ignore", invalid="ignore"):
            f = rhs(t, y)
            h = cfg.first_step or self._initial_step(rhs, t, y, f)
        h = min(h, max_step, t_end - t)
        # steps that would stop closer than this to the final time are stretched onto it
        end_slack = 16 * np.spacing(max(abs(t_end), 1.0))
        steps = 0

        while k < times.size:
            if steps >= cfg.max_steps:
                raise StepBudgetError(f"step budget of {cfg.max_steps} exhausted", t)
            remaining = t_end - t
            if h <= 16 * np.spacing(max(abs(t), 1.0)) and remaining > end_slack:
                raise DivergenceError("step size underflow", t)

            if remaining - h <= end_slack:
                h = remaining
                t_new = t_end
            else:
                t_new = t + h

            with np.errstate(over="ignore", invalid="ignore"):
                y_new, error, stages = self._step(rhs, t, y, f, h)
                f_new = stages[6]
                scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
                err_norm = float(np.max(np.abs(error) / scale))
            steps += 1

            if not np.isfinite(err_norm) or not np.all(np.isfinite(y_new)):
                h *= MIN_FACTOR
                continue

            if err_norm > 1.0:
                h *= max(MIN_FACTOR, SAFETY * err_norm ** (-1.0 / self.ORDER))
                continue

            while k < times.size and times[k] <= t_new:
                if times[k] == t_new:
                    out[k] = y_new
                else:
                    out[k] = self._dense((times[k] - t) / h, h, y, stages)
                k += 1

            t, y, f = t_new, y_new, f_new
            if np.linalg.norm(y[watch]) > DIVERGENCE_NORM:
                raise DivergenceError(f"state norm exceeded {DIVERGENCE_NORM:g}", t)

            factor = MAX_FACTOR if err_norm == 0.0 else SAFETY * err_norm ** (-1.0 / self.ORDER)
            h = min(h * min(MAX_FACTOR, max(MIN_FACTOR, factor)), max_step)
            if t < t_end:
                h = min(h, t_end - t)

        return out


def integrate(
    field: VectorField,
    x0: ArrayLike,
    times: ArrayLike,
    cfg: SolverConfig | None = None,
    *,
    start: float = 0.0,
    solver: OdeSolver | None = None,
) -> Trajectory:
    """Solve x' = field(x) from x(start) = x0 and sample the solution at ``times``."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    solver = solver or DormandPrince54(cfg)

    def rhs(_t: float, y: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.asarray(field(y), dtype=float)

    try:
        states = solver.solve(rhs, x0, times, start=start)
    except IntegrationError as e:
        logger.debug("Integration failed", error=str(e), last_time=e.last_time)
        raise
    return Trajectory(np.asarray(times, dtype=float), states)
