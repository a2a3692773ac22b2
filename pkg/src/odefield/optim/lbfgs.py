# ABOUTME: Limited-memory BFGS maximiser with a weak-Wolfe bisection line search
# ABOUTME: Works on any value-and-gradient callable; -inf values are treated as rejected trial steps

from __future__ import annotations

from collections import deque
from collections.abc import Callable
from dataclasses import dataclass, field
from enum import StrEnum
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field, model_validator

from odefield.utils.logging import get_logger

logger = get_logger(__name__)

Objective = Callable[[NDArray[np.float64]], tuple[float, NDArray[np.float64]]]


class NonFiniteStartError(ValueError):
    """The objective or its gradient is not finite at the starting point."""


class OptimStatus(StrEnum):
    CONVERGED_GRADIENT = "converged-gradient"
    CONVERGED_OBJECTIVE = "converged-objective"
    MAX_ITERATIONS = "max-iterations"
    LINE_SEARCH_FAILURE = "line-search-failure"

    @property
    def converged(self) -> bool:
        return self in (OptimStatus.CONVERGED_GRADIENT, OptimStatus.CONVERGED_OBJECTIVE)


class OptimConfig(BaseModel):
    """L-BFGS settings."""

    model_config = ConfigDict(frozen=True)

    memory: int = Field(default=10, gt=0, description="Stored (s, y) correction pairs")
    max_iterations: int = Field(default=500, gt=0)
    gradient_tol: float = Field(default=1e-5, gt=0, description="Stop when the gradient infinity-norm falls below")
    objective_tol: float = Field(default=1e-9, gt=0, description="Stop when |df| / max(|f|, 1) falls below")
    c1: float = Field(default=1e-4, gt=0, lt=1, description="Sufficient increase constant")
    c2: float = Field(default=0.9, gt=0, lt=1, description="Curvature constant")
    max_line_search: int = Field(default=40, gt=0, description="Trial points per line search")

    @model_validator(mode="after")
    def _check_wolfe(self) -> OptimConfig:
        if not self.c1 < self.c2:
            raise ValueError(f"Wolfe constants need c1 < c2, got c1={self.c1}, c2={self.c2}")
        return self


class TraceEntry(NamedTuple):
    iteration: int
    value: float
    gradient_norm: float
    step: float


@dataclass(frozen=True, eq=False)
class OptimResult:
    x: NDArray[np.float64]
    value: float
    gradient: NDArray[np.float64]
    status: OptimStatus
    iterations: int
    evaluations: int
    trace: list[TraceEntry] = field(default_factory=list)


class _Negated:
    """Minimisation view of a maximisation objective that counts evaluations."""

    def __init__(self, objective: Objective):
        self.objective = objective
        self.evaluations = 0

    def __call__(self, x: NDArray[np.float64]) -> tuple[float, NDArray[np.float64]]:
        self.evaluations += 1
        value, grad = self.objective(x)
        return -float(value), -np.asarray(grad, dtype=float)


def _finite(f: float, g: NDArray[np.float64]) -> bool:
    return bool(np.isfinite(f) and np.all(np.isfinite(g)))


def _two_loop(
    g: NDArray[np.float64], pairs: deque[tuple[NDArray[np.float64], NDArray[np.float64], float]]
) -> NDArray[np.float64]:
    """H g for the implicit inverse Hessian approximation held in ``pairs``."""
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        q -= a * y
        alphas.append(a)
    if pairs:
        s, y, _ = pairs[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas), strict=True):
        b = rho * (y @ q)
        q += (a - b) * s
    return q


def _line_search(
    fun: _Negated,
    x: NDArray[np.float64],
    f: float,
    slope: float,
    d: NDArray[np.float64],
    alpha: float,
    cfg: OptimConfig,
) -> tuple[float, float, NDArray[np.float64]] | None:
    """Bisection/expansion search for a step meeting both weak Wolfe conditions.

    Returns the last point meeting sufficient decrease if the curvature condition is never
    met, and None when no trial point decreased the objective.
    """
    lo, hi = 0.0, np.inf
    best = None
    for _ in range(cfg.max_line_search):
        f_try, g_try = fun(x + alpha * d)
        if not _finite(f_try, g_try) or f_try > f + cfg.c1 * alpha * slope:
            hi = alpha
        elif g_try @ d < cfg.c2 * slope:
            best = (alpha, f_try, g_try)
            lo = alpha
        else:
            return alpha, f_try, g_try
        alpha = 2.0 * lo if hi == np.inf else 0.5 * (lo + hi)
    return best


def maximize(objective: Objective, x0: ArrayLike, cfg: OptimConfig | None = None) -> OptimResult:
    """Maximise ``objective`` (returning value and gradient) from ``x0`` with L-BFGS."""
    cfg = cfg or OptimConfig()
    fun = _Negated(objective)
    x = np.array(x0, dtype=float).reshape(-1)
    f, g = fun(x)
    if not _finite(f, g):
        raise NonFiniteStartError(f"objective is not finite at the starting point (value {-f})")

    pairs: deque[tuple[NDArray[np.float64], NDArray[np.float64], float]] = deque(maxlen=cfg.memory)
    trace = [TraceEntry(0, -f, float(np.max(np.abs(g), initial=0.0)), 0.0)]
    status = OptimStatus.MAX_ITERATIONS
    iteration = 0
    retried = False

    if trace[0].gradient_norm < cfg.gradient_tol:
        status = OptimStatus.CONVERGED_GRADIENT
    else:
        while iteration < cfg.max_iterations:
            iteration += 1
            d = -_two_loop(g, pairs)
            slope = float(g @ d)
            if not slope < 0:
                pairs.clear()
                d = -g
                slope = float(g @ d)
            alpha0 = 1.0 if pairs else min(1.0, 1.0 / float(np.max(np.abs(g))))

            found = _line_search(fun, x, f, slope, d, alpha0, cfg)
            if found is None:
                if pairs and not retried:
                    # forget curvature and try once more along steepest ascent
                    logger.debug("Line search failed, resetting memory", iteration=iteration)
                    pairs.clear()
                    retried = True
                    continue
                status = OptimStatus.LINE_SEARCH_FAILURE
                break
            retried = False

            alpha, f_new, g_new = found
            s = alpha * d
            y = g_new - g
            sy = float(s @ y)
            if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
                pairs.append((s, y, 1.0 / sy))

            change = abs(f - f_new) / max(abs(f_new), 1.0)
            x = x + s
            f, g = f_new, g_new
            grad_norm = float(np.max(np.abs(g)))
            trace.append(TraceEntry(iteration, -f, grad_norm, alpha))

            if grad_norm < cfg.gradient_tol:
                status = OptimStatus.CONVERGED_GRADIENT
                break
            if change < cfg.objective_tol:
                status = OptimStatus.CONVERGED_OBJECTIVE
                break

    logger.debug(
        "L-BFGS finished",
        status=str(status),
        iterations=iteration,
        evaluations=fun.evaluations,
        value=-f,
    )
    return OptimResult(
        x=x,
        value=-f,
        gradient=-g,
        status=status,
        iterations=iteration,
        evaluations=fun.evaluations,
        trace=trace,
    )
