# ABOUTME: Explicit log posterior of the ODE model and its gradient from forward sensitivities
# ABOUTME: Whitened prior, Gaussian observation noise per dimension, finite-difference sigma_f derivative

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from odefield.dynamics.odeint import IntegrationError, SolverConfig, integrate
from odefield.dynamics.sensitivity import integrate_with_sensitivities
from odefield.gp.field import InducingSet
from odefield.gp.kernel import DimensionMismatchError, NonPositiveDefiniteError
from odefield.model.params import Dataset, ModelParams, ParamLayout
from odefield.utils.logging import get_logger

logger = get_logger(__name__)

SIGMA_F_STEP = 1e-4

# Failures that make a parameter setting infeasible rather than a programming error
INFEASIBLE = (IntegrationError, NonPositiveDefiniteError)


@dataclass(frozen=True)
class PosteriorTerms:
    """Additive pieces of the log posterior, 2 pi constants dropped."""

    prior: float
    log_det: float
    misfit: float
    normalizer: float

    @property
    def total(self) -> float:
        return self.prior + self.log_det + self.misfit + self.normalizer

    def as_dict(self) -> dict[str, float]:
        return {
            "prior": self.prior,
            "log_det": self.log_det,
            "misfit": self.misfit,
            "normalizer": self.normalizer,
            "total": self.total,
        }


@dataclass(frozen=True, eq=False)
class _DataGradient:
    misfit: float
    normalizer: float
    u: NDArray[np.float64]
    x0: NDArray[np.float64]
    log_omega: NDArray[np.float64]


def _check(params: ModelParams, data: Dataset) -> None:
    if params.dim != data.dim:
        raise DimensionMismatchError(f"parameters have dimension {params.dim}, data {data.dim}")
    if params.n_series != data.n_series:
        raise DimensionMismatchError(f"{params.n_series} initial states for {data.n_series} series")


def _prior_terms(params: ModelParams, inducing: InducingSet) -> tuple[float, float]:
    return -0.5 * float(np.sum(params.u_tilde**2)), -0.5 * params.dim * inducing.log_det


def posterior_terms(
    params: ModelParams, data: Dataset, locations: ArrayLike, cfg: SolverConfig | None = None
) -> PosteriorTerms:
    """Break the log posterior into its terms; integration failures propagate."""
    _check(params, data)
    inducing = params.inducing(locations)
    prior, log_det = _prior_terms(params, inducing)
    omega2 = params.omega**2
    misfit = 0.0
    normalizer = 0.0
    for x0, series in zip(params.x0, data, strict=True):
        fitted = integrate(inducing, x0, series.times, cfg, start=float(series.times[0]))
        residual = series.states - fitted.states
        misfit -= 0.5 * float(np.sum(residual**2 / omega2))
        normalizer -= series.size * float(np.sum(params.log_omega))
    return PosteriorTerms(prior=prior, log_det=log_det, misfit=misfit, normalizer=normalizer)


def log_posterior(params: ModelParams, data: Dataset, locations: ArrayLike, cfg: SolverConfig | None = None) -> float:
    """Log posterior value; -inf when the trajectory diverges."""
    try:
        return posterior_terms(params, data, locations, cfg).total
    except INFEASIBLE as e:
        logger.debug("Log posterior infeasible", error=str(e))
        return -np.inf


def _data_gradient(
    params: ModelParams, data: Dataset, inducing: InducingSet, cfg: SolverConfig | None
) -> _DataGradient:
    """Data terms and their gradients with respect to U (unwhitened), x0 and log omega."""
    omega2 = params.omega**2
    grad_u = np.zeros((params.n_inducing, params.dim))
    grad_x0 = np.zeros_like(params.x0)
    grad_log_omega = np.zeros(params.dim)
    misfit = 0.0
    normalizer = 0.0
    for s, (x0, series) in enumerate(zip(params.x0, data, strict=True)):
        fitted, sens = integrate_with_sensitivities(inducing, x0, series.times, cfg, start=float(series.times[0]))
        residual = series.states - fitted.states
        weighted = residual / omega2
        grad_u += np.einsum("ni,nimd->md", weighted, sens.s_u)
        grad_x0[s] = np.einsum("ni,nij->j", weighted, sens.s_x0)
        squared = np.sum(residual**2, axis=0) / omega2
        grad_log_omega += squared - series.size
        misfit -= 0.5 * float(np.sum(squared))
        normalizer -= series.size * float(np.sum(params.log_omega))
    return _DataGradient(misfit, normalizer, grad_u, grad_x0, grad_log_omega)


def _sigma_f_derivative(params: ModelParams, data: Dataset, locations: ArrayLike, cfg: SolverConfig | None) -> float:
    """d log posterior / d log sigma_f by a forward difference in sigma_f, backward if the forward point fails."""
    sigma_f = params.sigma_f
    base = log_posterior(params, data, locations, cfg)
    if not np.isfinite(base):
        return 0.0
    forward = log_posterior(params.replace(log_sigma_f=np.log(sigma_f + SIGMA_F_STEP)), data, locations, cfg)
    if np.isfinite(forward):
        return (forward - base) / SIGMA_F_STEP * sigma_f
    if sigma_f > SIGMA_F_STEP:
        backward = log_posterior(params.replace(log_sigma_f=np.log(sigma_f - SIGMA_F_STEP)), data, locations, cfg)
        if np.isfinite(backward):
            return (base - backward) / SIGMA_F_STEP * sigma_f
    logger.debug("sigma_f difference failed on both sides", sigma_f=sigma_f)
    return 0.0


def log_posterior_and_gradient(
    params: ModelParams, data: Dataset, locations: ArrayLike, cfg: SolverConfig | None = None
) -> tuple[float, NDArray[np.float64]]:
    """Value and flat gradient in the layout of ``ParamLayout``.

    The value comes from the sensitivity-augmented integration so that it matches its gradient.
    A diverging trajectory yields -inf and a NaN gradient.
    """
    _check(params, data)
    layout = ParamLayout.of(params)
    try:
        inducing = params.inducing(locations)
        grads = _data_gradient(params, data, inducing, cfg)
    except INFEASIBLE as e:
        logger.debug("Log posterior infeasible", error=str(e))
        return -np.inf, np.full(layout.size, np.nan)

    prior, log_det = _prior_terms(params, inducing)
    value = prior + log_det + grads.misfit + grads.normalizer
    grad_u_tilde = inducing.lower.T @ grads.u - params.u_tilde
    grad_log_sigma_f = _sigma_f_derivative(params, data, locations, cfg)
    return value, layout.pack(grads.x0, grad_u_tilde, grad_log_sigma_f, grads.log_omega)


def log_posterior_gradient(
    params: ModelParams, data: Dataset, locations: ArrayLike, cfg: SolverConfig | None = None
) -> NDArray[np.float64]:
    return log_posterior_and_gradient(params, data, locations, cfg)[1]


def inducing_vector_gradient(
    params: ModelParams, data: Dataset, locations: ArrayLike, cfg: SolverConfig | None = None
) -> NDArray[np.float64]:
    """Gradient with respect to the unwhitened inducing vectors U, shape (M, D).

    The prior contributes -k(Z,Z)^-1 U; left-multiplying the result by L^T gives the
    whitened gradient.
    """
    _check(params, data)
    inducing = params.inducing(locations)
    return _data_gradient(params, data, inducing, cfg).u - inducing.alpha


class PosteriorObjective:
    """Flat-vector view of the log posterior for the optimiser; lengthscales stay fixed."""

    def __init__(
        self,
        data: Dataset,
        locations: ArrayLike,
        layout: ParamLayout,
        lengthscales: ArrayLike,
        cfg: SolverConfig | None = None,
    ):
        self.data = data
        self.locations = np.asarray(locations, dtype=float)
        self.layout = layout
        self.lengthscales = np.asarray(lengthscales, dtype=float)
        self.cfg = cfg

    def params(self, vector: ArrayLike) -> ModelParams:
        return self.layout.unflatten(vector, self.lengthscales)

    def __call__(self, vector: NDArray[np.float64]) -> tuple[float, NDArray[np.float64]]:
        if not np.all(np.isfinite(vector)):
            return -np.inf, np.full(self.layout.size, np.nan)
        return log_posterior_and_gradient(self.params(vector), self.data, self.locations, self.cfg)
