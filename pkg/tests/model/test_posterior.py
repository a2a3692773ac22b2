# ABOUTME: Tests for the log posterior, its term breakdown and the sensitivity-based gradient
# ABOUTME: Gradients are checked coordinate-wise against central differences of the value

import numpy as np
import pytest

from odefield.dynamics.odeint import SolverConfig, Trajectory, integrate
from odefield.gp.field import GridSpec, eval_field, make_grid
from odefield.gp.kernel import DimensionMismatchError
from odefield.model.params import Dataset, ModelParams, ParamLayout
from odefield.model.posterior import (
    PosteriorObjective,
    inducing_vector_gradient,
    log_posterior,
    log_posterior_and_gradient,
    posterior_terms,
)

TIGHT = SolverConfig(rtol=1e-10, atol=1e-12)


def numeric_gradient(params, data, locations, cfg, indices, eps=1e-5):
    layout = ParamLayout.of(params)
    base = layout.flatten(params)
    out = []
    for i in indices:
        step = np.zeros_like(base)
        step[i] = eps
        plus = log_posterior(layout.unflatten(base + step, params.lengthscales), data, locations, cfg)
        minus = log_posterior(layout.unflatten(base - step, params.lengthscales), data, locations, cfg)
        out.append((plus - minus) / (2 * eps))
    return np.array(out)


class TestPosteriorTerms:
    """Test the value of the log posterior."""

    def test_total_matches_log_posterior(self, spiral_params, spiral_data, spiral_locations):
        """The terms sum to the log posterior."""
        terms = posterior_terms(spiral_params, spiral_data, spiral_locations)

        assert terms.total == pytest.approx(log_posterior(spiral_params, spiral_data, spiral_locations))
        assert set(terms.as_dict()) == {"prior", "log_det", "misfit", "normalizer", "total"}

    def test_prior_term(self, spiral_params, spiral_data, spiral_locations):
        """The whitened prior is -1/2 ||U~||^2."""
        terms = posterior_terms(spiral_params, spiral_data, spiral_locations)

        assert terms.prior == pytest.approx(-0.5 * np.sum(spiral_params.u_tilde**2))

    def test_normalizer_term(self, spiral_params, spiral_data, spiral_locations):
        """The noise normalizer is -N sum log omega over all observations."""
        terms = posterior_terms(spiral_params, spiral_data, spiral_locations)

        assert terms.normalizer == pytest.approx(-spiral_data.n_points * np.sum(spiral_params.log_omega))

    def test_value_matches_augmented_value(self, spiral_params, spiral_data, spiral_locations, tight_solver):
        """Plain and sensitivity-augmented integrations agree on the value."""
        value, _ = log_posterior_and_gradient(spiral_params, spiral_data, spiral_locations, tight_solver)

        expected = log_posterior(spiral_params, spiral_data, spiral_locations, tight_solver)
        assert value == pytest.approx(expected, rel=1e-7)

    def test_mismatched_series_count(self, spiral_params, spiral_data, spiral_locations):
        """One initial state per series is required."""
        with pytest.raises(DimensionMismatchError):
            posterior_terms(spiral_params.replace(x0=spiral_params.x0[:1]), spiral_data, spiral_locations)

    def test_infeasible_integration_is_minus_inf(self, spiral_params, spiral_data, spiral_locations):
        """A failed integration gives -inf and a NaN gradient."""
        cfg = SolverConfig(max_steps=2)

        assert log_posterior(spiral_params, spiral_data, spiral_locations, cfg) == -np.inf
        value, grad = log_posterior_and_gradient(spiral_params, spiral_data, spiral_locations, cfg)
        assert value == -np.inf
        assert np.all(np.isnan(grad))


class TestGradient:
    """Test the analytic gradient against finite differences."""

    def test_x0_gradient(self, spiral_params, spiral_data, spiral_locations, tight_solver):
        """Initial state components."""
        layout = ParamLayout.of(spiral_params)
        indices = list(range(layout.x0.start, layout.x0.stop))

        _, grad = log_posterior_and_gradient(spiral_params, spiral_data, spiral_locations, tight_solver)
        numeric = numeric_gradient(spiral_params, spiral_data, spiral_locations, tight_solver, indices)

        np.testing.assert_allclose(grad[indices], numeric, rtol=1e-4, atol=1e-3)

    def test_whitened_u_gradient(self, spiral_params, spiral_data, spiral_locations, tight_solver):
        """Whitened inducing vector components."""
        layout = ParamLayout.of(spiral_params)
        indices = list(range(layout.u_tilde.start, layout.u_tilde.stop, 3))

        _, grad = log_posterior_and_gradient(spiral_params, spiral_data, spiral_locations, tight_solver)
        numeric = numeric_gradient(spiral_params, spiral_data, spiral_locations, tight_solver, indices)

        np.testing.assert_allclose(grad[indices], numeric, rtol=1e-4, atol=1e-3)

    def test_log_omega_gradient(self, spiral_params, spiral_data, spiral_locations, tight_solver):
        """Noise components."""
        layout = ParamLayout.of(spiral_params)
        indices = list(range(layout.log_omega.start, layout.log_omega.stop))

        _, grad = log_posterior_and_gradient(spiral_params, spiral_data, spiral_locations, tight_solver)
        numeric = numeric_gradient(spiral_params, spiral_data, spiral_locations, tight_solver, indices)

        np.testing.assert_allclose(grad[indices], numeric, rtol=1e-5, atol=1e-3)

    def test_log_sigma_f_gradient(self, spiral_params, spiral_data, spiral_locations, tight_solver):
        """The one-sided sigma_f difference approximates the central difference."""
        layout = ParamLayout.of(spiral_params)

        _, grad = log_posterior_and_gradient(spiral_params, spiral_data, spiral_locations, tight_solver)
        numeric = numeric_gradient(spiral_params, spiral_data, spiral_locations, tight_solver, [layout.log_sigma_f])

        assert grad[layout.log_sigma_f] == pytest.approx(numeric[0], rel=2e-2, abs=5e-2)

    def test_whitened_identity(self, spiral_params, spiral_data, spiral_locations, tight_solver):
        """L^T times the unwhitened gradient equals the whitened gradient."""
        layout = ParamLayout.of(spiral_params)
        inducing = spiral_params.inducing(spiral_locations)

        unwhitened = inducing_vector_gradient(spiral_params, spiral_data, spiral_locations, tight_solver)
        _, grad = log_posterior_and_gradient(spiral_params, spiral_data, spiral_locations, tight_solver)

        whitened = grad[layout.u_tilde].reshape(spiral_params.n_inducing, spiral_params.dim)
        np.testing.assert_allclose(inducing.lower.T @ unwhitened, whitened, rtol=1e-8, atol=1e-8)


class TestPosteriorObjective:
    """Test the flat-vector objective wrapper."""

    def test_matches_direct_call(self, spiral_params, spiral_data, spiral_locations):
        """The objective evaluates the posterior of the unflattened vector."""
        layout = ParamLayout.of(spiral_params)
        objective = PosteriorObjective(spiral_data, spiral_locations, layout, spiral_params.lengthscales)

        value, grad = objective(layout.flatten(spiral_params))
        expected, expected_grad = log_posterior_and_gradient(spiral_params, spiral_data, spiral_locations)

        assert value == expected
        np.testing.assert_array_equal(grad, expected_grad)

    def test_non_finite_vector(self, spiral_params, spiral_data, spiral_locations):
        """Non-finite vectors are infeasible."""
        layout = ParamLayout.of(spiral_params)
        objective = PosteriorObjective(spiral_data, spiral_locations, layout, spiral_params.lengthscales)
        vector = layout.flatten(spiral_params)
        vector[0] = np.inf

        value, grad = objective(vector)

        assert value == -np.inf
        assert grad.shape == (layout.size,)


# (state dimension, inducing points) combinations cycled through by the seeded instances
SHAPES = [(1, 4), (1, 9), (1, 27), (2, 4), (2, 9), (3, 27)]
SPACING = 0.5


def random_instance(seed):
    """A model with one series of 5 noisy observations on [0, 1] generated by its own field."""
    dim, size = SHAPES[seed % len(SHAPES)]
    count = round(size ** (1 / dim))
    half = SPACING * (count - 1) / 2
    locations = make_grid(GridSpec(lower=(-half,) * dim, upper=(half,) * dim, counts=(count,) * dim))
    rng = np.random.default_rng(seed)
    params = ModelParams(
        x0=rng.uniform(-0.5, 0.5, (1, dim)),
        u_tilde=0.5 * rng.standard_normal((size, dim)),
        log_sigma_f=0.0,
        lengthscales=np.full(dim, SPACING),
        log_omega=np.log(np.full(dim, 0.2)),
    )
    times = np.sort(rng.uniform(0.0, 1.0, 5))
    clean = integrate(params.inducing(locations), params.x0[0], times, TIGHT, start=float(times[0]))
    data = Dataset.of(Trajectory(times, clean.states + 0.1 * rng.standard_normal(clean.states.shape)))
    return params, data, locations


class TestGradientSuite:
    """Test the full gradient on seeded random instances of every supported shape."""

    @pytest.mark.parametrize("seed", range(20))
    def test_gradient_matches_central_differences(self, seed):
        """Every component agrees with central differences; sigma_f uses a one-sided difference."""
        params, data, locations = random_instance(seed)
        layout = ParamLayout.of(params)
        exact = [i for i in range(layout.size) if i != layout.log_sigma_f]

        _, grad = log_posterior_and_gradient(params, data, locations, TIGHT)
        numeric = numeric_gradient(params, data, locations, TIGHT, range(layout.size))

        scale = max(1.0, float(np.max(np.abs(numeric))))
        np.testing.assert_allclose(grad[exact], numeric[exact], rtol=1e-4, atol=1e-4 * scale)
        assert abs(grad[layout.log_sigma_f] - numeric[layout.log_sigma_f]) < 1e-2 * scale

    @pytest.mark.parametrize("seed", range(10))
    def test_whitened_identity(self, seed):
        """The whitened gradient equals L^T times the unwhitened one."""
        params, data, locations = random_instance(seed)
        layout = ParamLayout.of(params)

        unwhitened = inducing_vector_gradient(params, data, locations, TIGHT)
        _, grad = log_posterior_and_gradient(params, data, locations, TIGHT)

        whitened = grad[layout.u_tilde].reshape(params.n_inducing, params.dim)
        lower = params.inducing(locations).lower
        np.testing.assert_allclose(lower.T @ unwhitened, whitened, rtol=1e-8, atol=1e-8)

    @pytest.mark.parametrize("seed", range(6))
    def test_field_interpolates_inducing_vectors(self, seed):
        """f(z_m) = u_m to 1e-8 relative at every inducing location."""
        params, _, locations = random_instance(seed)
        inducing = params.inducing(locations)

        for location, u in zip(locations, inducing.u, strict=True):
            assert np.linalg.norm(eval_field(location, inducing) - u) < 1e-8 * np.linalg.norm(u)
