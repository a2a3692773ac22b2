# ABOUTME: Tests for the inducing-point vector field, its Jacobians, grids and whitening
# ABOUTME: Interpolation at inducing points and Jacobians are checked against direct computation

import numpy as np
import pytest
from pydantic import ValidationError

from odefield.gp.field import (
    GridSpec,
    InducingSet,
    eval_field,
    expand_param_jacobian,
    field_on_grid,
    field_param_jacobian,
    field_state_jacobian,
    make_grid,
    unwhiten,
    whiten,
)
from odefield.gp.kernel import DimensionMismatchError, KernelParams, kernel_matrix


@pytest.fixture
def inducing():
    spec = GridSpec(lower=(-2.0, -1.5), upper=(2.0, 1.5), counts=(4, 3))
    locations = make_grid(spec)
    u = np.random.default_rng(7).normal(size=locations.shape)
    return InducingSet.from_vectors(locations, u, KernelParams.from_linear(1.3, [1.0, 0.8]))


class TestGridSpec:
    """Test grid bounds and construction."""

    def test_make_grid_orders_last_dimension_fastest(self):
        """Grid points enumerate the last coordinate first."""
        points = make_grid(GridSpec(lower=(0.0, 0.0), upper=(1.0, 2.0), counts=(2, 3)))

        np.testing.assert_allclose(points, [[0, 0], [0, 1], [0, 2], [1, 0], [1, 1], [1, 2]])

    def test_size_and_dim(self):
        """Size is the product of the counts."""
        spec = GridSpec(lower=(0.0, 0.0, 0.0), upper=(1.0, 1.0, 1.0), counts=(2, 3, 4))

        assert spec.dim == 3
        assert spec.size == 24
        assert make_grid(spec).shape == (24, 3)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"lower": (0.0,), "upper": (1.0,), "counts": (1,)},
            {"lower": (1.0,), "upper": (1.0,), "counts": (3,)},
            {"lower": (0.0, 0.0), "upper": (1.0,), "counts": (3,)},
        ],
    )
    def test_invalid_boxes_rejected(self, kwargs):
        """Degenerate boxes and mismatched lengths fail validation."""
        with pytest.raises(ValidationError):
            GridSpec(**kwargs)

    def test_around_widens_by_margin(self):
        """The box covers the data plus margin times the span per side."""
        states = np.array([[0.0, 10.0], [2.0, 14.0]])

        spec = GridSpec.around(states, count=5, margin=0.1)

        assert spec.lower == pytest.approx((-0.2, 9.6))
        assert spec.upper == pytest.approx((2.2, 14.4))
        assert spec.counts == (5, 5)

    def test_around_constant_coordinate(self):
        """A constant coordinate still yields a valid box."""
        spec = GridSpec.around(np.array([[1.0, 0.0], [1.0, 1.0]]))

        assert spec.lower[0] < 1.0 < spec.upper[0]


class TestWhitening:
    """Test the whitening transform U~ = L^-1 U."""

    def test_whiten_inverts_unwhiten(self):
        """Whitening undoes unwhitening for a lower-triangular factor."""
        lower = np.linalg.cholesky(np.array([[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 2.0]]))
        u_tilde = np.random.default_rng(3).normal(size=(3, 2))

        np.testing.assert_allclose(whiten(unwhiten(u_tilde, lower), lower), u_tilde)

    def test_inducing_set_u_matches_l_u_tilde(self, inducing):
        """The set's U equals L U~."""
        np.testing.assert_allclose(inducing.u, inducing.lower @ inducing.u_tilde)

    def test_with_kernel_keeps_whitened_vectors(self, inducing):
        """New hyperparameters keep U~ and recompute U."""
        changed = inducing.with_kernel(KernelParams.from_linear(2.0, [1.0, 0.8]))

        np.testing.assert_array_equal(changed.u_tilde, inducing.u_tilde)
        np.testing.assert_allclose(changed.u, changed.lower @ changed.u_tilde)
        assert not np.allclose(changed.u, inducing.u)

    def test_whitened_draws_have_kernel_covariance(self):
        """Standard normal U~ mapped through L has sample covariance K(Z, Z)."""
        locations = make_grid(GridSpec(lower=(-1.0, -1.0), upper=(1.0, 1.0), counts=(2, 2)))
        kernel = KernelParams.from_linear(1.0, [1.0, 1.0])
        k = kernel_matrix(locations, locations, kernel)
        lower = InducingSet.factorize(locations, kernel).lower
        u_tilde = np.random.default_rng(17).standard_normal((locations.shape[0], 10_000))

        draws = unwhiten(u_tilde, lower)

        np.testing.assert_allclose(draws @ draws.T / draws.shape[1], k, atol=0.05)


class TestEvalField:
    """Test field evaluation and Jacobians."""

    def test_interpolates_inducing_vectors(self, inducing):
        """f(z_m) = u_m at every inducing location."""
        for location, u in zip(inducing.locations, inducing.u, strict=True):
            np.testing.assert_allclose(eval_field(location, inducing), u, atol=1e-6)

    def test_far_field_decays_to_zero(self, inducing):
        """Far from the grid the field vanishes."""
        np.testing.assert_allclose(eval_field([50.0, -50.0], inducing), 0.0, atol=1e-12)

    def test_state_shape_checked(self, inducing):
        """States must have exactly D entries."""
        with pytest.raises(DimensionMismatchError):
            eval_field([0.0, 0.0, 0.0], inducing)

    def test_state_jacobian_matches_finite_differences(self, inducing):
        """J agrees with central differences of f."""
        x = np.array([0.3, -0.4])
        eps = 1e-6
        numeric = np.column_stack(
            [(eval_field(x + eps * e, inducing) - eval_field(x - eps * e, inducing)) / (2 * eps) for e in np.eye(2)]
        )

        np.testing.assert_allclose(field_state_jacobian(x, inducing), numeric, rtol=1e-5, atol=1e-8)

    def test_param_jacobian_is_linear_map(self, inducing):
        """f(x) = R(x) vec(U) with R = w(x) kron I_D."""
        x = np.array([-0.7, 0.2])
        weights = field_param_jacobian(x, inducing)
        r = expand_param_jacobian(weights, inducing.dim)

        assert r.shape == (2, inducing.size * 2)
        np.testing.assert_allclose(r @ inducing.u.reshape(-1), eval_field(x, inducing))

    def test_weights_solve_the_kernel_system(self, inducing):
        """w(x) K(Z,Z) = k(x,Z) up to jitter."""
        x = np.array([0.5, 0.5])
        weights = field_param_jacobian(x, inducing)
        row = kernel_matrix(x, inducing.locations, inducing.kernel)[0]

        np.testing.assert_allclose(weights @ inducing.scalar_matrix(), row, atol=1e-6)

    def test_log_det_matches_numpy(self, inducing):
        """log|K| from the Cholesky factor agrees with slogdet."""
        sign, expected = np.linalg.slogdet(inducing.scalar_matrix() + inducing.chol.jitter * np.eye(inducing.size))

        assert sign > 0
        assert inducing.log_det == pytest.approx(expected, rel=1e-8)


class TestFieldOnGrid:
    """Test field export on regular grids."""

    def test_evaluates_any_callable(self):
        """Values come from the given callable at each grid point."""
        spec = GridSpec(lower=(-1.0, -1.0), upper=(1.0, 1.0), counts=(3, 3))

        points, values = field_on_grid(lambda x: np.array([x[1], -x[0]]), spec)

        assert points.shape == values.shape == (9, 2)
        np.testing.assert_allclose(values[:, 0], points[:, 1])
        np.testing.assert_allclose(values[:, 1], -points[:, 0])
