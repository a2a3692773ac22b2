# ABOUTME: Tests for the PCA projection used on high-dimensional series

import numpy as np
import pytest

from odefield.bench.pca import pca_fit, pca_project, pca_reconstruct
from odefield.dynamics.odeint import Trajectory


@pytest.fixture
def planar_data():
    rng = np.random.default_rng(0)
    latent = rng.standard_normal((40, 2)) * [3.0, 1.0]
    basis = np.linalg.qr(rng.standard_normal((5, 2)))[0]
    return latent @ basis.T + np.arange(5.0)


class TestPca:
    """Test fitting, projecting and reconstructing."""

    def test_exact_reconstruction_of_low_rank_data(self, planar_data):
        """Data on a 2-D affine plane is reconstructed exactly from 2 components."""
        projection = pca_fit(planar_data, latent_dim=2)

        restored = pca_reconstruct(projection, pca_project(projection, planar_data))

        np.testing.assert_allclose(restored, planar_data, atol=1e-10)
        assert projection.explained_variance_ratio.sum() == pytest.approx(1.0)

    def test_components_sorted_and_orthonormal(self, planar_data):
        """Components are orthonormal with decreasing explained variance."""
        projection = pca_fit(planar_data, latent_dim=2)

        np.testing.assert_allclose(projection.components.T @ projection.components, np.eye(2), atol=1e-12)
        assert projection.explained_variance_ratio[0] > projection.explained_variance_ratio[1]

    def test_sign_convention(self, planar_data):
        """The largest-magnitude entry of each component is positive."""
        components = pca_fit(planar_data, latent_dim=2).components

        pivots = np.argmax(np.abs(components), axis=0)
        assert np.all(components[pivots, [0, 1]] > 0)

    def test_projection_is_centred(self, planar_data):
        """Projected training data has zero mean."""
        projection = pca_fit(planar_data, latent_dim=2)

        np.testing.assert_allclose(projection.project(planar_data).mean(axis=0), 0.0, atol=1e-10)

    def test_trajectory_helpers(self, planar_data):
        """Trajectory projection keeps the times."""
        trajectory = Trajectory(np.arange(40.0), planar_data)
        projection = pca_fit(planar_data, latent_dim=2)

        latent = projection.project_trajectory(trajectory)

        assert latent.dim == 2
        np.testing.assert_array_equal(latent.times, trajectory.times)

    @pytest.mark.parametrize("latent_dim", [0, 6])
    def test_invalid_latent_dim(self, planar_data, latent_dim):
        """The latent dimension must fit the data."""
        with pytest.raises(ValueError):
            pca_fit(planar_data, latent_dim=latent_dim)

    def test_feature_count_checked(self, planar_data):
        """Projection rejects vectors of the wrong width."""
        projection = pca_fit(planar_data, latent_dim=2)

        with pytest.raises(ValueError):
            pca_project(projection, np.zeros(4))
        with pytest.raises(ValueError):
            pca_reconstruct(projection, np.zeros(3))
