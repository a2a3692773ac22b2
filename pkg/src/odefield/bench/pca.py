# ABOUTME: Principal component analysis by covariance eigendecomposition for high-dimensional series
# ABOUTME: Centering only (no whitening); projection to and reconstruction from the latent space

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import eigh

from odefield.dynamics.odeint import Trajectory


@dataclass(frozen=True, eq=False)
class PcaProjection:
    mean: NDArray[np.float64]
    components: NDArray[np.float64]
    explained_variance_ratio: NDArray[np.float64]

    @property
    def input_dim(self) -> int:
        return self.components.shape[0]

    @property
    def latent_dim(self) -> int:
        return self.components.shape[1]

    def project(self, x: ArrayLike) -> NDArray[np.float64]:
        return pca_project(self, x)

    def reconstruct(self, z: ArrayLike) -> NDArray[np.float64]:
        return pca_reconstruct(self, z)

    def project_trajectory(self, trajectory: Trajectory) -> Trajectory:
        return Trajectory(trajectory.times, self.project(trajectory.states))

    def reconstruct_trajectory(self, trajectory: Trajectory) -> Trajectory:
        return Trajectory(trajectory.times, self.reconstruct(trajectory.states))


def pca_fit(data: ArrayLike, latent_dim: int = 3) -> PcaProjection:
    """Top ``latent_dim`` principal directions of the rows of ``data`` (N x P).

    Components are sorted by decreasing variance and signed so that the largest-magnitude
    entry of each is positive.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    n, p = data.shape
    if latent_dim < 1 or latent_dim > min(n, p) or n <= latent_dim:
        raise ValueError(f"latent dimension {latent_dim} needs 1 <= d <= min(N, P) and N > d, data is {n}x{p}")

    mean = data.mean(axis=0)
    centered = data - mean
    covariance = centered.T @ centered / (n - 1)
    eigenvalues, eigenvectors = eigh(covariance)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.clip(eigenvalues[order], 0.0, None)
    eigenvectors = eigenvectors[:, order]

    components = eigenvectors[:, :latent_dim]
    pivots = np.argmax(np.abs(components), axis=0)
    signs = np.sign(components[pivots, np.arange(latent_dim)])
    components = components * np.where(signs == 0, 1.0, signs)

    total = eigenvalues.sum()
    ratio = eigenvalues[:latent_dim] / total if total > 0 else np.zeros(latent_dim)
    return PcaProjection(mean=mean, components=components, explained_variance_ratio=ratio)


def pca_project(projection: PcaProjection, x: ArrayLike) -> NDArray[np.float64]:
    """P-vector (or N x P rows) to latent coordinates."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != projection.input_dim:
        raise ValueError(f"expected {projection.input_dim} features, got {x.shape[-1]}")
    return (x - projection.mean) @ projection.components


def pca_reconstruct(projection: PcaProjection, z: ArrayLike) -> NDArray[np.float64]:
    """Latent d-vector (or N x d rows) back to the original space."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != projection.latent_dim:
        raise ValueError(f"expected {projection.latent_dim} latent coordinates, got {z.shape[-1]}")
    return z @ projection.components.T + projection.mean
