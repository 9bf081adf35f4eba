"""Manifold representations built on an embedding of fitted curves.

The inverse of the embedding map is estimated by kernel-weighted
averaging of fitted curves: a point in representation space pulls in
every curve whose embedded location falls inside an isotropic kernel
window around it.  The kernel weight depends on coordinates only
through the Euclidean distance, so every output is equivariant under
rotations of the representation space.  On top of the inverse map sit
the manifold mean, per-axis modes of variation, leave-self-out
predictions of each subject's curve, and the eigendecomposition of
the embedding covariance whose axes define the functional manifold
components.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyNeighborhoodError
from .grids import GridFunction
from .smoothing import kernel_profile

# Number of bandwidth doublings a kernel average may attempt before an
# empty neighborhood becomes a hard error.
MAX_WIDENINGS = 3


@dataclass(frozen=True, eq=False)
class ManifoldModel:
    """Embedding, fitted curves and manifold summaries of a sample.

    Attributes
    ----------
    embedding : Embedding
        Representation-space coordinates of the retained subjects.
    fitted_curves : list of GridFunction
        Denoised curve of each retained subject, aligned with the
        embedding rows.
    h : float
        Kernel bandwidth for inverse-map averaging.
    mean_coords : ndarray
        Average of the embedding rows.
    fmc_eigenvalues : ndarray
        Variances along the principal embedding axes, nonincreasing.
    fmc_vectors : ndarray
        Orthonormal axis matrix, one principal direction per column.
    kernel : str
        Kernel id used for all inverse-map averaging.
    """

    embedding: object
    fitted_curves: list
    h: float
    mean_coords: np.ndarray
    fmc_eigenvalues: np.ndarray
    fmc_vectors: np.ndarray
    kernel: str = "epanechnikov"

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("bandwidth must be positive")
        if len(self.fitted_curves) != self.embedding.coordinates.shape[0]:
            raise ValueError("one fitted curve per embedded subject is required")

    @property
    def n(self):
        return len(self.fitted_curves)

    @property
    def d(self):
        return self.embedding.d

    @property
    def grid(self):
        return self.fitted_curves[0].grid


@dataclass(frozen=True, eq=False)
class FmcScores:
    """Projections of centered embedding rows onto the component axes."""

    scores: np.ndarray


def radial_weights(distances, h, kernel="epanechnikov"):
    """Unnormalized kernel weights for Euclidean distances."""
    kfun, _ = kernel_profile(kernel)
    return kfun(np.asarray(distances, dtype=float) / h)


def kernel_average(theta, coordinates, curve_matrix, h, kernel="epanechnikov", widen=0):
    """Kernel-weighted average of curves around a representation point.

    Parameters
    ----------
    theta : array_like
        Target point in representation space.
    coordinates : ndarray, shape (n, d)
        Embedded locations of the candidate curves.
    curve_matrix : ndarray, shape (n, g)
        Curve values, one row per candidate.
    h : float
        Bandwidth; weights come from the radial kernel at
        ``distance / h``.
    kernel : str
    widen : int
        Number of bandwidth doublings to attempt when no candidate
        carries positive weight.

    Returns
    -------
    ndarray, shape (g,)
        The weighted average; weights are nonnegative and sum to one.

    Raises
    ------
    EmptyNeighborhoodError
        If the neighborhood stays empty after all widenings; carries
        the distance to the nearest candidate.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if coordinates.shape[0] == 0:
        raise EmptyNeighborhoodError(float("inf"), "no candidate curves")
    distances = np.linalg.norm(coordinates - theta[None, :], axis=1)
    bandwidth = float(h)
    for _ in range(int(widen) + 1):
        weights = radial_weights(distances, bandwidth, kernel)
        total = float(weights.sum())
        if total > 0.0:
            return (weights @ curve_matrix) / total
        bandwidth *= 2.0
    raise EmptyNeighborhoodError(float(distances.min()))


def _curve_matrix(curves):
    return np.vstack([f.values for f in curves])


def inverse_map(theta, model, widen=0):
    """Estimate the curve at a representation-space point.

    Kernel-weighted average of all fitted curves around ``theta``
    under the model's bandwidth.
    """
    values = kernel_average(
        theta,
        model.embedding.coordinates,
        _curve_matrix(model.fitted_curves),
        model.h,
        model.kernel,
        widen,
    )
    return GridFunction(model.grid, values)


def predict_curve(i, model, widen=MAX_WIDENINGS):
    """Leave-self-out prediction of subject ``i``'s curve.

    Averages the other subjects' fitted curves around the subject's
    own embedded location; the subject itself never contributes.
    """
    if not 0 <= i < model.n:
        raise ValueError("subject index out of range")
    keep = np.arange(model.n) != i
    values = kernel_average(
        model.embedding.coordinates[i],
        model.embedding.coordinates[keep],
        _curve_matrix(model.fitted_curves)[keep],
        model.h,
        model.kernel,
        widen,
    )
    return GridFunction(model.grid, values)


def manifold_mean(model, widen=0):
    """Curve at the average representation-space location."""
    return inverse_map(model.mean_coords, model, widen)


def fmc_decompose(embedding):
    """Principal axes and variances of the embedding rows.

    Eigendecomposition of the sample covariance (n - 1 denominator);
    eigenvalues nonincreasing and floored at zero, each eigenvector's
    largest-magnitude entry made positive.
    """
    coords = embedding.coordinates
    if coords.shape[0] < 2:
        raise ValueError("need at least 2 subjects to decompose variation")
    cov = np.atleast_2d(np.cov(coords, rowvar=False, ddof=1))
    values, vectors = np.linalg.eigh(cov)
    order = np.argsort(values)[::-1]
    values = np.clip(values[order], 0.0, None)
    vectors = vectors[:, order]
    for k in range(vectors.shape[1]):
        col = vectors[:, k]
        pivot = int(np.argmax(np.abs(col)))
        if col[pivot] < 0:
            vectors[:, k] = -col
    return values, vectors


def manifold_mode(j, alpha, model, widen=0):
    """Mode-of-variation curve along component axis ``j``.

    The target point sits ``alpha`` standard deviations from the mean
    along the axis; ``alpha = 0`` recovers the manifold mean.  Axes
    are numbered from 1.

    Raises
    ------
    EmptyNeighborhoodError
        If the target leaves the data cloud; the message reports the
        largest workable magnitude of ``alpha`` in that direction.
    """
    if not 1 <= j <= model.d:
        raise ValueError(f"axis {j} out of range for a {model.d}-dimensional model")
    spread = float(np.sqrt(model.fmc_eigenvalues[j - 1]))
    theta = model.mean_coords + alpha * spread * model.fmc_vectors[:, j - 1]
    try:
        return inverse_map(theta, model, widen)
    except EmptyNeighborhoodError as err:
        limit = _max_feasible_alpha(model, j, alpha)
        message = f"mode target is outside the data cloud for axis {j}"
        if limit is not None:
            message += f"; largest workable |alpha| in this direction is about {limit:.3g}"
        raise EmptyNeighborhoodError(err.nearest_distance, message) from err


def _max_feasible_alpha(model, j, alpha):
    """Largest |alpha| along axis j (signed like alpha) still covered
    by some subject's kernel support; None for unbounded kernels."""
    _, radius = kernel_profile(model.kernel)
    if not np.isfinite(radius):
        return None
    spread = float(np.sqrt(model.fmc_eigenvalues[j - 1]))
    if spread == 0.0:
        return None
    direction = model.fmc_vectors[:, j - 1] * (1.0 if alpha >= 0 else -1.0)
    centered = model.embedding.coordinates - model.mean_coords[None, :]
    along = centered @ direction
    perp_sq = np.sum(centered * centered, axis=1) - along * along
    reach_sq = (model.h * radius) ** 2 - perp_sq
    covered = reach_sq > 0.0
    if not np.any(covered):
        return None
    endpoints = along[covered] + np.sqrt(reach_sq[covered])
    return float(np.max(endpoints) / spread)


def linear_mode(j, alpha, fpca_model):
    """Eigenfunction-based mode of variation, the linear analogue.

    Returns the mean shifted by ``alpha`` root-eigenvalue multiples of
    eigenfunction ``j`` (numbered from 1).
    """
    if not 1 <= j <= len(fpca_model.eigenvalues):
        raise ValueError(f"component {j} out of range")
    scale = alpha * float(np.sqrt(fpca_model.eigenvalues[j - 1]))
    return GridFunction(
        fpca_model.grid,
        fpca_model.mean.values + scale * fpca_model.eigenfunctions[j - 1].values,
    )


def fmc_scores(model):
    """Component scores of every subject.

    Projects the centered embedding rows onto the component axes; the
    column variances reproduce the component eigenvalues.
    """
    centered = model.embedding.coordinates - model.mean_coords[None, :]
    return FmcScores(scores=centered @ model.fmc_vectors)


def fit_manifold(embedding, fitted_curves, h, kernel="epanechnikov"):
    """Assemble the manifold model from its fitted ingredients."""
    coords = embedding.coordinates
    mean_coords = coords.mean(axis=0)
    eigenvalues, vectors = fmc_decompose(embedding)
    return ManifoldModel(
        embedding=embedding,
        fitted_curves=list(fitted_curves),
        h=float(h),
        mean_coords=mean_coords,
        fmc_eigenvalues=eigenvalues,
        fmc_vectors=vectors,
        kernel=kernel,
    )
