"""Classical multidimensional scaling and intrinsic dimension choice.

Implements the Torgerson double-centering construction: the squared
distance matrix is centered, eigendecomposed, and the leading
eigenvectors scaled by root eigenvalues give the embedding
coordinates.  Negative eigenvalues, which arise when the input
distances are not exactly Euclidean, are clipped for coordinates but
kept in the reported spectrum as a diagnostic.  The intrinsic
dimension is the smallest embedding dimension whose distances
reproduce the input within a relative Frobenius tolerance.

Coordinates handed to downstream smoothing are always classical.  For
distance-fidelity reporting a stress-majorization refinement is also
provided: the fraction of distances explained is measured against the
configuration minimizing the raw stress, which classical scaling only
approximates when the input distances are not Euclidean.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import DegenerateDataError


@dataclass(frozen=True, eq=False)
class Embedding:
    """Low-dimensional coordinates recovered from a distance matrix.

    Attributes
    ----------
    coordinates : ndarray, shape (n, d)
        One row per retained subject; columns ordered by nonincreasing
        eigenvalue, each centered at zero.
    d : int
        Embedding dimension.
    eigenvalues : ndarray
        Full spectrum of the centered matrix, nonincreasing; trailing
        negative values measure how far the input is from Euclidean.
    source_indices : list of int
        Positions of the retained subjects in the original sample.
    padded : bool
        True when d exceeded the number of positive eigenvalues and
        zero columns were appended.
    """

    coordinates: np.ndarray
    d: int
    eigenvalues: np.ndarray
    source_indices: list
    padded: bool = False

    @property
    def n(self):
        return self.coordinates.shape[0]

    def truncated(self, p):
        """Nested sub-embedding using the first p coordinate columns."""
        if not 1 <= p <= self.d:
            raise ValueError("truncation dimension out of range")
        return Embedding(
            coordinates=self.coordinates[:, :p],
            d=p,
            eigenvalues=self.eigenvalues,
            source_indices=list(self.source_indices),
            padded=self.padded and p > int(np.sum(self.eigenvalues > 0)),
        )


@dataclass(frozen=True)
class DimensionSelection:
    """Result of the distances-explained dimension rule."""

    d: int
    converged: bool
    fde_values: list = field(default_factory=list)


def _double_center(D):
    squared = D * D
    row = squared.mean(axis=1, keepdims=True)
    col = squared.mean(axis=0, keepdims=True)
    return -0.5 * (squared - row - col + squared.mean())


def classical_mds(D, d, source_indices=None):
    """Embed a distance matrix by classical (Torgerson) scaling.

    Parameters
    ----------
    D : array_like, shape (n, n)
        Symmetric distance matrix with zero diagonal, all finite.
    d : int
        Target dimension, between 1 and n - 1.
    source_indices : sequence of int, optional
        Original subject positions for the rows of D; defaults to
        0..n-1.

    Returns
    -------
    Embedding
        Coordinates of the top-d components; if fewer than d positive
        eigenvalues exist the remaining columns are zero and the
        ``padded`` flag is set.  Each column's sign makes its
        largest-magnitude entry positive.
    """
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    if D.shape != (n, n):
        raise ValueError("distance matrix must be square")
    if not np.all(np.isfinite(D)):
        raise ValueError("distance matrix must be finite; embed one component at a time")
    if not 1 <= d <= n - 1:
        raise ValueError("dimension must lie between 1 and n - 1")
    B = _double_center(D)
    B = 0.5 * (B + B.T)
    values, vectors = np.linalg.eigh(B)
    order = np.argsort(values)[::-1]
    values = values[order]
    vectors = vectors[:, order]
    positive = np.clip(values[:d], 0.0, None)
    coords = vectors[:, :d] * np.sqrt(positive)[None, :]
    for k in range(d):
        col = coords[:, k]
        pivot = int(np.argmax(np.abs(col)))
        if col[pivot] < 0:
            coords[:, k] = -col
    if source_indices is None:
        source_indices = list(range(n))
    return Embedding(
        coordinates=coords,
        d=d,
        eigenvalues=values,
        source_indices=list(source_indices),
        padded=bool(np.sum(values > 0.0) < d),
    )


def embedding_distances(embedding):
    """Pairwise Euclidean distances between embedding rows."""
    return squareform(pdist(embedding.coordinates))


STRESS_MAX_ITER = 300
STRESS_TOL = 1e-9


def stress_refine(D, coordinates, max_iter=STRESS_MAX_ITER, tol=STRESS_TOL):
    """Move a configuration toward the raw-stress optimum.

    Applies Guttman-transform majorization steps for the objective
    sum over pairs of (||x_i - x_j|| - D_ij)^2, starting from the
    given configuration, typically a classical-MDS solution.  Each
    step is deterministic, keeps the columns centered, and never
    increases the stress; iteration stops once the relative stress
    decrease falls below ``tol``.  A configuration that reproduces D
    exactly is a fixed point, so exact embeddings pass through
    unchanged.

    Returns the refined coordinate array.
    """
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    X = np.array(coordinates, dtype=float)
    if X.ndim != 2 or X.shape[0] != n:
        raise ValueError("coordinates must have one row per distance-matrix row")
    X -= X.mean(axis=0)
    E = squareform(pdist(X))
    stress = float(np.sum((E - D) ** 2))
    for _ in range(int(max_iter)):
        with np.errstate(divide="ignore", invalid="ignore"):
            B = np.where(E > 0.0, -D / E, 0.0)
        np.fill_diagonal(B, 0.0)
        np.fill_diagonal(B, -B.sum(axis=1))
        X = B @ X / n
        E = squareform(pdist(X))
        updated = float(np.sum((E - D) ** 2))
        if stress - updated <= tol * max(stress, np.finfo(float).tiny):
            break
        stress = updated
    return X


def stress_fde(D, p, max_iter=STRESS_MAX_ITER, tol=STRESS_TOL):
    """Fraction of distances explained after stress refinement.

    Embeds the matrix by classical scaling at dimension p, refines the
    configuration by stress majorization, and evaluates the FDE of the
    result.  The refined value is what distance-fidelity tables
    report: the residual it measures is exactly the minimized stress.
    Coordinates used for downstream smoothing stay classical.
    """
    D = np.asarray(D, dtype=float)
    norm = float(np.linalg.norm(D))
    if norm == 0.0:
        raise DegenerateDataError("distance matrix is identically zero")
    base = classical_mds(D, p)
    refined = stress_refine(D, base.coordinates, max_iter=max_iter, tol=tol)
    distances = squareform(pdist(refined))
    return 1.0 - float(np.linalg.norm(distances - D)) / norm


def fde(D, embedding):
    """Fraction of distances explained by an embedding.

    Defined as 1 - ||D_hat - D||_F / ||D||_F where D_hat collects the
    embedding's pairwise distances; 1 means exact reproduction.
    """
    D = np.asarray(D, dtype=float)
    norm = float(np.linalg.norm(D))
    if norm == 0.0:
        raise DegenerateDataError("distance matrix is identically zero")
    return 1.0 - float(np.linalg.norm(embedding_distances(embedding) - D)) / norm


def dimension_from_fde(fde_values, beta=0.05, dims=None):
    """Dimension rule applied to a precomputed FDE sequence.

    ``fde_values`` holds FDE at dimensions 1, 2, ... in order, or at
    the dimensions listed in ``dims`` when given.  The first dimension
    whose FDE exceeds 1 - beta is selected; when none does, the
    largest evaluated dimension is returned with the ``converged``
    flag unset.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    values = [float(v) for v in fde_values]
    if not values:
        raise ValueError("need at least one FDE value")
    if dims is None:
        dims = range(1, len(values) + 1)
    dims = [int(d) for d in dims]
    if len(dims) != len(values) or sorted(dims) != dims:
        raise ValueError("dims must be increasing and match the FDE values")
    for i, value in enumerate(values):
        if 1.0 - value < beta:
            return DimensionSelection(d=dims[i], converged=True, fde_values=values[: i + 1])
    return DimensionSelection(d=dims[-1], converged=False, fde_values=values)


def select_dimension(D, beta=0.05, d_max=10):
    """Smallest dimension reproducing distances within tolerance.

    Evaluates nested truncations of one classical-MDS solution and
    returns the first dimension whose relative Frobenius error drops
    below beta.  If none does within d_max, returns d_max with the
    ``converged`` flag unset.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    d_max = min(int(d_max), n - 1)
    if d_max < 1:
        raise ValueError("need at least 2 points to select a dimension")
    norm = float(np.linalg.norm(D))
    if norm == 0.0:
        raise DegenerateDataError("distance matrix is identically zero")
    full = classical_mds(D, d_max)
    squared = np.zeros_like(D)
    fde_values = []
    chosen = None
    for p in range(1, d_max + 1):
        diff = full.coordinates[:, p - 1][:, None] - full.coordinates[:, p - 1][None, :]
        squared += diff * diff
        error = float(np.linalg.norm(np.sqrt(squared) - D)) / norm
        fde_values.append(1.0 - error)
        if chosen is None and error < beta:
            chosen = p
            break
    if chosen is None:
        return DimensionSelection(d=d_max, converged=False, fde_values=fde_values)
    return DimensionSelection(d=chosen, converged=True, fde_values=fde_values)
