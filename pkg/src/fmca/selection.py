"""Joint cross-validation of the neighborhood, penalty and bandwidth.

The embedding is recomputed from the whole sample for every
(epsilon, delta) pair; only the kernel averaging step is left-out.
Ten folds are assigned by a seeded shuffle, each validation subject's
curve is predicted from the training folds' fitted curves around its
own embedded location, and the prediction is scored against the noisy
observations at the subject's own time points.  The minimizing triple
is reported together with the full error table.

Geodesic distances and embeddings are cached per (epsilon, delta), so
repeated searches over bandwidths, folds and dimensions reuse them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from .errors import CvInfeasibleError, DegenerateDataError
from .geodesic import (
    all_pairs_geodesic,
    build_graph,
    delta_from_fraction,
    epsilon_lower_bound,
    knn_epsilon_candidates,
    min_epsilon_for_connectivity,
)
from .grids import l2_distance, mean_curve
from .mds import classical_mds, select_dimension, stress_fde
from .smoothing import kernel_profile

DEFAULT_EPSILON_KS = (5, 8, 12)
WIDE_EPSILON_KS = (3, 5, 8, 12, 16)
DEFAULT_DELTA_FRACTIONS = (0.0, 0.02, 0.05, 0.10)


@dataclass(frozen=True)
class CvConfig:
    """Settings for the joint parameter search.

    ``epsilon_candidates`` and ``h_candidates`` override the derived
    grids when given.  Epsilon defaults to the median distances to the
    ``epsilon_ks``-th nearest neighbors, filtered so the largest
    connected component keeps all but ``max_disconnected_fraction`` of
    the subjects.  Delta candidates are density thresholds under which
    the stated fractions of lowest-density subjects are penalized.
    Bandwidths default to a geometric grid of ``n_h`` values from the
    median nearest-neighbor embedding distance to half the embedding
    diameter, derived per embedding.  ``dim`` fixes the embedding
    dimension; when omitted the distances-explained rule picks it per
    (epsilon, delta) pair.
    """

    epsilon_candidates: tuple = None
    epsilon_ks: tuple = DEFAULT_EPSILON_KS
    delta_fractions: tuple = DEFAULT_DELTA_FRACTIONS
    delta_candidates: tuple = None
    h_candidates: tuple = None
    n_h: int = 8
    folds: int = 10
    seed: int = 0
    dim: int = None
    fde_beta: float = 0.05
    d_max: int = 10
    max_disconnected_fraction: float = 0.05
    kernel: str = "epanechnikov"

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("need at least 2 folds")
        for f in self.delta_fractions:
            if not 0.0 <= f <= 1.0:
                raise ValueError("delta fractions must lie in [0, 1]")
        if self.n_h < 1:
            raise ValueError("need at least one bandwidth candidate")


@dataclass(frozen=True)
class CvRow:
    """One evaluated parameter triple."""

    epsilon: float
    delta_fraction: float
    delta: float
    h: float
    d: int
    mspe: float
    fold_sspe: tuple
    n_excluded: int


@dataclass(frozen=True)
class CvReport:
    """Search table, the minimizing triple, and the fold layout."""

    rows: tuple
    best: CvRow
    fold_assignment: tuple

    @property
    def best_triple(self):
        return (self.best.epsilon, self.best.delta, self.best.h)


@dataclass(frozen=True, eq=False)
class CachedEmbedding:
    """Embedding artifacts for one (epsilon, delta) pair."""

    indices: list
    matrix: np.ndarray
    embedding: object
    selection: object


class EmbeddingCache:
    """Caches geodesic solves and embeddings keyed by (epsilon, delta).

    All entries are derived deterministically from the distance matrix
    given at construction.
    """

    def __init__(self, D, d_max=10, fde_beta=0.05):
        self.D = np.asarray(D, dtype=float)
        self.d_max = int(d_max)
        self.fde_beta = float(fde_beta)
        self._geodesics = {}
        self._embeddings = {}

    def geodesic(self, epsilon, delta):
        key = (float(epsilon), float(delta))
        if key not in self._geodesics:
            graph = build_graph(self.D, epsilon, delta)
            self._geodesics[key] = all_pairs_geodesic(graph)
        return self._geodesics[key]

    def embedding(self, epsilon, delta):
        """Largest-component embedding at the maximum dimension, with
        the dimension-rule outcome for nested truncations."""
        key = (float(epsilon), float(delta))
        if key not in self._embeddings:
            result = self.geodesic(epsilon, delta)
            indices = result.largest_component()
            matrix = result.distances[np.ix_(indices, indices)]
            d_cap = min(self.d_max, len(indices) - 1)
            embedding = classical_mds(matrix, d_cap, source_indices=indices)
            selection = select_dimension(matrix, beta=self.fde_beta, d_max=d_cap)
            self._embeddings[key] = CachedEmbedding(
                indices=indices, matrix=matrix, embedding=embedding, selection=selection
            )
        return self._embeddings[key]


# Radii probed when reporting distance fidelity: the usual
# nearest-neighbor presets plus quantiles of the pairwise distances,
# so the report covers sparse through half-saturated graphs.
FDE_EPSILON_QUANTILES = (0.02, 0.05, 0.10, 0.20, 0.35, 0.50)
FDE_EPSILON_KS = (5, 8, 12)


def fde_report_grid(D, ks=FDE_EPSILON_KS, quantiles=FDE_EPSILON_QUANTILES):
    """Neighborhood radii over which distance fidelity is reported."""
    D = np.asarray(D, dtype=float)
    floor = epsilon_lower_bound(D)
    offdiag = D[np.triu_indices(D.shape[0], 1)]
    radii = [float(np.quantile(offdiag, q)) for q in quantiles]
    radii.extend(knn_epsilon_candidates(D, ks))
    return tuple(sorted({max(r, floor) for r in radii}))


def fde_table(D, cache=None, dims=(1, 2, 3, 4, 5), epsilons=None):
    """Best stress-refined FDE per dimension over a radius grid.

    For each radius the geodesic distances of the largest component
    are embedded classically, refined by stress majorization, and
    scored; the table keeps the best value per dimension.  Free
    parameters are optimized for fidelity here, separately from the
    prediction-oriented cross-validation.  Dimensions no component is
    large enough to support come back as NaN.
    """
    dims = tuple(int(d) for d in dims)
    if cache is None:
        cache = EmbeddingCache(D)
    if epsilons is None:
        epsilons = fde_report_grid(D)
    best = {d: -math.inf for d in dims}
    for eps in epsilons:
        result = cache.geodesic(eps, 0.0)
        indices = result.largest_component()
        if len(indices) < 2:
            continue
        matrix = result.distances[np.ix_(indices, indices)]
        for d in dims:
            if d > len(indices) - 1:
                continue
            best[d] = max(best[d], float(stress_fde(matrix, d)))
    return {d: (v if math.isfinite(v) else float("nan")) for d, v in best.items()}


def assign_folds(n, folds, seed):
    """Seeded shuffle then round-robin; sizes differ by at most one."""
    order = np.random.default_rng(seed).permutation(n)
    fold_of = np.empty(n, dtype=int)
    fold_of[order] = np.arange(n) % folds
    return fold_of


def derive_h_candidates(coordinates, n_h=8):
    """Geometric bandwidth grid adapted to an embedding.

    Spans the median nearest-neighbor distance up to half the
    diameter of the embedded point cloud.
    """
    dists = pdist(np.asarray(coordinates, dtype=float))
    if dists.size == 0 or float(dists.max()) == 0.0:
        return [1.0]
    full = squareform(dists)
    np.fill_diagonal(full, math.inf)
    nearest = np.min(full, axis=1)
    low = float(np.median(nearest))
    high = float(dists.max()) / 2.0
    low = min(max(low, high * 1e-3), high)
    return [float(v) for v in np.geomspace(low, high, n_h)]


def _fold_predictions(val_coords, train_coords, train_curves, h, kernel, widen):
    """Kernel-average predictions for a block of validation subjects.

    Rows whose neighborhood is empty double their bandwidth up to
    ``widen`` times; a row empty after that raises.
    """
    kfun, _ = kernel_profile(kernel)
    distances = cdist(val_coords, train_coords)
    weights = kfun(distances / h)
    totals = weights.sum(axis=1)
    bandwidth = float(h)
    for _ in range(int(widen)):
        empty = totals <= 0.0
        if not np.any(empty):
            break
        bandwidth *= 2.0
        weights[empty] = kfun(distances[empty] / bandwidth)
        totals = weights.sum(axis=1)
    if np.any(totals <= 0.0):
        row = int(np.argmax(totals <= 0.0))
        raise CvInfeasibleError(
            [f"validation subject at row {row} has an empty neighborhood"]
        )
    return (weights / totals[:, None]) @ train_curves


def cross_validate(samples, curves, config=None, D=None, cache=None):
    """Search (epsilon, delta, h) by 10-fold cross-validation.

    Parameters
    ----------
    samples : list of CurveSample
        Observed data; prediction errors are taken against the noisy
        values at each subject's own times.
    curves : list of GridFunction
        Fitted curves feeding the geodesic distances and the kernel
        averages, aligned with ``samples``.
    config : CvConfig, optional
    D : ndarray, optional
        Pairwise L2 distances of ``curves``; computed when omitted.
    cache : EmbeddingCache, optional
        Reusable geodesic/embedding cache for this distance matrix.

    Returns
    -------
    CvReport

    Raises
    ------
    CvInfeasibleError
        If every candidate triple fails to produce predictions.
    """
    from .geodesic import pairwise_l2

    config = config or CvConfig()
    n = len(samples)
    if len(curves) != n:
        raise ValueError("samples and curves must align")
    if D is None:
        D = pairwise_l2(curves)
    if cache is None:
        cache = EmbeddingCache(D, d_max=config.d_max, fde_beta=config.fde_beta)

    if config.epsilon_candidates is not None:
        epsilons = [float(e) for e in config.epsilon_candidates]
    else:
        # Derived presets are floored so that no candidate strands
        # more than the allowed fraction of subjects; explicit
        # candidates are taken as given and only filtered.
        floor = epsilon_lower_bound(D, config.max_disconnected_fraction)
        epsilons = [
            max(e, floor) for e in knn_epsilon_candidates(D, config.epsilon_ks)
        ]
    epsilons = list(dict.fromkeys(epsilons))
    epsilons = min_epsilon_for_connectivity(
        D, epsilons, config.max_disconnected_fraction
    )

    fold_of = assign_folds(n, config.folds, config.seed)
    curve_matrix = np.vstack([f.values for f in curves])
    grid = curves[0].grid

    rows = []
    diagnostics = []
    for epsilon in epsilons:
        if config.delta_candidates is not None:
            deltas = [(math.nan, float(v)) for v in config.delta_candidates]
        else:
            graph = build_graph(D, epsilon, 0.0)
            deltas = []
            for fraction in config.delta_fractions:
                delta = delta_from_fraction(graph.density, fraction)
                if any(d == delta for _, d in deltas):
                    continue
                deltas.append((fraction, delta))
        for fraction, delta in deltas:
            cached = cache.embedding(epsilon, delta)
            indices = np.asarray(cached.indices, dtype=int)
            n_excluded = n - indices.size
            if indices.size < 2:
                diagnostics.append(
                    f"epsilon={epsilon:g} delta={delta:g}: component too small"
                )
                continue
            d_used = config.dim or cached.selection.d
            d_used = min(d_used, cached.embedding.d)
            coords = cached.embedding.coordinates[:, :d_used]
            if config.h_candidates is not None:
                h_grid = [float(h) for h in config.h_candidates]
            else:
                h_grid = derive_h_candidates(coords, config.n_h)
            for h in h_grid:
                row = _evaluate_triple(
                    samples,
                    curve_matrix,
                    grid,
                    coords,
                    indices,
                    fold_of,
                    config,
                    epsilon,
                    fraction,
                    delta,
                    h,
                    d_used,
                    n_excluded,
                )
                if row is None:
                    diagnostics.append(
                        f"epsilon={epsilon:g} delta={delta:g} h={h:g}: empty neighborhood"
                    )
                else:
                    rows.append(row)
    if not rows:
        raise CvInfeasibleError(diagnostics or ["no feasible parameter triples"])
    best = min(rows, key=lambda r: r.mspe)
    return CvReport(rows=tuple(rows), best=best, fold_assignment=tuple(int(f) for f in fold_of))


def _evaluate_triple(
    samples,
    curve_matrix,
    grid,
    coords,
    indices,
    fold_of,
    config,
    epsilon,
    fraction,
    delta,
    h,
    d_used,
    n_excluded,
):
    """SSPE accumulation for one triple; None if any fold is empty."""
    from .manifold import MAX_WIDENINGS

    fold_sspe = []
    total_obs = 0
    for k in range(config.folds):
        in_fold = fold_of[indices] == k
        val_pos = np.nonzero(in_fold)[0]
        train_pos = np.nonzero(~in_fold)[0]
        if val_pos.size == 0:
            fold_sspe.append(0.0)
            continue
        if train_pos.size == 0:
            return None
        try:
            predictions = _fold_predictions(
                coords[val_pos],
                coords[train_pos],
                curve_matrix[indices[train_pos]],
                h,
                config.kernel,
                MAX_WIDENINGS,
            )
        except CvInfeasibleError:
            return None
        sspe = 0.0
        for row, pos in enumerate(val_pos):
            sample = samples[int(indices[pos])]
            fitted = np.interp(sample.times, grid.points, predictions[row])
            sspe += float(np.sum((fitted - sample.values) ** 2))
            total_obs += sample.n_obs
        fold_sspe.append(sspe)
    if total_obs == 0:
        return None
    return CvRow(
        epsilon=float(epsilon),
        delta_fraction=float(fraction),
        delta=float(delta),
        h=float(h),
        d=int(d_used),
        mspe=float(sum(fold_sspe) / total_obs),
        fold_sspe=tuple(fold_sspe),
        n_excluded=int(n_excluded),
    )


def mspe(truth, predictions):
    """Mean squared L2 distance between matched curve lists."""
    if len(truth) != len(predictions):
        raise ValueError("truth and predictions must have equal length")
    if not truth:
        raise ValueError("no curves to compare")
    return float(
        np.mean([l2_distance(t, p) ** 2 for t, p in zip(truth, predictions)])
    )


def rspe(truth, predictions):
    """Squared error relative to the variation around the mean curve.

    The fraction of sample variance left unexplained by the
    predictions; the mean-curve predictor scores 1.
    """
    if len(truth) != len(predictions):
        raise ValueError("truth and predictions must have equal length")
    if not truth:
        raise ValueError("no curves to compare")
    center = mean_curve(truth)
    denominator = float(np.sum([l2_distance(t, center) ** 2 for t in truth]))
    if denominator == 0.0:
        raise DegenerateDataError("truth curves are all identical")
    numerator = float(np.sum([l2_distance(t, p) ** 2 for t, p in zip(truth, predictions)]))
    return numerator / denominator
