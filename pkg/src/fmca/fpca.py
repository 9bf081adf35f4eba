"""Functional principal component analysis.

Estimates the mean curve and covariance surface by local linear
smoothing of pooled observations, extracts eigenvalue/eigenfunction
pairs from the quadrature-weighted covariance matrix, computes
principal component scores by Riemann-sum integration or by
conditional expectation, truncates by fraction of variance explained,
and rebuilds fitted curves from the truncated expansion.

The leave-one-out fitter recomputes the mean and eigenfunctions with
each subject removed.  It works entirely on aggregated per-location
statistics, so removing a subject is a cheap downdate of count and sum
vectors and all subjects are processed in batched fits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSpectrumError, InsufficientDataError
from .grids import Grid, GridFunction, default_grid
from .smoothing import (
    aggregate_1d,
    gcv_bandwidth_1d,
    gcv_bandwidth_2d,
    loclin_fit_1d,
    loclin_fit_2d,
    local_linear_smooth_1d,
    local_linear_smooth_2d,
)

# Conditional-expectation scores are used below this median number of
# observations per subject; integration scores otherwise.
SPARSE_DESIGN_THRESHOLD = 20

# Fraction of the grid range, centred, over which the noise variance
# is averaged; boundary smoothing bias is excluded.
_SIGMA2_INTERIOR = 0.5


@dataclass(frozen=True, eq=False)
class FpcaModel:
    """Fitted principal component expansion of a curve sample.

    Attributes
    ----------
    mean : GridFunction
        Estimated mean curve.
    eigenvalues : ndarray
        Retained eigenvalues, nonincreasing and positive.
    eigenfunctions : list of GridFunction
        Matching eigenfunctions, orthonormal in the quadrature inner
        product.
    sigma2 : float
        Estimated measurement-noise variance.
    scores : ndarray
        Per-subject component scores, one row per subject and one
        column per retained component.
    K : int
        Number of components selected by the fraction-of-variance
        rule; at most the number retained.
    h_mu, h_G : float
        Bandwidths used for the mean and covariance smooths.
    kernel : str
        Kernel id used throughout.
    score_method : str
        ``"integration"`` or ``"conditional"``.
    """

    mean: GridFunction
    eigenvalues: np.ndarray
    eigenfunctions: list
    sigma2: float
    scores: np.ndarray
    K: int
    h_mu: float
    h_G: float
    kernel: str
    score_method: str

    def __post_init__(self):
        if self.K < 0 or self.K > len(self.eigenfunctions):
            raise ValueError("K must lie between 0 and the number of components")
        if self.scores.shape[1] != len(self.eigenfunctions):
            raise ValueError("scores must have one column per component")

    @property
    def grid(self):
        return self.mean.grid

    @property
    def n_subjects(self):
        return self.scores.shape[0]

    def fitted_curve(self, i, K=None):
        """Truncated reconstruction of subject ``i``."""
        K = self.K if K is None else K
        return reconstruct(self.mean, self.eigenfunctions, self.scores[i], K)

    def fitted_curves(self, K=None):
        return [self.fitted_curve(i, K) for i in range(self.n_subjects)]

    def to_dict(self):
        """JSON-ready dictionary; floats round-trip losslessly."""
        return {
            "grid_points": self.grid.points.tolist(),
            "mean_values": self.mean.values.tolist(),
            "eigenvalues": np.asarray(self.eigenvalues).tolist(),
            "eigenfunction_values": [f.values.tolist() for f in self.eigenfunctions],
            "sigma2": float(self.sigma2),
            "scores": np.asarray(self.scores).tolist(),
            "K": int(self.K),
            "h_mu": float(self.h_mu),
            "h_G": float(self.h_G),
            "kernel": self.kernel,
            "score_method": self.score_method,
        }

    @classmethod
    def from_dict(cls, payload):
        grid = Grid(np.asarray(payload["grid_points"], dtype=float))
        return cls(
            mean=GridFunction(grid, np.asarray(payload["mean_values"], dtype=float)),
            eigenvalues=np.asarray(payload["eigenvalues"], dtype=float),
            eigenfunctions=[
                GridFunction(grid, np.asarray(row, dtype=float))
                for row in payload["eigenfunction_values"]
            ],
            sigma2=float(payload["sigma2"]),
            scores=np.asarray(payload["scores"], dtype=float).reshape(
                len(payload["scores"]), -1
            ),
            K=int(payload["K"]),
            h_mu=float(payload["h_mu"]),
            h_G=float(payload["h_G"]),
            kernel=payload["kernel"],
            score_method=payload["score_method"],
        )

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def pooled_observations(samples):
    """Concatenate all (time, value) pairs across subjects."""
    times = np.concatenate([s.times for s in samples])
    values = np.concatenate([s.values for s in samples])
    return times, values


def estimate_mean(samples, grid, h_mu=None, kernel="epanechnikov"):
    """Local linear mean estimate from pooled observations.

    Parameters
    ----------
    samples : list of CurveSample
    grid : Grid
    h_mu : float, optional
        Bandwidth; selected by GCV when omitted.
    kernel : str

    Returns
    -------
    GridFunction
    """
    if not samples:
        raise InsufficientDataError("no samples to estimate a mean from")
    times, values = pooled_observations(samples)
    if h_mu is None:
        h_mu = gcv_bandwidth_1d(times, values, grid, kernel)
    return local_linear_smooth_1d(times, values, grid, h_mu, kernel)


def _raw_covariance_points(samples, mean):
    """Off-diagonal raw covariance points pooled over subjects.

    Returns ``(locations, products, residuals_by_subject)`` where
    locations has one row (t_j, t_l) per ordered pair j != l and
    products holds the matching residual products.  Same-time pairs
    are excluded so the measurement-noise nugget on the diagonal does
    not bias the surface.
    """
    locs = []
    prods = []
    residuals = []
    for sample in samples:
        r = sample.values - mean.interp(sample.times)
        residuals.append(r)
        n_i = sample.n_obs
        jj, ll = np.meshgrid(np.arange(n_i), np.arange(n_i), indexing="ij")
        off = jj != ll
        jj, ll = jj[off], ll[off]
        locs.append(np.column_stack([sample.times[jj], sample.times[ll]]))
        prods.append(r[jj] * r[ll])
    return np.concatenate(locs), np.concatenate(prods), residuals


def estimate_covariance(samples, grid, mean, h_G=None, kernel="epanechnikov"):
    """Covariance surface and noise variance from pooled residuals.

    Raw products of mean-centred observations at distinct time pairs
    are smoothed with a two-dimensional local plane fit; the noise
    variance is the average gap, over the central half of the grid,
    between the smoothed variance of the observations and the surface
    diagonal, floored at zero.

    Returns
    -------
    tuple
        ``(surface, sigma2)`` with surface of shape
        ``(grid.size, grid.size)``, symmetric.
    """
    if len(samples) < 2:
        raise InsufficientDataError("covariance estimation needs at least 2 subjects")
    locations, products, residuals = _raw_covariance_points(samples, mean)
    if h_G is None:
        h_G = gcv_bandwidth_2d(locations, products, grid, kernel)
    surface = local_linear_smooth_2d(locations, products, grid, h_G, kernel)

    times, _ = pooled_observations(samples)
    squared = np.concatenate(residuals) ** 2
    variance = local_linear_smooth_1d(times, squared, grid, h_G, kernel)
    sigma2 = _noise_variance(variance.values, np.diag(surface), grid)
    return surface, sigma2


def _noise_variance(variance_diag, surface_diag, grid):
    """Average the variance-minus-surface gap over the grid interior."""
    margin = (1.0 - _SIGMA2_INTERIOR) / 2.0
    lo = grid.start + margin * grid.span
    hi = grid.stop - margin * grid.span
    inside = (grid.points >= lo) & (grid.points <= hi)
    return max(0.0, float(np.mean(variance_diag[inside] - surface_diag[inside])))


def eigendecompose(surface, grid):
    """Eigenvalue/eigenfunction pairs of a covariance surface.

    The surface is weighted by the square-root quadrature weights so
    the discrete eigenproblem matches the integral operator; the
    eigenvectors are rescaled back to be orthonormal in the quadrature
    inner product.  Eigenvalues are clipped at zero and sorted
    nonincreasing.  Each eigenfunction's sign is fixed so that its
    integral over the domain is nonnegative, with ties broken by the
    sign of its first nonzero value.

    Returns
    -------
    tuple
        ``(eigenvalues, eigenfunctions)`` covering the full spectrum.
    """
    surface = np.asarray(surface, dtype=float)
    if surface.shape != (grid.size, grid.size):
        raise ValueError("surface shape does not match the grid")
    root_w = np.sqrt(grid.weights)
    weighted = root_w[:, None] * surface * root_w[None, :]
    weighted = 0.5 * (weighted + weighted.T)
    values, vectors = np.linalg.eigh(weighted)
    order = np.argsort(values)[::-1]
    values = np.clip(values[order], 0.0, None)
    vectors = vectors[:, order] / root_w[:, None]

    eigenfunctions = []
    for k in range(vectors.shape[1]):
        phi = vectors[:, k]
        integral = float(np.dot(grid.weights, phi))
        if integral < 0.0:
            phi = -phi
        elif integral == 0.0:
            nonzero = phi[phi != 0.0]
            if nonzero.size and nonzero[0] < 0.0:
                phi = -phi
        eigenfunctions.append(GridFunction(grid, phi))
    return values, eigenfunctions


def scores_integration(sample, mean, eigenfunctions):
    """Component scores by discretized integration.

    Each score sums the mean-centred observations against the
    eigenfunction with left-difference time spacings; the first
    observation carries zero spacing.  Off-grid values come from
    linear interpolation.
    """
    residual = sample.values - mean.interp(sample.times)
    spacings = np.concatenate([[0.0], np.diff(sample.times)])
    weighted = residual * spacings
    return np.array([float(np.dot(f.interp(sample.times), weighted)) for f in eigenfunctions])


def scores_conditional(sample, model):
    """Component scores by conditional expectation.

    Uses the model-implied covariance of the subject's observation
    vector; a tiny ridge keeps it invertible when the noise variance
    is zero.
    """
    mu = model.mean.interp(sample.times)
    phi = np.column_stack([f.interp(sample.times) for f in model.eigenfunctions])
    lam = np.asarray(model.eigenvalues, dtype=float)
    cov = (phi * lam[None, :]) @ phi.T
    ridge = model.sigma2
    if ridge <= 0.0:
        ridge = 1e-8 * max(float(np.max(np.diag(cov))), 1.0)
    cov[np.diag_indices_from(cov)] += ridge
    solved = np.linalg.solve(cov, sample.values - mu)
    return lam * (phi.T @ solved)


def select_K_fve(eigenvalues, alpha=0.05):
    """Smallest K whose cumulative eigenvalue share is >= 1 - alpha."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    total = float(eigenvalues.sum())
    if total <= 0.0:
        raise DegenerateSpectrumError("all eigenvalues are zero")
    fractions = np.cumsum(eigenvalues) / total
    return int(np.searchsorted(fractions, 1.0 - alpha) + 1)


def reconstruct(mean, eigenfunctions, scores, K):
    """Truncated Karhunen-Loeve reconstruction.

    ``K = 0`` returns the mean curve.
    """
    if K < 0 or K > len(eigenfunctions):
        raise ValueError("K must lie between 0 and the number of eigenfunctions")
    values = mean.values.copy()
    for k in range(K):
        values += scores[k] * eigenfunctions[k].values
    return GridFunction(mean.grid, values)


def _positive_components(eigenvalues, eigenfunctions):
    keep = int(np.sum(np.asarray(eigenvalues) > 0.0))
    return np.asarray(eigenvalues[:keep]), eigenfunctions[:keep]


def _score_method(samples, override=None):
    if override is not None:
        return override
    median_n = float(np.median([s.n_obs for s in samples]))
    return "conditional" if median_n < SPARSE_DESIGN_THRESHOLD else "integration"


def fit_fpca(
    samples,
    grid=None,
    h_mu=None,
    h_G=None,
    kernel="epanechnikov",
    fve_alpha=0.05,
    min_components=0,
    score_method=None,
):
    """Fit the full principal component model to a curve sample.

    Parameters
    ----------
    samples : list of CurveSample
    grid : Grid, optional
        Working grid; defaults to 101 equally spaced points over the
        pooled time range.
    h_mu, h_G : float, optional
        Smoothing bandwidths; GCV-selected when omitted.
    kernel : str
    fve_alpha : float
        Fraction-of-variance tolerance for choosing ``K``.
    min_components : int
        Retain at least this many components (when available) even if
        the variance rule selects fewer, for comparisons across fixed
        truncation levels.
    score_method : str, optional
        Force ``"integration"`` or ``"conditional"``; by default the
        sparser choice is made from the median points per subject.

    Returns
    -------
    FpcaModel
    """
    if len(samples) < 2:
        raise InsufficientDataError("model fitting needs at least 2 subjects")
    if grid is None:
        grid = default_grid(samples)
    times, values = pooled_observations(samples)
    if h_mu is None:
        h_mu = gcv_bandwidth_1d(times, values, grid, kernel)
    mean = local_linear_smooth_1d(times, values, grid, h_mu, kernel)
    if h_G is None:
        locations, products, _ = _raw_covariance_points(samples, mean)
        h_G = gcv_bandwidth_2d(locations, products, grid, kernel)
    surface, sigma2 = estimate_covariance(samples, grid, mean, h_G, kernel)

    eigenvalues, eigenfunctions = eigendecompose(surface, grid)
    eigenvalues, eigenfunctions = _positive_components(eigenvalues, eigenfunctions)
    if eigenvalues.size == 0:
        raise DegenerateSpectrumError("covariance surface has no positive eigenvalues")
    K = select_K_fve(eigenvalues, fve_alpha)
    retained = min(max(K, min_components), eigenvalues.size)
    eigenvalues = eigenvalues[:retained]
    eigenfunctions = eigenfunctions[:retained]

    method = _score_method(samples, score_method)
    partial = FpcaModel(
        mean=mean,
        eigenvalues=eigenvalues,
        eigenfunctions=eigenfunctions,
        sigma2=sigma2,
        scores=np.zeros((0, retained)),
        K=min(K, retained),
        h_mu=float(h_mu),
        h_G=float(h_G),
        kernel=kernel,
        score_method=method,
    )
    if method == "conditional":
        rows = [scores_conditional(s, partial) for s in samples]
    else:
        rows = [scores_integration(s, mean, eigenfunctions) for s in samples]
    scores = np.vstack(rows) if rows else np.zeros((0, retained))
    return FpcaModel(
        mean=mean,
        eigenvalues=eigenvalues,
        eigenfunctions=eigenfunctions,
        sigma2=sigma2,
        scores=scores,
        K=min(K, retained),
        h_mu=float(h_mu),
        h_G=float(h_G),
        kernel=kernel,
        score_method=method,
    )


def _subject_contributions_1d(samples, locations):
    """Per-subject count and value-sum vectors on shared locations."""
    n = len(samples)
    counts = np.zeros((locations.size, n))
    sums = np.zeros((locations.size, n))
    for i, sample in enumerate(samples):
        idx = np.searchsorted(locations, sample.times)
        np.add.at(counts[:, i], idx, 1.0)
        np.add.at(sums[:, i], idx, sample.values)
    return counts, sums


def loo_means(samples, grid, h_mu, kernel="epanechnikov"):
    """Leave-one-subject-out mean curves, one batched fit.

    Returns an array of shape ``(grid.size, n)`` whose column ``i`` is
    the mean estimated without subject ``i``.
    """
    times, values = pooled_observations(samples)
    locations, counts, value_sums, _ = aggregate_1d(times, values)
    sub_counts, sub_sums = _subject_contributions_1d(samples, locations)
    loo_counts = counts[:, None] - sub_counts
    loo_sums = value_sums[:, None] - sub_sums
    return loclin_fit_1d(locations, loo_counts, loo_sums, grid.points, h_mu, kernel)


def _pair_index_arrays(sample):
    n_i = sample.n_obs
    jj, ll = np.meshgrid(np.arange(n_i), np.arange(n_i), indexing="ij")
    off = jj != ll
    return jj[off], ll[off]


def loo_reconstructions(samples, grid, dims, h_mu=None, h_G=None, kernel="epanechnikov"):
    """Leave-one-out truncated reconstructions for every subject.

    For each subject the mean and eigenfunctions are re-estimated with
    that subject excluded, the subject's integration scores are taken
    against the held-out model, and reconstructions at each requested
    truncation level are returned.

    Bandwidths are selected by GCV on the full data once and reused
    across the held-out refits.

    Parameters
    ----------
    samples : list of CurveSample
    grid : Grid
    dims : sequence of int
        Truncation levels, e.g. ``range(1, 6)``.
    h_mu, h_G : float, optional
    kernel : str

    Returns
    -------
    list of dict
        One entry per subject mapping truncation level to the
        reconstructed GridFunction.
    """
    if len(samples) < 3:
        raise InsufficientDataError("leave-one-out fitting needs at least 3 subjects")
    dims = [int(d) for d in dims]
    max_dim = max(dims)
    times, values = pooled_observations(samples)
    if h_mu is None:
        h_mu = gcv_bandwidth_1d(times, values, grid, kernel)

    means = loo_means(samples, grid, h_mu, kernel)

    # Aggregated first and second moment statistics of the raw pair
    # products, split so the held-out mean can be folded in per subject:
    # at a pair location (a, b) the product expands into terms in
    # y_j*y_l, y_j, y_l and a constant, each with location-constant
    # mean factors.
    pair_locs = []
    pair_yy = []
    pair_yl = []
    pair_yr = []
    for sample in samples:
        jj, ll = _pair_index_arrays(sample)
        pair_locs.append(np.column_stack([sample.times[jj], sample.times[ll]]))
        pair_yy.append(sample.values[jj] * sample.values[ll])
        pair_yl.append(sample.values[jj])
        pair_yr.append(sample.values[ll])
    all_locs = np.concatenate(pair_locs)
    locations, inverse = np.unique(all_locs, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    n_loc = locations.shape[0]
    n = len(samples)

    tot_counts = np.bincount(inverse, minlength=n_loc).astype(float)
    tot_yy = np.bincount(inverse, weights=np.concatenate(pair_yy), minlength=n_loc)
    tot_yl = np.bincount(inverse, weights=np.concatenate(pair_yl), minlength=n_loc)
    tot_yr = np.bincount(inverse, weights=np.concatenate(pair_yr), minlength=n_loc)

    sub_counts = np.zeros((n_loc, n))
    sub_yy = np.zeros((n_loc, n))
    sub_yl = np.zeros((n_loc, n))
    sub_yr = np.zeros((n_loc, n))
    offset = 0
    for i, block in enumerate(pair_locs):
        idx = inverse[offset : offset + block.shape[0]]
        np.add.at(sub_counts[:, i], idx, 1.0)
        np.add.at(sub_yy[:, i], idx, pair_yy[i])
        np.add.at(sub_yl[:, i], idx, pair_yl[i])
        np.add.at(sub_yr[:, i], idx, pair_yr[i])
        offset += block.shape[0]

    loo_counts = tot_counts[:, None] - sub_counts
    mu_left = np.empty((n_loc, n))
    mu_right = np.empty((n_loc, n))
    for i in range(n):
        mu_left[:, i] = np.interp(locations[:, 0], grid.points, means[:, i])
        mu_right[:, i] = np.interp(locations[:, 1], grid.points, means[:, i])
    loo_products = (
        (tot_yy[:, None] - sub_yy)
        - mu_right * (tot_yl[:, None] - sub_yl)
        - mu_left * (tot_yr[:, None] - sub_yr)
        + mu_left * mu_right * loo_counts
    )

    if h_G is None:
        mean_full = local_linear_smooth_1d(times, values, grid, h_mu, kernel)
        full_locs, full_products, _ = _raw_covariance_points(samples, mean_full)
        h_G = gcv_bandwidth_2d(full_locs, full_products, grid, kernel)

    tt, ss = np.meshgrid(grid.points, grid.points, indexing="ij")
    eval_points = np.column_stack([tt.ravel(), ss.ravel()])
    surfaces = loclin_fit_2d(locations, loo_counts, loo_products, eval_points, h_G, kernel)

    results = []
    for i, sample in enumerate(samples):
        mean_i = GridFunction(grid, means[:, i])
        surface_i = surfaces[:, i].reshape(grid.size, grid.size)
        surface_i = 0.5 * (surface_i + surface_i.T)
        eigenvalues, eigenfunctions = eigendecompose(surface_i, grid)
        eigenvalues, eigenfunctions = _positive_components(eigenvalues, eigenfunctions)
        use = min(max_dim, len(eigenfunctions))
        xi = scores_integration(sample, mean_i, eigenfunctions[:use])
        per_dim = {}
        for d in dims:
            per_dim[d] = reconstruct(mean_i, eigenfunctions[:use], xi, min(d, use))
        results.append(per_dim)
    return results
