"""Kernel smoothers for curve and scatterplot data.

Provides Nadaraya-Watson smoothing of a single observed curve, local
linear smoothing of pooled observations in one and two dimensions, and
generalized cross-validation (GCV) for bandwidth choice.

Every local linear fit first collapses duplicate design locations into
per-location counts and value sums.  Weighted least squares only ever
sees these sufficient statistics, which leaves the solution unchanged
while making the cost proportional to the number of distinct locations
rather than raw points.  The low-level fitters accept matrices of
counts and sums with one column per dataset, so many related fits
(for instance leave-one-subject-out variants that differ only in which
points are included) are computed in one vectorized pass.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import BandwidthTooSmallError
from .grids import GridFunction

KERNELS = ("epanechnikov", "gaussian")

_SQRT_2PI = math.sqrt(2.0 * math.pi)

# Local designs whose normal-equation determinant falls below this
# fraction of its Hadamard bound are treated as singular; the fit then
# falls back to a local constant.
_SINGULAR_TOL = 1e-12

# Cap on elements of the (evaluation x location) kernel matrix held in
# memory at once; larger problems are processed in row blocks.
_BLOCK_ELEMS = 2_000_000


def kernel_profile(kernel):
    """Return ``(weight_function, support_radius)`` for a kernel id.

    Parameters
    ----------
    kernel : str
        One of ``"epanechnikov"`` or ``"gaussian"``.

    Returns
    -------
    tuple
        A vectorized weight function of the scaled argument ``u`` and
        the radius beyond which the weight is identically zero
        (``math.inf`` for the Gaussian).
    """
    if kernel == "epanechnikov":
        return _epanechnikov, 1.0
    if kernel == "gaussian":
        return _gaussian, math.inf
    raise ValueError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")


def _epanechnikov(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) < 1.0, 0.75 * (1.0 - u * u), 0.0)


def _gaussian(u):
    u = np.asarray(u, dtype=float)
    return np.exp(-0.5 * u * u) / _SQRT_2PI


def aggregate_1d(times, values):
    """Collapse duplicate time points into per-location statistics.

    Parameters
    ----------
    times, values : array_like
        Pooled observation times and values, equal length.

    Returns
    -------
    tuple of ndarray
        ``(locations, counts, value_sums, square_sums)`` with locations
        sorted increasing and one entry per distinct time.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.ndim != 1 or times.shape != values.shape:
        raise ValueError("times and values must be one-dimensional and equally long")
    if times.size == 0:
        raise ValueError("no points to smooth")
    locations, inverse = np.unique(times, return_inverse=True)
    inverse = inverse.reshape(-1)
    counts = np.bincount(inverse, minlength=locations.size).astype(float)
    value_sums = np.bincount(inverse, weights=values, minlength=locations.size)
    square_sums = np.bincount(inverse, weights=values * values, minlength=locations.size)
    return locations, counts, value_sums, square_sums


def aggregate_2d(points, values):
    """Collapse duplicate planar points into per-location statistics.

    Parameters
    ----------
    points : array_like, shape (m, 2)
        Pooled design locations.
    values : array_like, shape (m,)
        Response at each location.

    Returns
    -------
    tuple of ndarray
        ``(locations, counts, value_sums, square_sums)`` with locations
        in lexicographic order, shape ``(u, 2)``.
    """
    points = np.asarray(points, dtype=float)
    values = np.asarray(values, dtype=float)
    if points.ndim != 2 or points.shape[1] != 2 or values.shape != (points.shape[0],):
        raise ValueError("points must have shape (m, 2) with matching values")
    if points.shape[0] == 0:
        raise ValueError("no points to smooth")
    locations, inverse = np.unique(points, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    counts = np.bincount(inverse, minlength=locations.shape[0]).astype(float)
    value_sums = np.bincount(inverse, weights=values, minlength=locations.shape[0])
    square_sums = np.bincount(
        inverse, weights=values * values, minlength=locations.shape[0]
    )
    return locations, counts, value_sums, square_sums


def _as_columns(locations_len, counts, value_sums):
    """Shape counts and sums as (locations, columns) with broadcasting."""
    counts = np.asarray(counts, dtype=float)
    value_sums = np.asarray(value_sums, dtype=float)
    single = counts.ndim == 1 and value_sums.ndim == 1
    counts = counts.reshape(locations_len, -1)
    value_sums = value_sums.reshape(locations_len, -1)
    if counts.shape[1] == 1 and value_sums.shape[1] > 1:
        counts = np.broadcast_to(counts, value_sums.shape)
    if counts.shape != value_sums.shape:
        raise ValueError("counts and value_sums have incompatible shapes")
    return counts, value_sums, single


def loclin_fit_1d(
    locations, counts, value_sums, eval_points, h, kernel="epanechnikov", with_hat=False
):
    """Local linear fit from aggregated statistics at arbitrary points.

    Parameters
    ----------
    locations : array_like, shape (u,)
        Distinct design locations.
    counts, value_sums : array_like
        Per-location point counts and value sums, shape ``(u,)`` or
        ``(u, m)`` for ``m`` datasets fitted in one pass; a vector of
        counts is broadcast across dataset columns.
    eval_points : array_like, shape (e,)
        Points at which the local line's intercept is evaluated.
    h : float
        Bandwidth, > 0.
    kernel : str
        Kernel id, see :func:`kernel_profile`.
    with_hat : bool
        If true, also return the smoother's self-weight at each
        evaluation point (the hat-matrix diagonal contribution of a
        single raw point located there), as used by GCV.

    Returns
    -------
    ndarray or tuple of ndarray
        Fitted values with shape matching the dataset layout; with
        ``with_hat`` a ``(fitted, hat)`` pair.

    Raises
    ------
    BandwidthTooSmallError
        If some evaluation point receives zero total kernel weight.
    """
    kfun, _ = kernel_profile(kernel)
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    locations = np.asarray(locations, dtype=float)
    eval_points = np.asarray(eval_points, dtype=float)
    counts, value_sums, single = _as_columns(locations.size, counts, value_sums)

    n_eval = eval_points.size
    n_cols = value_sums.shape[1]
    fitted = np.empty((n_eval, n_cols))
    hat = np.empty((n_eval, n_cols)) if with_hat else None
    k0 = float(kfun(0.0))
    block = max(1, _BLOCK_ELEMS // max(locations.size, 1))
    for start in range(0, n_eval, block):
        stop = min(start + block, n_eval)
        du = locations[None, :] - eval_points[start:stop, None]
        k = kfun(du / h)
        kdu = k * du
        s0 = k @ counts
        s1 = kdu @ counts
        s2 = (kdu * du) @ counts
        t0 = k @ value_sums
        t1 = kdu @ value_sums
        _check_window(s0, eval_points[start:stop])
        det = s0 * s2 - s1 * s1
        low = det <= _SINGULAR_TOL * (s0 * s2)
        ok = ~low
        out = np.empty_like(s0)
        out[low] = t0[low] / s0[low]
        out[ok] = (s2[ok] * t0[ok] - s1[ok] * t1[ok]) / det[ok]
        fitted[start:stop] = out
        if with_hat:
            hv = np.empty_like(s0)
            hv[low] = k0 / s0[low]
            hv[ok] = k0 * s2[ok] / det[ok]
            hat[start:stop] = hv
    if single:
        fitted = fitted[:, 0]
        if with_hat:
            hat = hat[:, 0]
    return (fitted, hat) if with_hat else fitted


def loclin_fit_2d(
    locations, counts, value_sums, eval_points, h, kernel="epanechnikov", with_hat=False
):
    """Local plane fit from aggregated statistics at arbitrary points.

    The product kernel with equal bandwidth ``h`` in both coordinates
    weights each design location; the fitted value is the plane's
    intercept.  Arguments mirror :func:`loclin_fit_1d` with
    ``locations`` and ``eval_points`` of shape ``(u, 2)`` and
    ``(e, 2)``.
    """
    kfun, _ = kernel_profile(kernel)
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    locations = np.asarray(locations, dtype=float)
    eval_points = np.asarray(eval_points, dtype=float)
    counts, value_sums, single = _as_columns(locations.shape[0], counts, value_sums)

    n_eval = eval_points.shape[0]
    n_cols = value_sums.shape[1]
    fitted = np.empty((n_eval, n_cols))
    hat = np.empty((n_eval, n_cols)) if with_hat else None
    k0sq = float(kfun(0.0)) ** 2
    block = max(1, _BLOCK_ELEMS // max(locations.shape[0], 1))
    for start in range(0, n_eval, block):
        stop = min(start + block, n_eval)
        du = locations[None, :, 0] - eval_points[start:stop, 0, None]
        dv = locations[None, :, 1] - eval_points[start:stop, 1, None]
        k = kfun(du / h) * kfun(dv / h)
        kdu = k * du
        kdv = k * dv
        s00 = k @ counts
        s10 = kdu @ counts
        s01 = kdv @ counts
        s20 = (kdu * du) @ counts
        s11 = (kdu * dv) @ counts
        s02 = (kdv * dv) @ counts
        t0 = k @ value_sums
        t1 = kdu @ value_sums
        t2 = kdv @ value_sums
        _check_window(s00, eval_points[start:stop])
        # First-row cofactors of the symmetric 3x3 normal matrix.
        c00 = s20 * s02 - s11 * s11
        c01 = s01 * s11 - s10 * s02
        c02 = s10 * s11 - s01 * s20
        det = s00 * c00 + s10 * c01 + s01 * c02
        low = det <= _SINGULAR_TOL * (s00 * s20 * s02)
        ok = ~low
        out = np.empty_like(s00)
        out[low] = t0[low] / s00[low]
        out[ok] = (c00[ok] * t0[ok] + c01[ok] * t1[ok] + c02[ok] * t2[ok]) / det[ok]
        fitted[start:stop] = out
        if with_hat:
            hv = np.empty_like(s00)
            hv[low] = k0sq / s00[low]
            hv[ok] = k0sq * c00[ok] / det[ok]
            hat[start:stop] = hv
    if single:
        fitted = fitted[:, 0]
        if with_hat:
            hat = hat[:, 0]
    return (fitted, hat) if with_hat else fitted


def _check_window(weight_sums, eval_points):
    """Raise if any evaluation point has an empty kernel window."""
    empty = weight_sums <= 0.0
    if np.any(empty):
        row = int(np.argwhere(empty)[0][0])
        point = np.atleast_1d(eval_points[row])
        if point.size == 1:
            raise BandwidthTooSmallError(float(point[0]))
        raise BandwidthTooSmallError(tuple(float(p) for p in point))


def nadaraya_watson_smooth(sample, grid, h1, kernel="epanechnikov"):
    """Smooth one observed curve onto the working grid.

    Parameters
    ----------
    sample : CurveSample
        Observation times and values for a single subject.
    grid : Grid
        Evaluation grid.
    h1 : float
        Bandwidth, > 0.
    kernel : str
        Kernel id.

    Returns
    -------
    GridFunction
        Kernel-weighted average of the observed values at every grid
        point; the weights at each point sum to one.

    Raises
    ------
    BandwidthTooSmallError
        If some grid point lies outside the kernel support of every
        observation time.
    """
    kfun, _ = kernel_profile(kernel)
    if h1 <= 0:
        raise ValueError("bandwidth must be positive")
    weights = kfun((sample.times[None, :] - grid.points[:, None]) / h1)
    denom = weights.sum(axis=1)
    _check_window(denom, grid.points)
    return GridFunction(grid, (weights @ sample.values) / denom)


def local_linear_smooth_1d(times, values, grid, h, kernel="epanechnikov"):
    """Local linear smooth of pooled (time, value) points on a grid.

    Exactly reproduces linear signals; a locally singular design (all
    weight at one location) falls back to the local constant fit.

    Parameters
    ----------
    times, values : array_like
        Pooled observations from all subjects.
    grid : Grid
        Evaluation grid.
    h : float
        Bandwidth, > 0.
    kernel : str
        Kernel id.

    Returns
    -------
    GridFunction
        The fitted local-line intercept at every grid point.
    """
    locations, counts, value_sums, _ = aggregate_1d(times, values)
    fitted = loclin_fit_1d(locations, counts, value_sums, grid.points, h, kernel)
    return GridFunction(grid, fitted)


def local_linear_smooth_2d(points, values, grid, h, kernel="epanechnikov", symmetrize=True):
    """Local plane smooth of pooled ((t, s), value) points on grid x grid.

    Parameters
    ----------
    points : array_like, shape (m, 2)
        Pooled planar design locations.
    values : array_like, shape (m,)
        Response at each location.
    grid : Grid
        Evaluation grid for both axes.
    h : float
        Bandwidth, > 0, shared by both coordinates.
    kernel : str
        Kernel id.
    symmetrize : bool
        If true (default), return ``(S + S.T) / 2``; covariance input
        is symmetric by construction so this only removes numerical
        asymmetry.  Pass false to obtain the raw fit, which reproduces
        planar signals exactly.

    Returns
    -------
    ndarray, shape (grid.size, grid.size)
        The fitted surface.
    """
    locations, counts, value_sums, _ = aggregate_2d(points, values)
    tt, ss = np.meshgrid(grid.points, grid.points, indexing="ij")
    eval_points = np.column_stack([tt.ravel(), ss.ravel()])
    fitted = loclin_fit_2d(locations, counts, value_sums, eval_points, h, kernel)
    surface = fitted.reshape(grid.size, grid.size)
    if symmetrize:
        surface = 0.5 * (surface + surface.T)
    return surface


def bandwidth_candidates(grid, num=10):
    """Geometric bandwidth grid for GCV.

    Spans twice the mean grid spacing up to a quarter of the grid
    range, with ``num`` points.
    """
    spacing = grid.span / (grid.size - 1)
    high = grid.span / 4.0
    low = min(2.0 * spacing, high)
    return np.geomspace(low, high, num)


def _gcv_score(fitted, hat, counts, value_sums, square_sums):
    """GCV score from aggregated residual statistics; inf if the
    smoother trace reaches the point count."""
    m = float(counts.sum())
    rss = float(np.sum(square_sums - 2.0 * fitted * value_sums + counts * fitted * fitted))
    trace = float(np.sum(counts * hat))
    if trace >= m:
        return math.inf
    return rss * m / (m - trace) ** 2


def gcv_bandwidth_1d(times, values, grid, kernel="epanechnikov", candidates=None):
    """Select a local linear bandwidth by generalized cross-validation.

    Candidates whose kernel windows are empty at some data location or
    grid point are skipped; ties prefer the smallest bandwidth.

    Returns
    -------
    float
        The selected bandwidth.

    Raises
    ------
    BandwidthTooSmallError
        If no candidate yields a valid fit.
    """
    locations, counts, value_sums, square_sums = aggregate_1d(times, values)
    if candidates is None:
        candidates = bandwidth_candidates(grid)
    best_h = None
    best_score = math.inf
    for h in candidates:
        h = float(h)
        try:
            fitted, hat = loclin_fit_1d(
                locations, counts, value_sums, locations, h, kernel, with_hat=True
            )
            loclin_fit_1d(locations, counts, value_sums, grid.points, h, kernel)
        except BandwidthTooSmallError:
            continue
        score = _gcv_score(fitted, hat, counts, value_sums, square_sums)
        if score < best_score:
            best_h, best_score = h, score
    if best_h is None:
        raise BandwidthTooSmallError(
            float(grid.start), "no candidate bandwidth produced a valid fit"
        )
    return best_h


def gcv_bandwidth_2d(points, values, grid, kernel="epanechnikov", candidates=None):
    """Two-dimensional analogue of :func:`gcv_bandwidth_1d`.

    Validity is checked at the data locations only; the full-surface
    fit reports its own error if a grid cell is uncovered.
    """
    locations, counts, value_sums, square_sums = aggregate_2d(points, values)
    if candidates is None:
        candidates = bandwidth_candidates(grid)
    best_h = None
    best_score = math.inf
    for h in candidates:
        h = float(h)
        try:
            fitted, hat = loclin_fit_2d(
                locations, counts, value_sums, locations, h, kernel, with_hat=True
            )
        except BandwidthTooSmallError:
            continue
        score = _gcv_score(fitted, hat, counts, value_sums, square_sums)
        if score < best_score:
            best_h, best_score = h, score
    if best_h is None:
        raise BandwidthTooSmallError(
            float(grid.start), "no candidate bandwidth produced a valid fit"
        )
    return best_h
