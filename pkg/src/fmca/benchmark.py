"""Benchmark harness over the synthetic manifold families.

For one generated dataset this runs the full pipeline twice, with and
without the density penalty, and collects every quantity the summary
tables need: fraction of distances explained per dimension, truth
mean and relative squared prediction errors per dimension for both
the component-truncation baseline and the manifold predictor, the
penalized-over-plain prediction ratio at the intrinsic dimension, and
the sensitivity of the manifold error to the neighborhood radius.

Baseline predictions re-estimate the mean and eigenfunctions with the
target subject left out; manifold predictions embed all subjects and
leave the target out of the kernel averaging only.  A suite runner
fans datasets out over worker processes and reassembles results in
input order, so reports are deterministic for a fixed seed list.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .fpca import fit_fpca, loo_reconstructions
from .geodesic import epsilon_lower_bound, knn_epsilon_candidates, pairwise_l2_scores
from .manifold import MAX_WIDENINGS
from .mds import dimension_from_fde
from .selection import CvConfig, EmbeddingCache, cross_validate, fde_table
from .simulate import MANIFOLDS, SimSpec, generate, working_grid
from .smoothing import kernel_profile

# Latent parameter count of each generator; the dimension at which
# penalized and plain neighborhoods are compared.
INTRINSIC_DIM = {"m1": 1, "m2": 2, "m3": 2}

DEFAULT_DIMS = (1, 2, 3, 4, 5)
DEFAULT_SEEDS = (0, 1, 2, 3, 4)
DEFAULT_NOISE_RATIOS = (0.1, 0.5)
DEFAULT_PER_EPSILON_KS = (5, 8, 12)
WIDE_PER_EPSILON_KS = (3, 5, 8, 12, 16)


@dataclass(frozen=True, eq=False)
class BenchmarkReport:
    """Per-dataset benchmark quantities.

    Dictionaries are keyed by truncation level / embedding dimension.
    Prediction errors are measured against the noiseless truth curves
    and restricted, per dimension, to the subjects that were both
    connected and predictable; ``n_compared`` records how many that
    was.
    """

    spec: SimSpec
    grid_size: int
    noise_sigma2: float
    fpca_K: int
    fde_by_dim: dict
    selected_d: int
    selection_converged: bool
    intrinsic_d: int
    cv_best: tuple
    cv_best_isomap: tuple
    fpca_mspe: dict
    fpca_rspe: dict
    manifold_mspe: dict
    manifold_rspe: dict
    manifold_h: dict
    n_compared: dict
    n_excluded: int
    pisomap_mspe: float
    isomap_mspe: float
    pisomap_ratio: float
    per_epsilon_mspe: dict


def _squared_l2_rows(diff, grid):
    """Squared quadrature L2 norm of each row."""
    return (diff * diff) @ grid.weights


def loo_kernel_predictions(coords, curve_matrix, h, kernel="epanechnikov", widen=MAX_WIDENINGS):
    """Leave-self-out kernel average for every embedded subject.

    Subjects whose neighborhood stays empty after the allowed
    bandwidth doublings are left unpredicted.

    Returns
    -------
    tuple
        ``(predictions, predicted)``: row matrix of averages and a
        boolean mask of subjects that received one.
    """
    kfun, _ = kernel_profile(kernel)
    distances = squareform(pdist(coords))
    weights = kfun(distances / h)
    np.fill_diagonal(weights, 0.0)
    totals = weights.sum(axis=1)
    bandwidth = float(h)
    for _ in range(int(widen)):
        empty = totals <= 0.0
        if not np.any(empty):
            break
        bandwidth *= 2.0
        rows = np.nonzero(empty)[0]
        fresh = kfun(distances[rows] / bandwidth)
        fresh[np.arange(rows.size), rows] = 0.0
        weights[rows] = fresh
        totals = weights.sum(axis=1)
    predicted = totals > 0.0
    predictions = np.zeros((coords.shape[0], curve_matrix.shape[1]))
    if np.any(predicted):
        predictions[predicted] = (
            weights[predicted] / totals[predicted, None]
        ) @ curve_matrix
    return predictions, predicted


def _manifold_errors_at_dim(
    samples, curves, curve_matrix, truth_matrix, grid, D, cache, epsilon, delta, d, seed, kernel
):
    """Bandwidth re-selection and truth errors at one dimension.

    Returns ``(mspe, rspe, h, indices, predicted_mask)`` where indices
    are the connected subjects and the mask flags those predicted.
    """
    report = cross_validate(
        samples,
        curves,
        CvConfig(
            epsilon_candidates=(epsilon,),
            delta_candidates=(delta,),
            dim=d,
            seed=seed,
            kernel=kernel,
        ),
        D=D,
        cache=cache,
    )
    h = report.best.h
    cached = cache.embedding(epsilon, delta)
    indices = np.asarray(cached.indices, dtype=int)
    d_eff = min(d, cached.embedding.d)
    coords = cached.embedding.coordinates[:, :d_eff]
    predictions, predicted = loo_kernel_predictions(
        coords, curve_matrix[indices], h, kernel
    )
    truth_rows = truth_matrix[indices]
    sq = _squared_l2_rows(truth_rows - predictions, grid)
    if not np.any(predicted):
        return float("nan"), float("nan"), h, indices, predicted
    mspe_val = float(np.mean(sq[predicted]))
    center = truth_rows[predicted].mean(axis=0)
    denom = float(np.sum(_squared_l2_rows(truth_rows[predicted] - center, grid)))
    rspe_val = float(np.sum(sq[predicted]) / denom) if denom > 0 else float("nan")
    return mspe_val, rspe_val, h, indices, predicted


def run_benchmark(
    spec,
    dims=DEFAULT_DIMS,
    grid_size=101,
    per_epsilon_ks=DEFAULT_PER_EPSILON_KS,
    kernel="epanechnikov",
):
    """Run the full benchmark pipeline on one generated dataset.

    Parameters
    ----------
    spec : SimSpec
    dims : sequence of int
        Truncation levels / embedding dimensions compared.
    grid_size : int
        Working grid resolution.
    per_epsilon_ks : sequence of int or None
        Nearest-neighbor ranks defining the neighborhood radii whose
        sensitivity is probed; None skips that table.
    kernel : str

    Returns
    -------
    BenchmarkReport
    """
    dims = tuple(int(d) for d in dims)
    grid = working_grid(grid_size)
    sim = generate(spec, grid)
    samples = sim.samples
    truth_matrix = np.vstack([f.values for f in sim.truth])

    model = fit_fpca(samples, grid, kernel=kernel, min_components=max(dims))
    curves = model.fitted_curves()
    curve_matrix = np.vstack([f.values for f in curves])
    D = pairwise_l2_scores(model.scores[:, : model.K])
    cache = EmbeddingCache(D)

    loo = loo_reconstructions(
        samples, grid, dims, h_mu=model.h_mu, h_G=model.h_G, kernel=kernel
    )

    report_p = cross_validate(
        samples, curves, CvConfig(seed=spec.seed, kernel=kernel), D=D, cache=cache
    )
    eps_p, delta_p, h_p = report_p.best_triple
    report_i = cross_validate(
        samples,
        curves,
        CvConfig(seed=spec.seed, kernel=kernel, delta_fractions=(0.0,)),
        D=D,
        cache=cache,
    )
    eps_i, delta_i, h_i = report_i.best_triple

    cached_p = cache.embedding(eps_p, delta_p)
    fde_by_dim = fde_table(D, cache, dims)
    fde_dims = sorted(fde_by_dim)
    selection = dimension_from_fde(
        [fde_by_dim[d] for d in fde_dims], dims=fde_dims
    )
    intrinsic = INTRINSIC_DIM[spec.manifold_id]

    fpca_mspe = {}
    fpca_rspe = {}
    manifold_mspe = {}
    manifold_rspe = {}
    manifold_h = {}
    n_compared = {}
    for d in dims:
        m_mspe, m_rspe, h_d, indices, predicted = _manifold_errors_at_dim(
            samples,
            curves,
            curve_matrix,
            truth_matrix,
            grid,
            D,
            cache,
            eps_p,
            delta_p,
            d,
            spec.seed,
            kernel,
        )
        manifold_mspe[d] = m_mspe
        manifold_rspe[d] = m_rspe
        manifold_h[d] = h_d
        compared = indices[predicted]
        n_compared[d] = int(compared.size)
        loo_rows = np.vstack([loo[i][d].values for i in compared])
        sq = _squared_l2_rows(truth_matrix[compared] - loo_rows, grid)
        fpca_mspe[d] = float(np.mean(sq))
        center = truth_matrix[compared].mean(axis=0)
        denom = float(np.sum(_squared_l2_rows(truth_matrix[compared] - center, grid)))
        fpca_rspe[d] = float(np.sum(sq) / denom) if denom > 0 else float("nan")

    iso_mspe, _, _, _, _ = _manifold_errors_at_dim(
        samples,
        curves,
        curve_matrix,
        truth_matrix,
        grid,
        D,
        cache,
        eps_i,
        delta_i,
        intrinsic,
        spec.seed,
        kernel,
    )
    pisomap_mspe = manifold_mspe.get(intrinsic, float("nan"))
    ratio = pisomap_mspe / iso_mspe if iso_mspe and np.isfinite(iso_mspe) else float("nan")

    per_epsilon = {}
    if per_epsilon_ks:
        for k in per_epsilon_ks:
            per_epsilon[int(k)] = _per_epsilon_mspe(
                samples,
                curves,
                curve_matrix,
                truth_matrix,
                grid,
                D,
                cache,
                int(k),
                intrinsic,
                spec.seed,
                kernel,
            )

    return BenchmarkReport(
        spec=spec,
        grid_size=int(grid_size),
        noise_sigma2=float(sim.noise_sigma2),
        fpca_K=int(model.K),
        fde_by_dim=fde_by_dim,
        selected_d=int(selection.d),
        selection_converged=bool(selection.converged),
        intrinsic_d=int(intrinsic),
        cv_best=(float(eps_p), float(delta_p), float(h_p)),
        cv_best_isomap=(float(eps_i), float(h_i)),
        fpca_mspe=fpca_mspe,
        fpca_rspe=fpca_rspe,
        manifold_mspe=manifold_mspe,
        manifold_rspe=manifold_rspe,
        manifold_h=manifold_h,
        n_compared=n_compared,
        n_excluded=int(len(samples) - len(cached_p.indices)),
        pisomap_mspe=float(pisomap_mspe),
        isomap_mspe=float(iso_mspe),
        pisomap_ratio=float(ratio),
        per_epsilon_mspe=per_epsilon,
    )


def _per_epsilon_mspe(
    samples, curves, curve_matrix, truth_matrix, grid, D, cache, k, intrinsic, seed, kernel
):
    """Manifold MSPE at the intrinsic dimension for one neighborhood
    radius preset, floored at the connectivity bound, with the penalty
    and bandwidth re-optimized."""
    epsilon = max(knn_epsilon_candidates(D, (k,))[0], epsilon_lower_bound(D))
    report = cross_validate(
        samples,
        curves,
        CvConfig(epsilon_candidates=(epsilon,), dim=intrinsic, seed=seed, kernel=kernel),
        D=D,
        cache=cache,
    )
    eps_b, delta_b, _ = report.best_triple
    mspe_val, _, _, _, _ = _manifold_errors_at_dim(
        samples,
        curves,
        curve_matrix,
        truth_matrix,
        grid,
        D,
        cache,
        eps_b,
        delta_b,
        intrinsic,
        seed,
        kernel,
    )
    return float(mspe_val)


def standard_specs(
    manifolds=MANIFOLDS, noise_ratios=DEFAULT_NOISE_RATIOS, seeds=DEFAULT_SEEDS, n=200, points_per_curve=30
):
    """The benchmark grid: manifold x noise ratio x seed."""
    return [
        SimSpec(m, n=n, points_per_curve=points_per_curve, noise_ratio=r, seed=s)
        for m in manifolds
        for r in noise_ratios
        for s in seeds
    ]


def run_suite(
    specs,
    dims=DEFAULT_DIMS,
    grid_size=101,
    per_epsilon_ks=DEFAULT_PER_EPSILON_KS,
    kernel="epanechnikov",
    workers=None,
):
    """Run many benchmark datasets, optionally across processes.

    Results are returned in input order regardless of scheduling, so a
    fixed spec list gives identical output for any worker count.
    """
    specs = list(specs)
    if workers is None:
        workers = os.cpu_count() or 1
    workers = max(1, min(int(workers), len(specs)))
    if workers == 1:
        return [
            run_benchmark(spec, dims, grid_size, per_epsilon_ks, kernel) for spec in specs
        ]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(run_benchmark, spec, dims, grid_size, per_epsilon_ks, kernel)
            for spec in specs
        ]
        return [f.result() for f in futures]


def aggregate_suite(reports):
    """Seed-averaged metrics grouped by (manifold, noise ratio).

    Dictionary values hold the per-dimension means over seeds plus the
    averaged ratio and radius-sensitivity entries; per-seed values are
    kept under ``"seeds"`` for dispersion checks.
    """
    groups = {}
    for report in reports:
        key = (report.spec.manifold_id, report.spec.noise_ratio)
        groups.setdefault(key, []).append(report)

    def _finite_mean(values):
        finite = [v for v in values if v is not None and np.isfinite(v)]
        return float(np.mean(finite)) if finite else None

    def _mean_by_dim(items):
        dims = sorted({d for item in items for d in item})
        return {d: _finite_mean([item.get(d) for item in items]) for d in dims}

    out = {}
    for key, members in groups.items():
        members = sorted(members, key=lambda r: r.spec.seed)
        per_eps_keys = sorted({k for r in members for k in r.per_epsilon_mspe})
        out[key] = {
            "fde": _mean_by_dim([r.fde_by_dim for r in members]),
            "fpca_mspe": _mean_by_dim([r.fpca_mspe for r in members]),
            "fpca_rspe": _mean_by_dim([r.fpca_rspe for r in members]),
            "manifold_mspe": _mean_by_dim([r.manifold_mspe for r in members]),
            "manifold_rspe": _mean_by_dim([r.manifold_rspe for r in members]),
            "selected_d": [r.selected_d for r in members],
            "intrinsic_d": members[0].intrinsic_d,
            "ratio_mean": _finite_mean([r.pisomap_ratio for r in members]),
            "per_epsilon": {
                k: _finite_mean([r.per_epsilon_mspe.get(k) for r in members])
                for k in per_eps_keys
            },
            "seeds": members,
        }
    return out


def convergence_loo_error(manifold_id, n, seed, grid_size=101, kernel="epanechnikov"):
    """Mean leave-one-out manifold prediction error on noiseless data.

    Fits the standard pipeline to a noiseless dataset of the given
    size and returns the truth MSPE of leave-self-out predictions at
    the intrinsic dimension.  Used to check that error shrinks as the
    sample grows.
    """
    spec = SimSpec(manifold_id, n=n, noise_ratio=0.0, seed=seed)
    grid = working_grid(grid_size)
    sim = generate(spec, grid)
    truth_matrix = np.vstack([f.values for f in sim.truth])
    model = fit_fpca(sim.samples, grid, kernel=kernel)
    curves = model.fitted_curves()
    curve_matrix = np.vstack([f.values for f in curves])
    D = pairwise_l2_scores(model.scores[:, : model.K])
    cache = EmbeddingCache(D)
    report = cross_validate(
        sim.samples, curves, CvConfig(seed=seed, kernel=kernel), D=D, cache=cache
    )
    eps, delta, _ = report.best_triple
    mspe_val, _, _, _, _ = _manifold_errors_at_dim(
        sim.samples,
        curves,
        curve_matrix,
        truth_matrix,
        grid,
        D,
        cache,
        eps,
        delta,
        INTRINSIC_DIM[manifold_id],
        seed,
        kernel,
    )
    return float(mspe_val)
