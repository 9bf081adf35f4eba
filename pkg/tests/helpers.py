"""Shared data builders and exact property checks.

The property checks live here so the acceptance gate re-runs the very
same assertions the unit suites exercise, instead of a paraphrase.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial.distance import pdist, squareform

from fmca.geodesic import all_pairs_geodesic, build_graph
from fmca.grids import CurveSample, Grid, l2_inner
from fmca.manifold import fit_manifold, fmc_scores, inverse_map
from fmca.mds import Embedding, classical_mds, embedding_distances


def curve_samples(rows, times, prefix="s"):
    """CurveSample list from a value matrix at shared times."""
    rows = np.asarray(rows, dtype=float)
    return [CurveSample(f"{prefix}{i:03d}", times, row) for i, row in enumerate(rows)]


def kl_dataset(n=80, n_obs=40, sigma=0.0, seed=0, grid_size=101):
    """Two-component expansion with known mean and eigenstructure.

    Mean ``t + sin(2 pi t)`` on [0, 1]; components
    ``sqrt(2) sin(2 pi t)`` and ``sqrt(2) cos(2 pi t)``, orthonormal in
    L2[0, 1], with score variances 4 and 1.  Gaussian noise of
    standard deviation ``sigma`` is added to the observations.

    Returns
    -------
    tuple
        ``(samples, info)`` where info maps names to the generating
        pieces: grid, times, xi, mean, phis, lambdas, signal.
    """
    rng = np.random.default_rng(seed)
    times = np.linspace(0.0, 1.0, n_obs)
    grid = Grid.uniform(0.0, 1.0, grid_size)
    xi = rng.normal(size=(n, 2)) * np.sqrt([4.0, 1.0])

    def mean_fn(t):
        return t + np.sin(2.0 * np.pi * t)

    def phi1(t):
        return math.sqrt(2.0) * np.sin(2.0 * np.pi * t)

    def phi2(t):
        return math.sqrt(2.0) * np.cos(2.0 * np.pi * t)

    signal = (
        mean_fn(times)[None, :]
        + xi[:, :1] * phi1(times)[None, :]
        + xi[:, 1:] * phi2(times)[None, :]
    )
    noisy = signal + sigma * rng.normal(size=signal.shape)
    info = {
        "grid": grid,
        "times": times,
        "xi": xi,
        "mean": mean_fn,
        "phis": (phi1, phi2),
        "lambdas": (4.0, 1.0),
        "signal": signal,
    }
    return curve_samples(noisy, times), info


def plain_embedding(coordinates):
    """Embedding wrapper around raw coordinates, centered as given."""
    coordinates = np.asarray(coordinates, dtype=float)
    if coordinates.ndim == 1:
        coordinates = coordinates[:, None]
    return Embedding(
        coordinates=coordinates,
        d=coordinates.shape[1],
        eigenvalues=np.zeros(coordinates.shape[0]),
        source_indices=list(range(coordinates.shape[0])),
    )


def random_geodesics(seed, n_low=5, n_high=40, delta_fraction=0.0):
    """Geodesic solve over a random planar cloud; returns (D, result)."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(n_low, n_high + 1))
    points = rng.normal(size=(n, 2))
    D = squareform(pdist(points))
    offdiag = D[np.triu_indices(n, 1)]
    epsilon = float(np.quantile(offdiag, rng.uniform(0.2, 0.7)))
    graph = build_graph(D, epsilon, 0.0)
    delta = 0.0
    if delta_fraction > 0.0:
        delta = float(np.quantile(graph.density, delta_fraction) + 1)
        graph = build_graph(D, epsilon, delta)
    return D, all_pairs_geodesic(graph)


def check_geodesic_metric_axioms(D, result, atol=1e-9):
    """Metric axioms of the penalized optimum plus L2 dominance.

    The penalized matrix is a shortest-path metric on every connected
    component: zero diagonal, symmetry, nonnegativity and the triangle
    inequality.  The unpenalized path lengths dominate the direct L2
    distances and are dominated by the penalized weights.
    """
    P = result.penalized
    B = result.distances
    assert np.array_equal(P, P.T)
    assert np.array_equal(B, B.T)
    assert np.all(np.diag(P) == 0.0)
    assert np.all(np.diag(B) == 0.0)
    finite = np.isfinite(P)
    assert np.array_equal(finite, np.isfinite(B))
    assert np.all(P[finite] >= 0.0)
    assert np.all(B[finite] >= D[finite] - atol)
    assert np.all(P[finite] >= B[finite] - atol)
    for comp in result.components:
        comp = list(comp)
        sub = P[np.ix_(comp, comp)]
        assert np.all(np.isfinite(sub))
        # d(i, j) <= d(i, k) + d(k, j) for all triples; symmetry lets
        # the last term broadcast as d(j, k).
        lhs = sub[:, :, None]
        rhs = sub[:, None, :] + sub[None, :, :]
        assert np.all(lhs <= rhs + atol)
    # Cross-component pairs are unreachable.
    labels = np.empty(P.shape[0], dtype=int)
    for c, comp in enumerate(result.components):
        labels[list(comp)] = c
    cross = labels[:, None] != labels[None, :]
    assert np.all(np.isinf(P[cross]))


def exhaustive_shortest_paths(n, edge_index, edge_weight, edge_l2):
    """Minimum penalized weight over all simple paths, per pair.

    Depth-first enumeration; intended for graphs with at most a
    handful of vertices.  Returns (penalized, base) matrices matching
    the convention that base tracks the L2 length of the
    weight-optimal path.
    """
    adjacency = [[] for _ in range(n)]
    for (i, j), w, b in zip(edge_index, edge_weight, edge_l2):
        adjacency[i].append((int(j), float(w), float(b)))
        adjacency[j].append((int(i), float(w), float(b)))
    penalized = np.full((n, n), math.inf)
    base = np.full((n, n), math.inf)
    np.fill_diagonal(penalized, 0.0)
    np.fill_diagonal(base, 0.0)
    for source in range(n):
        stack = [(source, {source}, 0.0, 0.0)]
        while stack:
            u, visited, w, b = stack.pop()
            for v, ew, eb in adjacency[u]:
                if v in visited:
                    continue
                nw, nb = w + ew, b + eb
                if nw < penalized[source, v]:
                    penalized[source, v] = nw
                    base[source, v] = nb
                stack.append((v, visited | {v}, nw, nb))
    return penalized, base


def check_dijkstra_against_exhaustive(instances=100, seed=0):
    """All-pairs geodesics equal the simple-path oracle on small graphs."""
    rng = np.random.default_rng(seed)
    for _ in range(instances):
        n = int(rng.integers(2, 8))
        points = rng.normal(size=(n, 2))
        D = squareform(pdist(points))
        offdiag = D[np.triu_indices(n, 1)]
        epsilon = float(np.quantile(offdiag, rng.uniform(0.3, 1.0))) + 1e-9
        delta = float(rng.integers(0, n))
        graph = build_graph(D, epsilon, delta)
        result = all_pairs_geodesic(graph)
        oracle_p, oracle_b = exhaustive_shortest_paths(
            n, graph.edge_index, graph.edge_weight, graph.edge_l2
        )
        oracle_p = np.minimum(oracle_p, oracle_p.T)
        oracle_b = np.minimum(oracle_b, oracle_b.T)
        assert np.allclose(result.penalized, oracle_p, rtol=1e-12, atol=1e-12, equal_nan=False)
        assert np.allclose(result.distances, oracle_b, rtol=1e-9, atol=1e-9)


def check_classical_mds_euclidean(seeds=(0, 1, 2), atol=1e-8):
    """Classical scaling reproduces Euclidean distance matrices."""
    for seed in seeds:
        rng = np.random.default_rng(seed)
        points = rng.normal(size=(20, 3)) * np.array([3.0, 1.5, 0.7])
        D = squareform(pdist(points))
        emb = classical_mds(D, 3)
        assert float(np.max(np.abs(embedding_distances(emb) - D))) < atol


def check_orthonormal_eigenfunctions(model, atol=1e-6):
    """Quadrature inner products of the eigenfunctions form an identity."""
    funcs = model.eigenfunctions
    gram = np.array([[l2_inner(f, g) for g in funcs] for f in funcs])
    assert float(np.max(np.abs(gram - np.eye(len(funcs))))) < atol


def check_kernel_weight_normalization(seed=0, atol=1e-12):
    """Averaging identical curves returns them unchanged.

    The kernel average is a convex combination, so constant inputs are
    reproduced exactly when the weights sum to one.
    """
    from fmca.manifold import kernel_average

    rng = np.random.default_rng(seed)
    coords = rng.normal(size=(25, 2))
    constant = rng.normal(size=12)
    curve_matrix = np.tile(constant, (25, 1))
    for _ in range(10):
        theta = rng.normal(size=2) * 0.5
        out = kernel_average(theta, coords, curve_matrix, h=2.5)
        assert float(np.max(np.abs(out - constant))) < atol


def check_fmc_score_covariance(model, atol=1e-8):
    """Score covariance is diagonal with the component variances."""
    scores = fmc_scores(model).scores
    cov = np.atleast_2d(np.cov(scores, rowvar=False, ddof=1))
    assert float(np.max(np.abs(np.diag(cov) - model.fmc_eigenvalues))) < atol
    off = cov - np.diag(np.diag(cov))
    assert float(np.max(np.abs(off))) < atol


def check_rotation_equivariance(seed=0, atol=1e-10):
    """Rotating the representation space leaves inverse-map output alone."""
    from fmca.grids import Grid, GridFunction

    rng = np.random.default_rng(seed)
    grid = Grid.uniform(0.0, 1.0, 21)
    coords = rng.normal(size=(30, 3))
    curves = [GridFunction(grid, rng.normal(size=21)) for _ in range(30)]
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    model = fit_manifold(plain_embedding(coords), curves, h=1.5)
    rotated = fit_manifold(plain_embedding(coords @ q.T), curves, h=1.5)
    for _ in range(10):
        theta = rng.normal(size=3) * 0.4
        f = inverse_map(theta, model, widen=3)
        g = inverse_map(q @ theta, rotated, widen=3)
        assert float(np.max(np.abs(f.values - g.values))) < atol


def small_manifold_model(seed=0, n=40, d=2, h=1.2):
    """Manifold model over random coordinates and random curves."""
    from fmca.grids import Grid, GridFunction

    rng = np.random.default_rng(seed)
    grid = Grid.uniform(0.0, 1.0, 31)
    coords = rng.normal(size=(n, d))
    curves = [GridFunction(grid, rng.normal(size=31)) for _ in range(n)]
    return fit_manifold(plain_embedding(coords), curves, h=h)
