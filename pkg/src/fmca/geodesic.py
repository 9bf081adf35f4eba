"""Geodesic distance estimation over a sample of curves.

Builds an epsilon-neighborhood graph on pairwise L2 distances, applies
a local-density penalty to edge weights, and runs Dijkstra's algorithm
from every source to obtain all-pairs geodesic distances.  Paths are
selected by minimum penalized weight; the distance reported for each
pair is the unpenalized L2 length summed along that optimal path, with
the penalized optimum kept alongside.  A zero density threshold turns
the penalty off and recovers plain ISOMAP distances.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import GridMismatchError, NoValidEpsilonError

# Penalty applied to an edge whose shared density count is zero under
# an active threshold; the reciprocal-square rule is undefined there,
# so the edge is made effectively unusable while staying finite.
ZERO_DENSITY_PENALTY = 1e6


@dataclass(frozen=True, eq=False)
class NeighborhoodGraph:
    """Epsilon-neighborhood graph with density-penalized edge weights.

    Attributes
    ----------
    n : int
        Vertex count.
    epsilon : float
        Step-length cap; vertices closer than this are joined.
    delta : float
        Density threshold; edges whose shared density count falls
        below it are penalized.
    density : ndarray
        Per-vertex neighbor counts within epsilon, self excluded.
    edge_index : ndarray, shape (m, 2)
        Vertex pairs (i < j) of the undirected edges.
    edge_l2 : ndarray, shape (m,)
        Unpenalized L2 distance of each edge.
    edge_weight : ndarray, shape (m,)
        Penalized weight of each edge, >= edge_l2.
    """

    n: int
    epsilon: float
    delta: float
    density: np.ndarray
    edge_index: np.ndarray
    edge_l2: np.ndarray
    edge_weight: np.ndarray

    def adjacency(self):
        """Per-vertex neighbor, weight and length arrays."""
        neighbors = [[] for _ in range(self.n)]
        for (i, j), w, base in zip(self.edge_index, self.edge_weight, self.edge_l2):
            neighbors[i].append((j, w, base))
            neighbors[j].append((i, w, base))
        out = []
        for entries in neighbors:
            entries.sort()
            if entries:
                idx = np.array([e[0] for e in entries], dtype=int)
                w = np.array([e[1] for e in entries])
                base = np.array([e[2] for e in entries])
            else:
                idx = np.empty(0, dtype=int)
                w = np.empty(0)
                base = np.empty(0)
            out.append((idx, w, base))
        return out


@dataclass(frozen=True, eq=False)
class GeodesicResult:
    """All-pairs geodesic distances and the component structure.

    ``distances`` holds the unpenalized L2 length along each
    penalized-optimal path; ``penalized`` holds the minimized weight
    itself.  Pairs in different components are infinite.
    """

    distances: np.ndarray
    penalized: np.ndarray
    components: list

    def largest_component(self):
        """Vertices of the largest component; ties go to the one
        containing the smallest vertex index."""
        best = max(self.components, key=len)
        return list(best)


def pairwise_l2(curves):
    """Pairwise quadrature L2 distances between grid functions.

    Returns a symmetric matrix with zero diagonal.
    """
    if not curves:
        return np.zeros((0, 0))
    grid = curves[0].grid
    for f in curves[1:]:
        if f.grid != grid:
            raise GridMismatchError("all curves must share one grid")
    matrix = np.vstack([f.values for f in curves])
    weighted = matrix * np.sqrt(grid.weights)[None, :]
    return squareform(pdist(weighted))


def pairwise_l2_scores(scores):
    """Pairwise Euclidean distances between score vectors.

    For curves represented by coefficients on a shared orthonormal
    basis this equals their L2 distance.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.ndim == 1:
        scores = scores[:, None]
    return squareform(pdist(scores))


def local_density(D, epsilon):
    """Neighbor counts within epsilon, self excluded."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    D = np.asarray(D, dtype=float)
    return (D < epsilon).sum(axis=1).astype(int) - 1


def delta_from_fraction(density, fraction):
    """Density threshold penalizing the given fraction of vertices.

    Returns the smallest integer threshold under which at least
    ``ceil(fraction * n)`` of the lowest-density vertices satisfy
    density < threshold; ties at the cut are all penalized.  A zero
    fraction maps to a zero threshold (no penalty).
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    if fraction == 0.0:
        return 0.0
    density = np.sort(np.asarray(density))
    k = int(math.ceil(fraction * density.size))
    return float(density[k - 1] + 1)


def build_graph(D, epsilon, delta):
    """Assemble the penalized epsilon-neighborhood graph.

    Edge weight is the L2 distance inflated by the density penalty
    1/rho^2 whenever the smaller endpoint density rho falls below
    delta; delta = 0 leaves all weights at the raw distances.
    """
    D = np.asarray(D, dtype=float)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    n = D.shape[0]
    density = local_density(D, epsilon)
    ii, jj = np.nonzero(np.triu(D < epsilon, k=1))
    l2 = D[ii, jj]
    rho = np.minimum(density[ii], density[jj]).astype(float)
    penalty = _penalties(rho, delta)
    return NeighborhoodGraph(
        n=n,
        epsilon=float(epsilon),
        delta=float(delta),
        density=density,
        edge_index=np.column_stack([ii, jj]),
        edge_l2=l2,
        edge_weight=l2 * (1.0 + penalty),
    )


def _penalties(rho, delta):
    """Density penalty for edges with endpoint-minimum densities rho."""
    penalty = np.zeros(rho.size)
    if delta > 0:
        hit = rho < delta
        safe = hit & (rho > 0)
        penalty[safe] = 1.0 / rho[safe] ** 2
        penalty[hit & (rho == 0)] = ZERO_DENSITY_PENALTY
    return penalty


def edge_penalties(graph):
    """Density penalty applied to each edge, in edge order.

    Recomputed from the stored densities, so it stays meaningful for
    zero-length edges where the inflation cannot be read off the
    weight.
    """
    ii = graph.edge_index[:, 0]
    jj = graph.edge_index[:, 1]
    rho = np.minimum(graph.density[ii], graph.density[jj]).astype(float)
    return _penalties(rho, graph.delta)


def _connected_components(n, adjacency):
    """Components as sorted vertex lists, ordered by smallest member."""
    seen = np.zeros(n, dtype=bool)
    components = []
    for start in range(n):
        if seen[start]:
            continue
        stack = [start]
        seen[start] = True
        members = []
        while stack:
            u = stack.pop()
            members.append(u)
            for v in adjacency[u][0]:
                if not seen[v]:
                    seen[v] = True
                    stack.append(int(v))
        components.append(sorted(members))
    return components


def all_pairs_geodesic(graph):
    """All-pairs shortest paths by Dijkstra from every source.

    Path selection minimizes penalized weight; ties broken by smaller
    vertex index via the heap ordering.  Unreachable pairs are
    infinite.  Both matrices are exactly symmetric.
    """
    n = graph.n
    adjacency = graph.adjacency()
    penalized = np.full((n, n), math.inf)
    base = np.full((n, n), math.inf)
    for source in range(n):
        dist, length = _dijkstra(n, adjacency, source)
        penalized[source] = dist
        base[source] = length
    # Reversed paths accumulate the same edges in opposite order, so
    # floating-point sums can differ in the last ulp; take the minimum
    # to restore exact symmetry.
    penalized = np.minimum(penalized, penalized.T)
    base = np.minimum(base, base.T)
    components = _connected_components(n, adjacency)
    return GeodesicResult(distances=base, penalized=penalized, components=components)


def _dijkstra(n, adjacency, source):
    dist = np.full(n, math.inf)
    length = np.full(n, math.inf)
    done = np.zeros(n, dtype=bool)
    dist[source] = 0.0
    length[source] = 0.0
    heap = [(0.0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        neighbors, weights, bases = adjacency[u]
        if neighbors.size == 0:
            continue
        candidate = d + weights
        better = candidate < dist[neighbors]
        for v, nd, nb in zip(
            neighbors[better], candidate[better], length[u] + bases[better]
        ):
            dist[v] = nd
            length[v] = nb
            heapq.heappush(heap, (nd, int(v)))
    return dist, length


def knn_epsilon_candidates(D, ks=(5, 8, 12)):
    """Median k-th nearest-neighbor distance for each k.

    Standard presets follow the rule of using the median over subjects
    of the distance to the 5th, 8th and 12th nearest neighbor.
    """
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    without_self = np.sort(D + np.diag(np.full(n, math.inf)), axis=1)
    out = []
    for k in ks:
        if not 1 <= k <= n - 1:
            raise ValueError(f"k={k} out of range for n={n}")
        out.append(float(np.median(without_self[:, k - 1])))
    return out


def epsilon_lower_bound(D, max_disconnected_fraction=0.05):
    """Smallest radius whose graph keeps enough vertices connected.

    Returns the smallest epsilon at which the largest connected
    component of the radius graph covers at least a
    1 - max_disconnected_fraction share of the vertices (boundary
    inclusive, matching the candidate filter).  Derived radius
    candidates are floored at this value so a too-small preset never
    strands more than the allowed fraction.
    """
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    target = n - math.floor(max_disconnected_fraction * n + 1e-9)
    if target <= 1:
        return float(np.nextafter(0.0, math.inf))
    ii, jj = np.triu_indices(n, 1)
    values = D[ii, jj]
    order = np.argsort(values, kind="stable")
    parent = np.arange(n)
    size = np.ones(n, dtype=int)

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for idx in order:
        a, b = find(int(ii[idx])), find(int(jj[idx]))
        if a != b:
            if size[a] < size[b]:
                a, b = b, a
            parent[b] = a
            size[a] += size[b]
            if size[a] >= target:
                # Edges require strict D < epsilon, so step past the
                # critical distance by one representable value.
                return float(np.nextafter(values[idx], math.inf))
    return float(np.nextafter(values[order[-1]], math.inf))


def min_epsilon_for_connectivity(D, candidates, max_disconnected_fraction=0.05):
    """Filter epsilon candidates by connectivity coverage.

    Keeps candidates whose largest connected component leaves at most
    the given fraction of vertices out (boundary inclusive).

    Raises
    ------
    NoValidEpsilonError
        If no candidate passes; carries the component sizes seen per
        candidate.
    """
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    kept = []
    sizes_seen = {}
    for eps in candidates:
        graph = build_graph(D, eps, 0.0)
        components = _connected_components(n, graph.adjacency())
        sizes = sorted((len(c) for c in components), reverse=True)
        sizes_seen[float(eps)] = sizes
        if (n - sizes[0]) / n <= max_disconnected_fraction:
            kept.append(float(eps))
    if not kept:
        raise NoValidEpsilonError(sizes_seen)
    return kept
