"""Shared evaluation grids, curve samples, and quadrature-based L2 arithmetic.

Everything downstream works with functions represented by their values on a
common dense grid; integrals are trapezoidal sums, which are exact for
piecewise-linear integrands on the grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fmca.errors import GridMismatchError


@dataclass(frozen=True)
class Grid:
    """An ordered set of evaluation points on a bounded time domain."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("grid needs at least two points")
        if not np.all(np.diff(pts) > 0):
            raise ValueError("grid points must be strictly increasing")
        if not np.all(np.isfinite(pts)):
            raise ValueError("grid points must be finite")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "_weights", _trapezoid_weights(pts))

    @classmethod
    def uniform(cls, start: float, stop: float, num: int = 101) -> "Grid":
        return cls(np.linspace(start, stop, num))

    @property
    def size(self) -> int:
        return self.points.size

    @property
    def start(self) -> float:
        return float(self.points[0])

    @property
    def stop(self) -> float:
        return float(self.points[-1])

    @property
    def span(self) -> float:
        return self.stop - self.start

    @property
    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights; positive, summing to the domain length."""
        return self._weights

    def __eq__(self, other) -> bool:
        return isinstance(other, Grid) and np.array_equal(self.points, other.points)

    def __len__(self) -> int:
        return self.points.size


def _trapezoid_weights(points: np.ndarray) -> np.ndarray:
    d = np.diff(points)
    w = np.zeros_like(points)
    w[:-1] += d / 2.0
    w[1:] += d / 2.0
    return w


@dataclass(frozen=True, eq=False)
class CurveSample:
    """One subject's raw measurements: noisy values at (possibly irregular) times."""

    subject_id: str
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        y = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError(f"subject {self.subject_id}: need at least two measurements")
        if y.shape != t.shape:
            raise ValueError(f"subject {self.subject_id}: times and values must have equal length")
        if np.any(np.diff(t) < 0):
            raise ValueError(f"subject {self.subject_id}: times must be nondecreasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
            raise ValueError(f"subject {self.subject_id}: measurements must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", y)

    @property
    def n_obs(self) -> int:
        return self.times.size


@dataclass(frozen=True, eq=False)
class GridFunction:
    """A function represented by its values on a shared grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.size,):
            raise ValueError("values must have one entry per grid point")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        object.__setattr__(self, "values", v)

    def interp(self, times: np.ndarray) -> np.ndarray:
        """Evaluate at arbitrary times by linear interpolation."""
        return np.interp(np.asarray(times, dtype=float), self.grid.points, self.values)

    def __add__(self, other: "GridFunction") -> "GridFunction":
        _require_same_grid(self, other)
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        _require_same_grid(self, other)
        return GridFunction(self.grid, self.values - other.values)

    def __mul__(self, scalar: float) -> "GridFunction":
        return GridFunction(self.grid, self.values * float(scalar))

    __rmul__ = __mul__


def _require_same_grid(f: GridFunction, g: GridFunction) -> None:
    if f.grid != g.grid:
        raise GridMismatchError("grid functions are defined on different grids")


def l2_inner(f: GridFunction, g: GridFunction) -> float:
    """Trapezoidal approximation of the L2 inner product of two grid functions."""
    _require_same_grid(f, g)
    return float(np.sum(f.grid.weights * f.values * g.values))


def l2_norm(f: GridFunction) -> float:
    return float(np.sqrt(max(l2_inner(f, f), 0.0)))


def l2_distance(f: GridFunction, g: GridFunction) -> float:
    _require_same_grid(f, g)
    diff = f.values - g.values
    return float(np.sqrt(max(np.sum(f.grid.weights * diff * diff), 0.0)))


def mean_curve(curves: list[GridFunction]) -> GridFunction:
    """Pointwise cross-sectional average of curves on a shared grid."""
    if not curves:
        raise ValueError("need at least one curve")
    grid = curves[0].grid
    for c in curves[1:]:
        _require_same_grid(curves[0], c)
    return GridFunction(grid, np.mean([c.values for c in curves], axis=0))


def default_grid(samples: list[CurveSample], num: int = 101) -> Grid:
    """Equally spaced working grid spanning the pooled time range of the samples."""
    if not samples:
        raise ValueError("need at least one sample")
    lo = min(float(s.times[0]) for s in samples)
    hi = max(float(s.times[-1]) for s in samples)
    if not hi > lo:
        raise ValueError("pooled times span a single point; no grid can be built")
    return Grid.uniform(lo, hi, num)


def pooled_points(samples: list[CurveSample]) -> tuple[np.ndarray, np.ndarray]:
    """All (t, y) measurement pairs concatenated across subjects."""
    t = np.concatenate([s.times for s in samples])
    y = np.concatenate([s.values for s in samples])
    return t, y
