"""Exception types shared across the package."""

from __future__ import annotations


class FmcaError(Exception):
    """Base class for all errors raised by this package."""


class GridMismatchError(FmcaError):
    """Two grid functions do not share the same evaluation grid."""


class BandwidthTooSmallError(FmcaError):
    """A kernel smoother received zero total weight at some evaluation point.

    Carries the offending point so the caller can enlarge the bandwidth.
    """

    def __init__(self, point, message: str | None = None):
        self.point = point
        super().__init__(message or f"zero kernel weight at evaluation point {point!r}; increase the bandwidth")


class InsufficientDataError(FmcaError):
    """Not enough subjects or measurements for the requested estimator."""


class DegenerateSpectrumError(FmcaError):
    """All eigenvalues are zero; truncation rules are undefined."""


class DegenerateDataError(FmcaError):
    """A ratio-based criterion has a zero denominator."""


class NoValidEpsilonError(FmcaError):
    """Every step-length candidate leaves too large a fraction of subjects disconnected.

    ``component_sizes`` maps each rejected candidate to the sizes of the
    connected components it produced.
    """

    def __init__(self, component_sizes: dict):
        self.component_sizes = component_sizes
        detail = "; ".join(f"eps={eps:.6g}: components {sizes}" for eps, sizes in component_sizes.items())
        super().__init__(f"no step-length candidate keeps enough subjects connected ({detail})")


class EmptyNeighborhoodError(FmcaError):
    """A kernel average has no support points within the bandwidth.

    ``nearest_distance`` is the distance from the query point to the closest
    support point, so the caller knows how far the bandwidth must grow.
    """

    def __init__(self, nearest_distance: float, message: str | None = None):
        self.nearest_distance = float(nearest_distance)
        super().__init__(
            message
            or f"no support point within the kernel bandwidth (nearest is at distance {nearest_distance:.6g})"
        )


class CvInfeasibleError(FmcaError):
    """Every cross-validation candidate triple failed; carries diagnostics."""

    def __init__(self, diagnostics: list[str]):
        self.diagnostics = list(diagnostics)
        super().__init__("cross-validation infeasible for every candidate triple:\n" + "\n".join(self.diagnostics))


class CurveCsvError(FmcaError):
    """Malformed curve CSV input; carries the 1-based line number."""

    def __init__(self, line_number: int, message: str):
        self.line_number = int(line_number)
        super().__init__(f"line {line_number}: {message}")
