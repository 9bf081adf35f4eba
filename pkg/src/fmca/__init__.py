"""Functional manifold component analysis.

Tools for functional data whose curves lie near a low-dimensional
manifold in function space: curve smoothing and functional principal
component expansion, geodesic distances on a density-penalized
neighborhood graph, classical multidimensional scaling with automatic
dimension selection, manifold means, component decompositions, modes
of variation, and kernel-average prediction, plus simulators and a
benchmark harness exercising the whole pipeline.
"""

__version__ = "0.1.0"

from .errors import (
    BandwidthTooSmallError,
    CurveCsvError,
    CvInfeasibleError,
    DegenerateDataError,
    DegenerateSpectrumError,
    EmptyNeighborhoodError,
    FmcaError,
    GridMismatchError,
    InsufficientDataError,
    NoValidEpsilonError,
)
from .grids import CurveSample, Grid, GridFunction, default_grid, mean_curve
from .smoothing import (
    KERNELS,
    bandwidth_candidates,
    gcv_bandwidth_1d,
    gcv_bandwidth_2d,
    local_linear_smooth_1d,
    local_linear_smooth_2d,
    nadaraya_watson_smooth,
)
from .fpca import (
    FpcaModel,
    eigendecompose,
    estimate_covariance,
    estimate_mean,
    fit_fpca,
    loo_reconstructions,
    reconstruct,
    scores_conditional,
    scores_integration,
    select_K_fve,
)
from .geodesic import (
    GeodesicResult,
    NeighborhoodGraph,
    all_pairs_geodesic,
    build_graph,
    delta_from_fraction,
    knn_epsilon_candidates,
    local_density,
    min_epsilon_for_connectivity,
    pairwise_l2,
    pairwise_l2_scores,
)
from .mds import (
    DimensionSelection,
    Embedding,
    classical_mds,
    dimension_from_fde,
    fde,
    select_dimension,
    stress_fde,
    stress_refine,
)
from .manifold import (
    FmcScores,
    ManifoldModel,
    fit_manifold,
    fmc_decompose,
    fmc_scores,
    inverse_map,
    linear_mode,
    manifold_mean,
    manifold_mode,
    predict_curve,
)
from .selection import (
    CvConfig,
    CvReport,
    CvRow,
    cross_validate,
    fde_report_grid,
    fde_table,
    mspe,
    rspe,
)
from .simulate import (
    MANIFOLDS,
    SimOutput,
    SimSpec,
    add_noise,
    generate,
    signal_variance,
    working_grid,
)
from .pipeline import FmcaFit, fit_pipeline, load_fit, save_fit
from .benchmark import (
    BenchmarkReport,
    INTRINSIC_DIM,
    aggregate_suite,
    convergence_loo_error,
    run_benchmark,
    run_suite,
    standard_specs,
)
from .io import read_curves, write_curves

__all__ = [
    "__version__",
    "BandwidthTooSmallError",
    "CurveCsvError",
    "CvInfeasibleError",
    "DegenerateDataError",
    "DegenerateSpectrumError",
    "EmptyNeighborhoodError",
    "FmcaError",
    "GridMismatchError",
    "InsufficientDataError",
    "NoValidEpsilonError",
    "CurveSample",
    "Grid",
    "GridFunction",
    "default_grid",
    "mean_curve",
    "KERNELS",
    "bandwidth_candidates",
    "gcv_bandwidth_1d",
    "gcv_bandwidth_2d",
    "local_linear_smooth_1d",
    "local_linear_smooth_2d",
    "nadaraya_watson_smooth",
    "FpcaModel",
    "eigendecompose",
    "estimate_covariance",
    "estimate_mean",
    "fit_fpca",
    "loo_reconstructions",
    "reconstruct",
    "scores_conditional",
    "scores_integration",
    "select_K_fve",
    "GeodesicResult",
    "NeighborhoodGraph",
    "all_pairs_geodesic",
    "build_graph",
    "delta_from_fraction",
    "knn_epsilon_candidates",
    "local_density",
    "min_epsilon_for_connectivity",
    "pairwise_l2",
    "pairwise_l2_scores",
    "DimensionSelection",
    "Embedding",
    "classical_mds",
    "dimension_from_fde",
    "fde",
    "select_dimension",
    "stress_fde",
    "stress_refine",
    "FmcScores",
    "ManifoldModel",
    "fit_manifold",
    "fmc_decompose",
    "fmc_scores",
    "inverse_map",
    "linear_mode",
    "manifold_mean",
    "manifold_mode",
    "predict_curve",
    "CvConfig",
    "CvReport",
    "CvRow",
    "cross_validate",
    "fde_report_grid",
    "fde_table",
    "mspe",
    "rspe",
    "MANIFOLDS",
    "SimOutput",
    "SimSpec",
    "add_noise",
    "generate",
    "signal_variance",
    "working_grid",
    "FmcaFit",
    "fit_pipeline",
    "load_fit",
    "save_fit",
    "BenchmarkReport",
    "INTRINSIC_DIM",
    "aggregate_suite",
    "convergence_loo_error",
    "run_benchmark",
    "run_suite",
    "standard_specs",
    "read_curves",
    "write_curves",
]
