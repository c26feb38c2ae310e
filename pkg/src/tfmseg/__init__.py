"""Multiple change point detection and mode identification for tensor factor time series."""

__version__ = "0.1.0"

from .errors import TFMSegError, UnsupportedMissingError  # noqa: E402
from .factor import (  # noqa: E402
    LoadingSet,
    PseudoFactorStats,
    TensorSeries,
    estimate_loadings,
    estimate_pseudo_factors,
    estimate_ranks,
    mode_covariance,
    pseudo_factor_stats,
)
from .modeid import identify_modes, loading_distance, mode_informed_loadings, threshold_zeta  # noqa: E402
from .pipeline import DetectConfig, Detection, detect, report_document  # noqa: E402
from .segmentation import (  # noqa: E402
    cusum,
    detector,
    generate_seeded_intervals,
    tfmseg,
    threshold_pi,
    weight_matrix,
)

__all__ = [
    "__version__",
    "TFMSegError",
    "UnsupportedMissingError",
    "TensorSeries",
    "LoadingSet",
    "PseudoFactorStats",
    "mode_covariance",
    "estimate_ranks",
    "estimate_loadings",
    "estimate_pseudo_factors",
    "pseudo_factor_stats",
    "generate_seeded_intervals",
    "cusum",
    "detector",
    "weight_matrix",
    "threshold_pi",
    "tfmseg",
    "identify_modes",
    "threshold_zeta",
    "loading_distance",
    "mode_informed_loadings",
    "DetectConfig",
    "Detection",
    "detect",
    "report_document",
]
