"""Dynamic-basis reduction of ensemble time series with static-basis baselines."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    Covariance,
    IntegratorScheme,
    MetricTrace,
    ReductionState,
    compute_covariance,
    initialize_kl,
    pseudo_inverse,
    rank_modes,
    reduction_error,
    rhs_general,
    rhs_phi0,
    run_reduction,
    step,
)
from .snapshots import DerivativeScheme, SnapshotSeries, read_series, subtract_mean, write_series  # noqa: E402
from .weighted import gram_schmidt_weighted, inner_x, inner_xi, orthonormality_defect, weighted_frobenius, weighted_svd  # noqa: E402

__all__ = [
    "Covariance",
    "DerivativeScheme",
    "IntegratorScheme",
    "MetricTrace",
    "ReductionState",
    "SnapshotSeries",
    "compute_covariance",
    "gram_schmidt_weighted",
    "initialize_kl",
    "inner_x",
    "inner_xi",
    "orthonormality_defect",
    "pseudo_inverse",
    "rank_modes",
    "read_series",
    "reduction_error",
    "rhs_general",
    "rhs_phi0",
    "run_reduction",
    "step",
    "subtract_mean",
    "weighted_frobenius",
    "weighted_svd",
    "write_series",
]
