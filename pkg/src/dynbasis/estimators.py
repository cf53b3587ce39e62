"""scikit-learn style wrappers around the functional API.

Rows of ``X`` are realizations (samples), columns are state points, matching
the sklearn ``(n_samples, n_features)`` convention. Internally snapshots are
stored transposed as ``n x s`` matrices.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .baselines.dmd import dmd_fit, dmd_reconstruct
from .baselines.pcm import pcm_fit, pcm_reconstruct, pcm_total_variance
from .baselines.pod import DEFAULT_MEMORY_BUDGET, pod_fit
from .core import DEFAULT_DEFECT_TOL, DEFAULT_REL_THRESHOLD, rank_modes, run_reduction
from .exceptions import DimensionError
from .snapshots import SnapshotSeries
from .validation import as_float_array, check_state_weights


def _check_features(X, n, name="X"):
    X = as_float_array(np.atleast_2d(X), 2, name)
    if X.shape[1] != n:
        raise DimensionError(f"{name} has {X.shape[1]} features, expected {n}")
    return X


class DynamicBasisReduction(BaseEstimator, TransformerMixin):
    """Time-dependent basis fitted to an ensemble time series.

    ``fit`` runs the full reduction; ``transform`` projects realizations onto
    the ranked basis at the final time.

    Parameters
    ----------
    r : int
        Number of modes.
    derivative_scheme : {"FD4", "EE1"}
    integrator : {"RK4", "EE1"}
    rel_threshold : float
        Relative eigenvalue cut of the covariance pseudo-inverse.
    defect_tol : float
        Largest accepted orthonormality defect after a step.
    """

    def __init__(self, r=2, derivative_scheme="FD4", integrator="RK4", rel_threshold=DEFAULT_REL_THRESHOLD, defect_tol=DEFAULT_DEFECT_TOL):
        self.r = r
        self.derivative_scheme = derivative_scheme
        self.integrator = integrator
        self.rel_threshold = rel_threshold
        self.defect_tol = defect_tol

    def fit(self, series, y=None, callback=None):
        if not isinstance(series, SnapshotSeries):
            raise TypeError("fit expects a SnapshotSeries")
        trace, state = run_reduction(
            series,
            self.r,
            self.derivative_scheme,
            self.integrator,
            self.rel_threshold,
            callback=callback,
            defect_tol=self.defect_tol,
        )
        self.trace_ = trace
        self.state_ = state
        self.components_, self.coefficients_, self.explained_variance_ = rank_modes(state, series.wxi)
        self.wx_ = series.wx.copy()
        self.mean_ = series.snapshot(series.K) @ series.wxi
        self.n_features_in_ = series.n
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = _check_features(X, self.n_features_in_)
        return (X - self.mean_) @ (self.wx_[:, None] * self.components_)

    def inverse_transform(self, Z):
        check_is_fitted(self, "components_")
        Z = as_float_array(np.atleast_2d(Z), 2, "Z")
        return Z @ self.components_.T + self.mean_


class ProperOrthogonalDecomposition(BaseEstimator, TransformerMixin):
    """Static POD basis of all mean-subtracted snapshots of all samples."""

    def __init__(self, r=2, stride=1, memory_budget=DEFAULT_MEMORY_BUDGET):
        self.r = r
        self.stride = stride
        self.memory_budget = memory_budget

    def fit(self, series, y=None):
        basis = pod_fit(series, self.r, self.stride, self.memory_budget)
        self.basis_ = basis
        self.components_ = basis.U
        self.singular_values_ = basis.singular_values
        self.wx_ = series.wx.copy()
        self.n_features_in_ = series.n
        return self

    def transform(self, X):
        """Coefficients of (already mean-subtracted) realizations."""
        check_is_fitted(self, "components_")
        X = _check_features(X, self.n_features_in_)
        return X @ (self.wx_[:, None] * self.components_)

    def inverse_transform(self, Z):
        check_is_fitted(self, "components_")
        return as_float_array(np.atleast_2d(Z), 2, "Z") @ self.components_.T


class DynamicModeDecomposition(BaseEstimator):
    """Exact DMD of one trajectory; rows of ``X`` are consecutive snapshots."""

    def __init__(self, dt=1.0, energy_threshold=0.99, rank=None, min_rank=1):
        self.dt = dt
        self.energy_threshold = energy_threshold
        self.rank = rank
        self.min_rank = min_rank

    def fit(self, X, y=None):
        X = as_float_array(X, 2, "X")
        self.model_ = dmd_fit(X.T, self.dt, self.energy_threshold, self.rank, min_rank=self.min_rank)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, t, r_keep=None):
        """Reconstructed states at times ``t`` (one row per time)."""
        check_is_fitted(self, "model_")
        return dmd_reconstruct(self.model_, np.atleast_1d(t), r_keep).T


class LegendreChaos(BaseEstimator):
    """Legendre-chaos expansion fitted from samples at Gauss-Legendre nodes."""

    def __init__(self, order=2):
        self.order = order

    def fit(self, X, xi, sample_weight):
        X = as_float_array(X, 2, "X")
        self.expansion_ = pcm_fit(X.T, xi, sample_weight, self.order)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, xi):
        check_is_fitted(self, "expansion_")
        return pcm_reconstruct(self.expansion_, xi).T

    def total_variance(self, wx):
        check_is_fitted(self, "expansion_")
        return pcm_total_variance(self.expansion_, check_state_weights(wx, self.n_features_in_))
