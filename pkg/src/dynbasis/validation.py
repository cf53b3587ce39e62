"""Input validation helpers shared by the functional API and the estimators."""

import numpy as np

from .exceptions import DimensionError, WeightError

SAMPLE_WEIGHT_SUM_TOL = 1e-12


def as_float_array(a, ndim, name="array"):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != ndim:
        raise DimensionError(f"{name} must be {ndim}-dimensional, got shape {a.shape}")
    return a


def check_state_weights(wx, n=None):
    """Validate state (quadrature) weights and return them as a float vector."""
    wx = as_float_array(wx, 1, "wx")
    if n is not None and wx.shape[0] != n:
        raise DimensionError(f"wx has length {wx.shape[0]}, expected {n}")
    if not np.all(np.isfinite(wx)) or np.any(wx < 0):
        raise WeightError("state weights must be finite and nonnegative")
    if not np.any(wx > 0):
        raise WeightError("state weights must have at least one positive entry")
    return wx


def check_sample_weights(wxi, s=None, tol=SAMPLE_WEIGHT_SUM_TOL):
    """Validate probability weights over the samples."""
    wxi = as_float_array(wxi, 1, "wxi")
    if s is not None and wxi.shape[0] != s:
        raise DimensionError(f"wxi has length {wxi.shape[0]}, expected {s}")
    if not np.all(np.isfinite(wxi)) or np.any(wxi < 0):
        raise WeightError("sample weights must be finite and nonnegative")
    total = wxi.sum()
    if abs(total - 1.0) > tol:
        raise WeightError(f"sample weights must sum to 1 (got {total!r})")
    return wxi


def check_matrix(a, shape=None, name="matrix"):
    """Return ``a`` as a 2-D float array, checking ``shape`` where given.

    Entries of ``shape`` that are ``None`` are not checked.
    """
    a = as_float_array(a, 2, name)
    if shape is not None:
        for axis, (got, want) in enumerate(zip(a.shape, shape)):
            if want is not None and got != want:
                raise DimensionError(f"{name} has shape {a.shape}; axis {axis} should be {want}")
    return a


def check_rank(r, limit):
    if isinstance(r, bool) or int(r) != r:
        raise ValueError(f"rank must be an integer, got {r!r}")
    r = int(r)
    if r < 1:
        raise ValueError(f"rank must be >= 1, got {r}")
    if r > limit:
        raise ValueError(f"rank {r} exceeds min(n, s) = {limit}")
    return r
