"""Legendre-chaos expansion by probabilistic collocation (one random variable)."""

from dataclasses import dataclass

import numpy as np

from ..exceptions import AliasingError, DimensionError
from ..snapshots import subtract_mean
from ..testbeds.quadrature import legendre_table
from ..validation import check_matrix, check_sample_weights, check_state_weights


@dataclass
class PcmExpansion:
    """Coefficients ``v_i`` (columns, i = 1..r) of ``u - E[u] = sum_i P_i(xi) v_i``."""

    order: int
    coefficients: np.ndarray
    norms: np.ndarray
    mean: np.ndarray


def pcm_fit(samples, xi, wxi, r):
    """Project samples taken at quadrature nodes ``xi`` onto ``P_1 .. P_r``.

    ``v_i = E[u P_i] / E[P_i^2]`` with expectations from the weights ``wxi``.
    Orders ``r >= len(xi)`` alias onto lower polynomials and are rejected.
    """
    samples = check_matrix(samples, name="samples")
    xi = np.asarray(xi, dtype=float)
    wxi = check_sample_weights(wxi, samples.shape[1])
    if xi.shape != (samples.shape[1],):
        raise DimensionError(f"{samples.shape[1]} samples but {xi.size} nodes")
    r = int(r)
    if r < 0:
        raise ValueError("order must be nonnegative")
    if r >= xi.size:
        raise AliasingError(f"order {r} needs more than {xi.size} quadrature nodes")
    P = legendre_table(r, xi)[1:]  # (r, s)
    norms = (P * P) @ wxi
    V = samples @ (wxi[:, None] * P.T) / norms[None, :]
    return PcmExpansion(r, V, norms, samples @ wxi)


def pcm_reconstruct(expansion, xi):
    """Expansion values (mean included) at the nodes ``xi``."""
    P = legendre_table(expansion.order, np.asarray(xi, dtype=float))[1:]
    return expansion.mean[:, None] + expansion.coefficients @ P


def pcm_total_variance(expansion, wx):
    """``sum_i <v_i, v_i> E[P_i^2]`` with the state weights ``wx``."""
    wx = check_state_weights(wx, expansion.coefficients.shape[0])
    return float(np.sum((wx @ expansion.coefficients**2) * expansion.norms))


def pcm_variance_trace(series, xi, r, stride=1):
    """PCM total variance at every ``stride``-th snapshot; returns ``(t, variance)``."""
    idx = np.arange(0, series.K + 1, int(stride))
    var = np.empty(idx.size)
    for j, k in enumerate(idx):
        T, _ = subtract_mean(series.snapshot(k), series.wxi)
        var[j] = pcm_total_variance(pcm_fit(T, xi, series.wxi, r), series.wx)
    return series.times[idx], var
