"""Proper orthogonal decomposition over all snapshots of all samples."""

from dataclasses import dataclass

import numpy as np

from ..exceptions import DimensionError, MemoryBudgetError
from ..snapshots import subtract_mean
from ..validation import check_matrix, check_state_weights
from ..weighted import weighted_frobenius, weighted_svd

DEFAULT_MEMORY_BUDGET = 1 << 30  # bytes


@dataclass
class PodBasis:
    """Static basis ``U`` (n x r, ``wx``-orthonormal) with its singular values."""

    U: np.ndarray
    singular_values: np.ndarray
    wx: np.ndarray
    stride: int = 1

    @property
    def rank(self):
        return self.U.shape[1]


def pod_snapshot_indices(K, stride):
    return np.arange(0, K + 1, stride)


def pod_fit(series, r, stride=1, memory_budget=DEFAULT_MEMORY_BUDGET):
    """POD basis of the column-wise concatenation of all mean-subtracted snapshots.

    Each column of snapshot ``k`` carries weight ``wxi / m`` where ``m`` is the
    number of snapshots used, so the basis minimizes the time-averaged
    weighted residual.

    Raises
    ------
    MemoryBudgetError
        If the assembled n x (s m) matrix exceeds ``memory_budget`` bytes.
    """
    idx = pod_snapshot_indices(series.K, int(stride))
    nbytes = series.n * series.s * idx.size * 8
    if nbytes > memory_budget:
        raise MemoryBudgetError(
            f"POD matrix needs {nbytes} bytes (budget {memory_budget}); increase the snapshot stride"
        )
    r = int(r)
    if r < 0 or r > min(series.n, series.s * idx.size):
        raise ValueError(f"rank {r} out of range")
    A = np.empty((series.n, series.s * idx.size))
    for j, k in enumerate(idx):
        A[:, j * series.s : (j + 1) * series.s], _ = subtract_mean(series.snapshot(k), series.wxi)
    w = np.tile(series.wxi, idx.size) / idx.size
    V, sv, _ = weighted_svd(A, series.wx, w)
    return PodBasis(V[:, :r].copy(), sv.copy(), series.wx.copy(), int(stride))


def pod_project(basis, T_k, wx=None):
    """Coefficients ``Y_k = T_k^T W_x U`` of a mean-subtracted snapshot."""
    wx = basis.wx if wx is None else check_state_weights(wx)
    T_k = check_matrix(T_k, (basis.U.shape[0], None), "T_k")
    return T_k.T @ (wx[:, None] * basis.U)


def pod_error(basis, series):
    """Weighted reconstruction error of every mean-subtracted snapshot in ``series``."""
    if basis.U.shape[0] != series.n:
        raise DimensionError(f"basis has {basis.U.shape[0]} rows, series has n = {series.n}")
    err = np.empty(series.K + 1)
    for k in range(series.K + 1):
        T, _ = subtract_mean(series.snapshot(k), series.wxi)
        Y = pod_project(basis, T, series.wx)
        err[k] = weighted_frobenius(T - basis.U @ Y.T, series.wx, series.wxi)
    return err
