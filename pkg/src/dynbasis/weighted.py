"""Weighted inner products, norms and orthonormalization.

State vectors live in R^n with the inner product ``<a, b> = a^T diag(wx) b``;
sample vectors live in R^s with the expectation ``E[a b] = a^T diag(wxi) b``.
Weight matrices are never formed, only the weight vectors are stored.
"""

import numpy as np

from .exceptions import DimensionError, RankDeficiencyError
from .validation import as_float_array, check_matrix, check_state_weights

GS_BREAKDOWN_TOL = 1e-13


def _check_pair(a, b, w, name):
    a = as_float_array(a, 1, "a")
    b = as_float_array(b, 1, "b")
    w = as_float_array(w, 1, name)
    if not (a.shape == b.shape == w.shape):
        raise DimensionError(f"length mismatch: a{a.shape}, b{b.shape}, {name}{w.shape}")
    return a, b, w


def inner_x(a, b, wx):
    """State-space inner product ``sum_k wx_k a_k b_k``."""
    a, b, wx = _check_pair(a, b, wx, "wx")
    return float(np.dot(wx * a, b))


def inner_xi(a, b, wxi):
    """Sample-space inner product, i.e. the weighted expectation ``E[a b]``."""
    a, b, wxi = _check_pair(a, b, wxi, "wxi")
    return float(np.dot(wxi * a, b))


def weighted_frobenius(T, wx, wxi):
    """Doubly weighted Frobenius norm ``sqrt(sum_ij wx_i wxi_j T_ij^2)``."""
    T = as_float_array(T, 2, "T")
    wx = as_float_array(wx, 1, "wx")
    wxi = as_float_array(wxi, 1, "wxi")
    if T.shape != (wx.shape[0], wxi.shape[0]):
        raise DimensionError(f"T has shape {T.shape}, weights imply {(wx.shape[0], wxi.shape[0])}")
    return float(np.sqrt(wx @ (T * T) @ wxi))


def gram_schmidt_weighted(U, wx, tol=GS_BREAKDOWN_TOL, return_r=False):
    """Orthonormalize the columns of ``U`` in the ``wx`` inner product.

    Modified Gram-Schmidt with a second full pass ("twice is enough"). Columns
    are processed left to right, so the first output column is the normalized
    first input column and ``span(Q[:, :j]) == span(U[:, :j])`` for every j.

    Parameters
    ----------
    U : (n, r) array
    wx : (n,) array of nonnegative state weights
    tol : float
        Relative breakdown tolerance. A column whose norm after
        orthogonalization is below ``tol * max_j ||U[:, j]||`` raises
        :class:`RankDeficiencyError`.
    return_r : bool
        Also return the upper-triangular ``R`` with ``U = Q @ R``.

    Returns
    -------
    Q : (n, r) array, or ``(Q, R)`` if ``return_r``.
    """
    U = check_matrix(U, name="U")
    n, r = U.shape
    wx = check_state_weights(wx, n)
    Q = U.copy()
    R = np.zeros((r, r))
    if r == 0:
        return (Q, R) if return_r else Q
    norms = np.sqrt(wx @ (U * U))
    floor = tol * norms.max()
    for j in range(r):
        v = Q[:, j]
        for _ in range(2):
            for i in range(j):
                c = np.dot(wx * Q[:, i], v)
                v -= c * Q[:, i]
                R[i, j] += c
        nrm = np.sqrt(np.dot(wx * v, v))
        if not nrm > floor:
            raise RankDeficiencyError(j)
        v /= nrm
        R[j, j] = nrm
    return (Q, R) if return_r else Q


def orthonormality_defect(U, wx):
    """Largest entry of ``|U^T W_x U - I|``; zero for an empty basis."""
    U = check_matrix(U, name="U")
    wx = check_state_weights(wx, U.shape[0])
    if U.shape[1] == 0:
        return 0.0
    G = U.T @ (wx[:, None] * U)
    return float(np.abs(G - np.eye(U.shape[1])).max())


def fix_signs(M, rtol=1e-8):
    """Column signs making the largest-magnitude entry of each column positive.

    Entries within ``rtol`` of the column maximum count as ties and the first
    one wins, so the choice does not flip under round-off.
    """
    M = np.asarray(M)
    signs = np.ones(M.shape[1])
    for j in range(M.shape[1]):
        a = np.abs(M[:, j])
        top = a.max() if a.size else 0.0
        if top == 0.0:
            continue
        i = int(np.argmax(a >= top * (1.0 - rtol)))
        if M[i, j] < 0:
            signs[j] = -1.0
    return signs


def weighted_svd(T, wx, wxi):
    """Thin SVD of ``W_x^{1/2} T W_xi^{1/2}`` mapped back to weighted factors.

    Returns ``(V, sv, Z)`` with ``V`` (n, m) ``wx``-orthonormal, ``sv``
    descending singular values and ``Z`` (s, m) ``wxi``-orthonormal, such that
    ``T = V diag(sv) Z^T`` on the support of the weights. Rows outside the
    support are zero in ``V`` and ``Z``.
    """
    T = check_matrix(T, name="T")
    n, s = T.shape
    wx = as_float_array(wx, 1, "wx")
    wxi = as_float_array(wxi, 1, "wxi")
    if wx.shape[0] != n or wxi.shape[0] != s:
        raise DimensionError(f"T has shape {T.shape}, weights imply {(wx.shape[0], wxi.shape[0])}")
    rows = np.flatnonzero(wx > 0)
    cols = np.flatnonzero(wxi > 0)
    sx = np.sqrt(wx[rows])
    sxi = np.sqrt(wxi[cols])
    A = sx[:, None] * T[np.ix_(rows, cols)] * sxi[None, :]
    P, sv, Qt = np.linalg.svd(A, full_matrices=False)
    V = np.zeros((n, sv.size))
    Z = np.zeros((s, sv.size))
    V[rows] = P / sx[:, None]
    Z[cols] = Qt.T / sxi[:, None]
    return V, sv, Z
