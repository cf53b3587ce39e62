"""Independent reference computations used by several test modules."""

import numpy as np


def kkt_rhs(U, Y, Tdot, wx, wxi):
    """Time derivatives from the constrained least-squares problem.

    Minimizes ``|| dU Y^T + U dY^T - Tdot ||`` in the doubly weighted
    Frobenius norm subject to ``U^T W_x dU = 0``, by assembling the dense
    linear operator on ``(vec dU, vec dY)`` and solving the KKT system.
    """
    n, r = U.shape
    s = Y.shape[0]
    sx, sxi = np.sqrt(wx), np.sqrt(wxi)
    nu, ny = n * r, s * r

    def apply(z):
        dU = z[:nu].reshape(n, r)
        dY = z[nu:].reshape(s, r)
        R = dU @ Y.T + U @ dY.T
        return (sx[:, None] * R * sxi[None, :]).ravel()

    N = nu + ny
    A = np.column_stack([apply(e) for e in np.eye(N)])
    b = (sx[:, None] * Tdot * sxi[None, :]).ravel()
    B = np.zeros((r * r, N))
    WU = wx[:, None] * U
    for i in range(r):
        for j in range(r):
            E = np.zeros((n, r))
            E[:, j] = WU[:, i]
            B[i * r + j, :nu] = E.ravel()
    K = np.block([[2.0 * A.T @ A, B.T], [B, np.zeros((r * r, r * r))]])
    rhs = np.concatenate([2.0 * A.T @ b, np.zeros(r * r)])
    z = np.linalg.solve(K, rhs)
    return z[:nu].reshape(n, r), z[nu:N].reshape(s, r)


def random_instance(rng, n=None, s=None, r=None):
    """Random wx-orthonormal U, full-rank Y and a derivative matrix."""
    from dynbasis.weighted import gram_schmidt_weighted

    r = r or int(rng.integers(1, 4))
    n = n or int(rng.integers(r + 1, 9))
    s = s or int(rng.integers(r + 1, 7))
    wx = rng.uniform(0.2, 2.0, n)
    wxi = rng.uniform(0.2, 2.0, s)
    wxi /= wxi.sum()
    U = gram_schmidt_weighted(rng.standard_normal((n, r)), wx)
    Y = rng.standard_normal((s, r))
    Tdot = rng.standard_normal((n, s))
    return U, Y, Tdot, wx, wxi


def random_skew(rng, r):
    A = rng.standard_normal((r, r))
    return A - A.T
