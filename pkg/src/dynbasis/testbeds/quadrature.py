"""Legendre polynomials and Gauss-Legendre quadrature."""

import itertools

import numpy as np

NEWTON_TOL = 1e-15
MAX_NEWTON = 100


def legendre_table(kmax, x):
    """Values ``P_0..P_kmax`` at ``x`` via the three-term recurrence.

    Returns an array of shape ``(kmax + 1,) + x.shape``.
    """
    x = np.asarray(x, dtype=np.float64)
    P = np.empty((kmax + 1,) + x.shape)
    P[0] = 1.0
    if kmax >= 1:
        P[1] = x
    for k in range(1, kmax):
        P[k + 1] = ((2 * k + 1) * x * P[k] - k * P[k - 1]) / (k + 1)
    return P


def legendre(k, x):
    """Legendre polynomial ``P_k`` evaluated at ``x``."""
    return legendre_table(k, x)[k]


def _legendre_and_derivative(s, x):
    p0, p1 = np.ones_like(x), x.copy()
    if s == 0:
        return p0, np.zeros_like(x)
    for k in range(1, s):
        p0, p1 = p1, ((2 * k + 1) * x * p1 - k * p0) / (k + 1)
    # P_s'(x) = s (x P_s - P_{s-1}) / (x^2 - 1)
    dp = s * (x * p1 - p0) / (x * x - 1.0)
    return p1, dp


def gauss_legendre(s):
    """Nodes and weights of the s-point Gauss-Legendre rule on [-1, 1].

    Nodes are found by Newton iteration on the recurrence. They are returned in
    ascending order; weights sum to 2.
    """
    s = int(s)
    if s < 1:
        raise ValueError(f"number of nodes must be >= 1, got {s}")
    if s == 1:
        return np.zeros(1), np.full(1, 2.0)
    i = np.arange(1, s + 1)
    x = np.cos(np.pi * (i - 0.25) / (s + 0.5))
    for _ in range(MAX_NEWTON):
        p, dp = _legendre_and_derivative(s, x)
        dx = p / dp
        x -= dx
        if np.max(np.abs(dx)) <= NEWTON_TOL:
            break
    _, dp = _legendre_and_derivative(s, x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    order = np.argsort(x)
    x, w = x[order], w[order]
    # symmetrize to remove round-off asymmetry
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    return x, w


def gauss_legendre_probability(s):
    """Gauss-Legendre nodes with weights of the uniform density on [-1, 1] (sum to 1)."""
    x, w = gauss_legendre(s)
    return x, 0.5 * w


def tensor_collocation(Q, d):
    """Tensor-product Gauss-Legendre grid in [-1, 1]^d.

    Returns ``(nodes, weights)`` with nodes of shape ``(Q**d, d)`` in
    ``itertools.product`` order (last dimension fastest) and product
    probability weights summing to one.
    """
    x, w = gauss_legendre_probability(Q)
    idx = np.array(list(itertools.product(range(Q), repeat=d)), dtype=int).reshape(-1, d)
    return x[idx], np.prod(w[idx], axis=1)
