"""Covariance kernels, their Karhunen-Loeve decomposition and random-field sampling."""

from dataclasses import asdict, dataclass

import numpy as np

from ..exceptions import ConfigError, IndefiniteCovarianceError
from ..weighted import fix_signs
from .quadrature import tensor_collocation

KERNELS = ("periodic", "squared_exponential")
DEGENERACY_RTOL = 1e-8
DEFAULT_COLLOCATION_CAP = 100_000


@dataclass
class KernelSpec:
    """Stationary covariance kernel on [-1, 1].

    ``periodic``: ``sigma^2 exp(-2 sin^2(pi (x - x')) / l_c^2)``.
    ``squared_exponential``: ``sigma^2 exp(-(x - x')^2 / l_c^2)``.
    """

    variant: str = "periodic"
    sigma: float = 0.1
    l_c: float = 2.5

    def __post_init__(self):
        if self.variant not in KERNELS:
            raise ConfigError(f"kernel variant must be one of {KERNELS}, got {self.variant!r}")
        if not (self.sigma > 0 and self.l_c > 0):
            raise ConfigError("kernel sigma and l_c must be positive")

    def __call__(self, x, xp):
        d = np.subtract.outer(np.asarray(x, dtype=float), np.asarray(xp, dtype=float))
        if self.variant == "periodic":
            return self.sigma**2 * np.exp(-2.0 * np.sin(np.pi * d) ** 2 / self.l_c**2)
        return self.sigma**2 * np.exp(-(d**2) / self.l_c**2)

    def to_dict(self):
        return asdict(self)


@dataclass
class KLResult:
    """Truncated KL expansion: ``d`` modes with eigenvalues and grid eigenfunctions."""

    d: int
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    x: np.ndarray
    weights: np.ndarray
    all_eigenvalues: np.ndarray


def _canonical_rotation(phi, lam):
    """Fix the rotation inside clusters of (numerically) equal eigenvalues.

    Within a cluster of size c the basis is rotated so that its values at the
    first c grid points form a lower-triangular matrix with positive diagonal.
    """
    out = phi.copy()
    j = 0
    m = lam.size
    while j < m:
        k = j + 1
        while k < m and abs(lam[k] - lam[j]) <= DEGENERACY_RTOL * max(abs(lam[0]), 1e-300):
            k += 1
        if k - j > 1:
            B = out[:, j:k]
            Q, R = np.linalg.qr(B[: k - j].T)
            Q = Q * np.where(np.diag(R) < 0, -1.0, 1.0)
            out[:, j:k] = B @ Q
        else:
            out[:, j] *= fix_signs(out[:, j : j + 1])[0]
        j = k
    return out


def kl_decompose_kernel(spec, m=256, energy_fraction=0.99, x=None, weights=None):
    """Nystrom discretization of the kernel eigenproblem on a uniform periodic grid.

    Parameters
    ----------
    spec : KernelSpec
    m : int
        Number of grid points on [-1, 1) (ignored when ``x`` is given).
    energy_fraction : float in (0, 1)
        ``d`` is the smallest count whose eigenvalues carry this share of the trace.
    x, weights : optional
        Custom quadrature grid; defaults to ``x_j = -1 + 2j/m`` with weights ``2/m``.

    Returns
    -------
    KLResult
        Eigenfunctions are orthonormal in the grid weights.
    """
    if not 0.0 < energy_fraction < 1.0:
        raise ConfigError(f"energy_fraction must lie in (0, 1), got {energy_fraction}")
    if x is None:
        x = -1.0 + 2.0 * np.arange(m) / m
        weights = np.full(m, 2.0 / m)
    x = np.asarray(x, dtype=float)
    weights = np.asarray(weights, dtype=float)
    sw = np.sqrt(weights)
    A = sw[:, None] * spec(x, x) * sw[None, :]
    lam, V = np.linalg.eigh(0.5 * (A + A.T))
    lam, V = lam[::-1], V[:, ::-1]
    if lam[-1] < -1e-10 * max(lam[0], 0.0):
        raise IndefiniteCovarianceError(f"discretized kernel has eigenvalue {lam[-1]:.3e}")
    lam = np.clip(lam, 0.0, None)
    phi = _canonical_rotation(V / sw[:, None], lam)
    total = lam.sum()
    if total == 0.0:
        d = 0
    else:
        cum = np.cumsum(lam)
        d = int(np.searchsorted(cum, energy_fraction * total * (1.0 - 1e-14)) + 1)
        d = min(d, lam.size)
    return KLResult(d, lam[:d].copy(), phi[:, :d].copy(), x, weights, lam)


@dataclass
class SampledField:
    """Random-field realizations ``u'(x; xi_i)`` stored column-wise."""

    xi: np.ndarray
    weights: np.ndarray
    fields: np.ndarray


def sample_random_field(kl, sampling):
    """Draw realizations ``u'(x) = sum_i sqrt(lambda_i) xi_i phi_i(x)``.

    ``sampling`` is a dict:

    * ``{"kind": "collocation", "Q": 5}``: tensor Gauss-Legendre nodes in
      [-1, 1]^d (``cap`` limits ``Q**d``), product probability weights;
    * ``{"kind": "monte_carlo", "s": 1000, "seed": 0}``: i.i.d. uniform draws
      with weights ``1/s``.

    In both cases the variables are scaled by ``sqrt(3)`` to unit variance.
    """
    kind = sampling.get("kind")
    d = kl.d
    if kind == "collocation":
        Q = int(sampling.get("Q", 5))
        cap = int(sampling.get("cap", DEFAULT_COLLOCATION_CAP))
        if Q < 1:
            raise ConfigError("collocation Q must be >= 1")
        if float(Q) ** d > cap:
            raise ConfigError(f"tensor collocation needs {Q}^{d} samples (cap {cap}); use monte_carlo sampling")
        nodes, w = tensor_collocation(Q, d)
    elif kind == "monte_carlo":
        s = int(sampling.get("s", 0))
        if s < 1:
            raise ConfigError("monte_carlo sampling needs s >= 1")
        rng = np.random.default_rng(int(sampling.get("seed", 0)))
        nodes = rng.uniform(-1.0, 1.0, size=(s, d))
        w = np.full(s, 1.0 / s)
    else:
        raise ConfigError(f"unknown sampling kind {kind!r}")
    xi = np.sqrt(3.0) * nodes
    fields = (kl.eigenfunctions * np.sqrt(kl.eigenvalues)) @ xi.T
    return SampledField(xi, w, fields)
