"""Kuramoto-Sivashinsky testbed with a random initial perturbation.

``u_t = u u_x - u_xx - eps u_xxxx`` on the periodic domain [-1, 1), solved by a
Fourier pseudospectral method with 2/3-rule dealiasing and the fourth-order
exponential time-differencing Runge-Kutta scheme (ETDRK4) whose coefficients
are evaluated by contour integrals.
"""

import functools
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..exceptions import ConfigError, NumericalError
from ..snapshots import SnapshotSeries
from .advection import grid
from .kernels import KernelSpec, kl_decompose_kernel, sample_random_field

CONTOUR_POINTS = 32


@dataclass
class KsConfig:
    eps: float = 0.01
    n: int = 256
    l_c: float = 2.5
    sigma: float = 0.1
    energy_threshold: float = 0.99
    sampling: dict = field(default_factory=lambda: {"kind": "collocation", "Q": 5})
    dt: float = 1e-3
    t_final: float = 1.2
    burn_in: float = 50.0
    substeps: int = 1
    kernel: str = "periodic"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.eps > 0:
            raise ConfigError(f"eps must be positive, got {self.eps}")
        if int(self.n) != self.n or self.n < 8 or self.n & (self.n - 1):
            raise ConfigError(f"n must be a power of two >= 8, got {self.n}")
        if not 0.0 < self.energy_threshold < 1.0:
            raise ConfigError("energy_threshold must lie in (0, 1)")
        if not self.sigma >= 0 or not self.l_c > 0:
            raise ConfigError("sigma must be >= 0 and l_c > 0")
        if not (self.dt > 0 and self.t_final > 0 and self.burn_in >= 0):
            raise ConfigError("dt, t_final must be positive and burn_in nonnegative")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ConfigError("substeps must be a positive integer")
        if self.sampling.get("kind") not in ("collocation", "monte_carlo"):
            raise ConfigError(f"unknown sampling kind {self.sampling.get('kind')!r}")
        K = self.t_final / self.dt
        if abs(K - round(K)) > 1e-9 * max(K, 1.0):
            raise ConfigError("t_final must be an integer multiple of dt")

    @property
    def K(self):
        return int(round(self.t_final / self.dt))

    @property
    def h(self):
        return self.dt / self.substeps

    def times(self):
        return self.dt * np.arange(self.K + 1)

    def to_dict(self):
        return asdict(self)


def wavenumbers(n):
    """Angular wavenumbers ``pi k`` of the real FFT on a domain of length 2."""
    return np.fft.rfftfreq(n, d=2.0 / n) * 2.0 * np.pi


def etdrk4_coefficients(L, h, M=CONTOUR_POINTS):
    """ETDRK4 coefficients for the diagonal linear operator ``L``.

    The phi-functions are averaged over ``M`` points on a unit circle around
    each ``h L`` to avoid cancellation near zero.
    """
    roots = np.exp(1j * np.pi * (np.arange(1, M + 1) - 0.5) / M)
    LR = h * L[:, None] + roots[None, :]
    eLR = np.exp(LR)
    E = np.exp(h * L)
    E2 = np.exp(h * L / 2)
    Q = h * np.real(np.mean((np.exp(LR / 2) - 1.0) / LR, axis=1))
    f1 = h * np.real(np.mean((-4.0 - LR + eLR * (4.0 - 3.0 * LR + LR**2)) / LR**3, axis=1))
    f2 = h * np.real(np.mean((2.0 + LR + eLR * (LR - 2.0)) / LR**3, axis=1))
    f3 = h * np.real(np.mean((-4.0 - 3.0 * LR - LR**2 + eLR * (4.0 - LR)) / LR**3, axis=1))
    return E, E2, Q, f1, f2, f3


class KsSolver:
    """ETDRK4 stepper acting on real-FFT coefficients of shape ``(n//2 + 1, ...)``."""

    def __init__(self, n, eps, h):
        self.n, self.eps, self.h = n, eps, h
        k = wavenumbers(n)
        self.L = k**2 - eps * k**4
        keep = np.arange(k.size) < (2 * (n // 2)) // 3
        self._g = 0.5j * k * keep
        self._coef = etdrk4_coefficients(self.L, h)

    def _nonlinear(self, v):
        u = np.fft.irfft(v, n=self.n, axis=0)
        return self._g[:, None] * np.fft.rfft(u * u, axis=0)

    def step(self, v):
        E, E2, Q, f1, f2, f3 = (c[:, None] for c in self._coef)
        Nv = self._nonlinear(v)
        a = E2 * v + Q * Nv
        Na = self._nonlinear(a)
        b = E2 * v + Q * Na
        Nb = self._nonlinear(b)
        c = E2 * a + Q * (2.0 * Nb - Nv)
        Nc = self._nonlinear(c)
        return E * v + Nv * f1 + 2.0 * (Na + Nb) * f2 + Nc * f3

    def physical(self, v):
        return np.fft.irfft(v, n=self.n, axis=0)


def ks_solve(u0, eps=0.01, dt=1e-3, t_final=1.0, substeps=1, step_offset=0):
    """Integrate from ``u0`` (n or n x s) and return the trajectory.

    Returns an array of shape ``(K + 1,) + u0.shape`` sampled every ``dt``.
    Raises :class:`NumericalError` naming the first step with non-finite values.
    """
    u0 = np.asarray(u0, dtype=float)
    squeeze = u0.ndim == 1
    U0 = u0[:, None] if squeeze else u0
    n = U0.shape[0]
    K = int(round(t_final / dt))
    solver = KsSolver(n, eps, dt / substeps)
    v = np.fft.rfft(U0, axis=0)
    out = np.empty((K + 1,) + U0.shape)
    out[0] = U0
    for k in range(1, K + 1):
        for j in range(substeps):
            v = solver.step(v)
            if not np.all(np.isfinite(v)):
                raise NumericalError("KS solution became non-finite", step=step_offset + (k - 1) * substeps + j + 1)
        out[k] = solver.physical(v)
    return out[..., 0] if squeeze else out


@functools.lru_cache(maxsize=8)
def _base_state(n, eps, h, burn_in):
    x, _ = grid(n)
    solver = KsSolver(n, eps, h)
    v = np.fft.rfft(np.sin(np.pi * x))[:, None]
    nsteps = int(round(burn_in / h))
    for i in range(nsteps):
        v = solver.step(v)
        if not np.all(np.isfinite(v)):
            raise NumericalError("KS burn-in became non-finite", step=i + 1)
    u = solver.physical(v)[:, 0]
    u.setflags(write=False)
    return u


def base_state(cfg):
    """Long-time state ``u_b`` reached from ``sin(pi x)`` after ``cfg.burn_in`` time units."""
    return _base_state(cfg.n, cfg.eps, cfg.h, cfg.burn_in).copy()


class KsStore:
    """Ensemble KS trajectories advanced on demand, one output interval per load."""

    def __init__(self, cfg, u_init):
        self.cfg = cfg
        self.solver = KsSolver(cfg.n, cfg.eps, cfg.h)
        self._v0 = np.fft.rfft(u_init, axis=0)
        self._reset()

    def _reset(self):
        self._v = self._v0.copy()
        self._k = 0

    def __len__(self):
        return self.cfg.K + 1

    def load(self, k):
        if k < self._k:
            self._reset()
        while self._k < k:
            for j in range(self.cfg.substeps):
                self._v = self.solver.step(self._v)
                if not np.all(np.isfinite(self._v)):
                    raise NumericalError("KS solution became non-finite", step=self._k * self.cfg.substeps + j + 1)
            self._k += 1
        return self.solver.physical(self._v)


def ks_initial_ensemble(cfg):
    """Base state, KL expansion and sampled initial conditions ``u_b + u'``."""
    x, wx = grid(cfg.n)
    u_b = base_state(cfg)
    # KL of sigma^2 K_1 is the KL of the unit kernel with eigenvalues scaled,
    # which also covers sigma = 0 (no perturbation)
    kl = kl_decompose_kernel(KernelSpec(cfg.kernel, 1.0, cfg.l_c), x=x, weights=wx, energy_fraction=cfg.energy_threshold)
    kl = replace(kl, eigenvalues=cfg.sigma**2 * kl.eigenvalues, all_eigenvalues=cfg.sigma**2 * kl.all_eigenvalues)
    field_ = sample_random_field(kl, cfg.sampling)
    return u_b, kl, field_


def generate_ks_series(cfg=None):
    """Lazy ensemble series of KS trajectories from KL-sampled random initial conditions."""
    cfg = cfg or KsConfig()
    cfg.validate()
    x, wx = grid(cfg.n)
    u_b, kl, f = ks_initial_ensemble(cfg)
    u_init = u_b[:, None] + f.fields
    meta = {
        "testbed": "ks",
        "config": cfg.to_dict(),
        "d": kl.d,
        "kl_eigenvalues": kl.eigenvalues.tolist(),
        "xi": f.xi.tolist(),
    }
    seed = cfg.sampling.get("seed") if cfg.sampling.get("kind") == "monte_carlo" else None
    return SnapshotSeries(cfg.times(), wx, f.weights, KsStore(cfg, u_init), seed=seed, meta=meta)


def nearest_sample(xi, point):
    """Index of the sample whose unscaled coordinates ``xi / sqrt(3)`` are closest to ``point``."""
    xi = np.asarray(xi, dtype=float) / np.sqrt(3.0)
    return int(np.argmin(np.linalg.norm(xi - np.asarray(point, dtype=float)[None, :], axis=1)))
