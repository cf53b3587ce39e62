"""Stochastic linear advection with a random speed ``V(xi) = v_bar + sigma * xi``.

``u_t + V u_x = 0`` on the periodic domain [-1, 1] with ``u(x, 0) = sin(pi x)``
and ``xi ~ U[-1, 1]``. The solution ``u = sin(pi (x - V t))`` stays in the
two-dimensional space spanned by ``sin(pi (x - v_bar t))`` and
``cos(pi (x - v_bar t))``, which makes the problem a closed-form check of the
dynamic-basis reduction.
"""

from dataclasses import asdict, dataclass

import numpy as np

from ..exceptions import ConfigError
from ..snapshots import FunctionStore, SnapshotSeries
from .quadrature import gauss_legendre_probability

MODES = ("analytic", "spectral")


@dataclass
class AdvectionConfig:
    v_bar: float = 1.0
    sigma: float = 0.5
    n: int = 128
    s: int = 64
    dt: float = 1e-3
    t_final: float = 10.0
    mode: str = "analytic"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not np.isfinite(self.v_bar):
            raise ConfigError("v_bar must be finite")
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if int(self.n) != self.n or self.n < 2 or int(self.s) != self.s or self.s < 2:
            raise ConfigError("n and s must be integers >= 2")
        if not (self.dt > 0 and self.t_final > 0):
            raise ConfigError("dt and t_final must be positive")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        K = self.t_final / self.dt
        if abs(K - round(K)) > 1e-9 * max(K, 1.0):
            raise ConfigError("t_final must be an integer multiple of dt")

    @property
    def K(self):
        return int(round(self.t_final / self.dt))

    def times(self):
        return self.dt * np.arange(self.K + 1)

    def to_dict(self):
        return asdict(self)


def grid(n):
    """Uniform periodic grid on [-1, 1) with weights ``2/n``."""
    x = -1.0 + 2.0 * np.arange(n) / n
    return x, np.full(n, 2.0 / n)


def sample_nodes(cfg):
    """Gauss-Legendre nodes in xi and their probability weights."""
    return gauss_legendre_probability(cfg.s)


def advection_exact(x, t, xi, cfg):
    """Exact solution ``sin(pi (x - (v_bar + sigma xi) t))`` with numpy broadcasting."""
    return np.sin(np.pi * (np.asarray(x) - (cfg.v_bar + cfg.sigma * np.asarray(xi)) * t))


def _sinc(z):
    # sin(z)/z with the removable singularity filled in
    return np.sinc(z / np.pi)


def exact_total_variance(t, sigma):
    """``Sigma(t) = 1 - sin^2(sigma pi t) / (sigma pi t)^2``, zero at t = 0."""
    return 1.0 - _sinc(sigma * np.pi * np.asarray(t, dtype=float)) ** 2


def advection_exact_stats(cfg, t, x=None):
    """Exact mean field, variance field and total variance at time ``t``."""
    if x is None:
        x, _ = grid(cfg.n)
    a = np.pi * (np.asarray(x) - cfg.v_bar * t)
    b = cfg.sigma * np.pi * t
    S = _sinc(b)
    cos2 = 0.5 * (1.0 + _sinc(2.0 * b))
    sin2 = 0.5 * (1.0 - _sinc(2.0 * b))
    mean = np.sin(a) * S
    var = np.sin(a) ** 2 * (cos2 - S * S) + np.cos(a) ** 2 * sin2
    return mean, var, float(exact_total_variance(t, cfg.sigma))


def advection_exact_modes(cfg, t, x=None, xi=None):
    """Exact two-mode expansion of the mean-subtracted field.

    Returns ``(u1, u2, y1, y2)`` with ``u1 = sin(pi (x - v_bar t))``,
    ``u2 = cos(pi (x - v_bar t))``, ``y1 = cos(pi sigma xi t) - sinc``,
    ``y2 = -sin(pi sigma xi t)`` so that ``u - E[u] = u1 y1 + u2 y2`` holds
    exactly. At t = 0 both coefficients vanish.
    """
    if x is None:
        x, _ = grid(cfg.n)
    if xi is None:
        xi, _ = sample_nodes(cfg)
    a = np.pi * (np.asarray(x) - cfg.v_bar * t)
    b = np.pi * cfg.sigma * np.asarray(xi) * t
    y1 = np.cos(b) - _sinc(cfg.sigma * np.pi * t)
    y2 = -np.sin(b)
    return np.sin(a), np.cos(a), y1, y2


class SpectralAdvectionStore:
    """Fourier pseudospectral RK4 solution, advanced on demand.

    The last computed state is kept so sequential loads cost one RK4 step
    each; a backward request restarts from the initial condition.
    """

    def __init__(self, cfg):
        self.cfg = cfg
        self.x, _ = grid(cfg.n)
        self.xi, _ = sample_nodes(cfg)
        k = np.fft.rfftfreq(cfg.n, d=2.0 / cfg.n) * 2.0 * np.pi
        speed = cfg.v_bar + cfg.sigma * self.xi
        self._L = -1j * k[:, None] * speed[None, :]
        self._reset()

    def _reset(self):
        u0 = np.sin(np.pi * self.x)
        self._uh = np.repeat(np.fft.rfft(u0)[:, None], self.cfg.s, axis=1)
        self._k = 0

    def _advance(self):
        dt, L, uh = self.cfg.dt, self._L, self._uh
        k1 = L * uh
        k2 = L * (uh + 0.5 * dt * k1)
        k3 = L * (uh + 0.5 * dt * k2)
        k4 = L * (uh + dt * k3)
        self._uh = uh + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        self._k += 1

    def __len__(self):
        return self.cfg.K + 1

    def load(self, k):
        if k < self._k:
            self._reset()
        while self._k < k:
            self._advance()
        return np.fft.irfft(self._uh, n=self.cfg.n, axis=0)


def generate_advection_series(cfg=None):
    """Ensemble snapshots ``T_k[j, i] = u(x_j, t_k; xi_i)`` as a lazy series.

    ``cfg.mode == "analytic"`` samples the exact solution, ``"spectral"`` runs
    a Fourier pseudospectral RK4 solver with the same time step.
    """
    cfg = cfg or AdvectionConfig()
    cfg.validate()
    x, wx = grid(cfg.n)
    xi, wxi = sample_nodes(cfg)
    times = cfg.times()
    if cfg.mode == "analytic":
        speed = cfg.v_bar + cfg.sigma * xi
        store = FunctionStore(lambda t: np.sin(np.pi * (x[:, None] - speed[None, :] * t)), times)
    else:
        store = SpectralAdvectionStore(cfg)
    meta = {"testbed": "advection", "config": cfg.to_dict(), "x": x.tolist(), "xi": xi.tolist()}
    return SnapshotSeries(times, wx, wxi, store, meta=meta)
