"""Dynamic-basis reduction of ensemble time series.

The observations ``T(t)`` (n x s, zero sample mean) are approximated by
``U(t) Y(t)^T`` where ``U`` is ``wx``-orthonormal. ``U`` and ``Y`` are advanced
with the closed-form evolution equations

    dU/dt = (dT W_xi Y - U dT_r) C^+ + U phi
    dY/dt = dT^T W_x U + Y phi

with ``dT_r = U^T W_x dT W_xi Y`` and ``C = Y^T W_xi Y``. Only matrix-vector
style products of cost O(r n s) are formed.
"""

import csv
import enum
import warnings
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import (
    ContractError,
    DegenerateCovarianceWarning,
    DimensionError,
    DynBasisError,
    IndefiniteCovarianceError,
    NumericalError,
    RankDeficiencyError,
    RankDeficiencyWarning,
    SnapshotFormatError,
)
from .snapshots import DerivativeScheme, stream_windows, write_matrix
from .validation import check_matrix, check_rank, check_sample_weights, check_state_weights
from .weighted import fix_signs, gram_schmidt_weighted, orthonormality_defect, weighted_frobenius, weighted_svd

DEFAULT_REL_THRESHOLD = 1e-10
DEFAULT_DEFECT_TOL = 1e-8
RHS_DEFECT_TOL = 1e-6
SKEW_TOL = 1e-12
COMPLETION_TOL = 1e-8


class IntegratorScheme(str, enum.Enum):
    EE1 = "EE1"
    RK4 = "RK4"


@dataclass
class ReductionState:
    """Dynamic basis ``U`` (n x r) and stochastic coefficients ``Y`` (s x r) at time ``t``."""

    t: float
    U: np.ndarray
    Y: np.ndarray

    @property
    def rank(self):
        return self.U.shape[1]

    def copy(self):
        return ReductionState(self.t, self.U.copy(), self.Y.copy())


@dataclass(frozen=True)
class Covariance:
    """Reduced covariance ``C = E[Y^T Y]`` with eigenpairs sorted by descending eigenvalue."""

    C: np.ndarray
    psi: np.ndarray
    eigenvalues: np.ndarray


# --------------------------------------------------------------------------
# covariance


def compute_covariance(Y, wxi):
    """Reduced covariance of the coefficient columns and its eigen-decomposition.

    Eigenvalues are sorted in descending order. Negative eigenvalues within
    ``1e-12 * lambda_1`` of zero are clamped to zero, anything more negative
    raises :class:`IndefiniteCovarianceError`.
    """
    Y = check_matrix(Y, name="Y")
    wxi = np.asarray(wxi, dtype=np.float64)
    if wxi.shape != (Y.shape[0],):
        raise DimensionError(f"Y has {Y.shape[0]} rows but wxi has shape {wxi.shape}")
    C = Y.T @ (wxi[:, None] * Y)
    C = 0.5 * (C + C.T)
    lam, psi = np.linalg.eigh(C)
    lam = lam[::-1]
    psi = psi[:, ::-1]
    if lam.size:
        lam1 = max(lam[0], 0.0)
        if lam[-1] < -1e-12 * lam1 or (lam1 == 0.0 and lam[-1] < 0.0):
            raise IndefiniteCovarianceError(f"covariance eigenvalue {lam[-1]:.3e} below zero (lambda_1 = {lam1:.3e})")
        lam = np.clip(lam, 0.0, None)
    return Covariance(C, psi, lam)


def pseudo_inverse(cov, rel_threshold=DEFAULT_REL_THRESHOLD, warn=True):
    """Moore-Penrose style inverse of ``cov.C`` with a relative eigenvalue cut.

    Eigenvalues ``<= rel_threshold * lambda_1`` are treated as zero. If every
    eigenvalue is cut the zero matrix is returned and, when ``warn`` is set, a
    :class:`DegenerateCovarianceWarning` is emitted.
    """
    lam = cov.eigenvalues
    r = lam.size
    if r == 0:
        return np.zeros((0, 0))
    keep = (lam > rel_threshold * lam[0]) & (lam > 0.0)
    if not keep.any():
        if warn:
            warnings.warn("covariance is numerically zero; pseudo-inverse is the zero matrix", DegenerateCovarianceWarning, stacklevel=2)
        return np.zeros((r, r))
    psi = cov.psi[:, keep]
    return (psi / lam[keep]) @ psi.T


# --------------------------------------------------------------------------
# initialization


def _complete_basis(U, wx, candidates, wxi, r):
    """Append ``r - U.shape[1]`` orthonormal columns to ``U``.

    Directions are taken first from the dominant weighted singular vectors of
    the ``candidates`` (projected onto the complement of ``U``), then from
    canonical unit vectors on the support of ``wx``.
    """
    n = U.shape[0]
    cols = [U[:, j] for j in range(U.shape[1])]
    if candidates:
        M = np.concatenate(candidates, axis=1)
        w_cols = np.tile(wxi, len(candidates)) / len(candidates)
        _, scale, _ = weighted_svd(M, wx, w_cols)
        if scale.size and scale[0] > 0:
            if cols:
                B = np.column_stack(cols)
                M = M - B @ (B.T @ (wx[:, None] * M))
            V, sv, _ = weighted_svd(M, wx, w_cols)
            for j in np.flatnonzero(sv > COMPLETION_TOL * scale[0]):
                if len(cols) == r:
                    break
                cols.append(V[:, j])
    for i in np.flatnonzero(wx > 0):
        if len(cols) == r:
            break
        e = np.zeros(n)
        e[i] = 1.0
        for _ in range(2):
            for c in cols:
                e -= np.dot(wx * c, e) * c
        nrm = np.sqrt(np.dot(wx * e, e))
        if nrm > 0.5 * np.sqrt(wx[i]):
            cols.append(e / nrm)
    if len(cols) < r:
        raise RankDeficiencyError(len(cols), f"cannot complete basis to rank {r}; only {len(cols)} directions available")
    return np.column_stack(cols)


def initialize_kl(T0, wx, wxi, r, completion=None, t=0.0, rank_tol=None):
    """Karhunen-Loeve initial condition from a mean-subtracted snapshot.

    The leading ``r`` weighted singular triplets give ``U_0`` and
    ``Y_0 = T_0^T W_x U_0``, the best rank-r approximation of ``T_0`` in the
    weighted Frobenius norm. If ``T_0`` has numerical rank below ``r`` a
    :class:`RankDeficiencyWarning` is issued and the basis is completed from
    ``completion`` (a sequence of n x s matrices, typically early time
    derivatives) and then canonical vectors; completed modes get zero
    coefficients.
    """
    T0 = check_matrix(T0, name="T0")
    n, s = T0.shape
    wx = check_state_weights(wx, n)
    wxi = check_sample_weights(wxi, s)
    r = check_rank(r, min(n, s))
    V, sv, _ = weighted_svd(T0, wx, wxi)
    if rank_tol is None:
        rank_tol = max(n, s) * np.finfo(float).eps * (sv[0] if sv.size else 0.0)
    m = int(np.count_nonzero(sv[:r] > rank_tol)) if sv.size and sv[0] > 0 else 0
    U = V[:, :m]
    if m < r:
        warnings.warn(f"T_0 has numerical rank {m} < r = {r}; completing the basis", RankDeficiencyWarning, stacklevel=2)
        cand = [check_matrix(c, (n, s), "completion") for c in (completion or [])]
        U = _complete_basis(U, wx, cand, wxi, r)
    U = gram_schmidt_weighted(U, wx)
    signs = fix_signs(U)
    U = U * signs
    Y = T0.T @ (wx[:, None] * U)
    Y[:, m:] = 0.0
    return ReductionState(float(t), U, Y)


# --------------------------------------------------------------------------
# right-hand sides


def _check_operands(U, Y, Tdot, wx, wxi):
    U = check_matrix(U, name="U")
    n, r = U.shape
    Y = check_matrix(Y, (None, r), "Y")
    s = Y.shape[0]
    Tdot = check_matrix(Tdot, (n, s), "Tdot")
    wx = np.asarray(wx, dtype=np.float64)
    wxi = np.asarray(wxi, dtype=np.float64)
    if wx.shape != (n,) or wxi.shape != (s,):
        raise DimensionError(f"weights {wx.shape}, {wxi.shape} do not match n={n}, s={s}")
    return U, Y, Tdot, wx, wxi


def rhs_phi0(U, Y, Tdot, wx, wxi, rel_threshold=DEFAULT_REL_THRESHOLD, check=True):
    """Evolution right-hand side with ``phi = 0``; returns ``(dU, dY)``.

    ``dU`` is ``wx``-orthogonal to ``span(U)``. ``C^{-1}`` is replaced by
    :func:`pseudo_inverse` so singular covariances freeze inactive modes.
    """
    U, Y, Tdot, wx, wxi = _check_operands(U, Y, Tdot, wx, wxi)
    if check:
        defect = orthonormality_defect(U, wx)
        if defect > RHS_DEFECT_TOL:
            raise ContractError(f"U is not wx-orthonormal (defect {defect:.2e})")
    WU = wx[:, None] * U
    G = Tdot @ (wxi[:, None] * Y)
    Tr = WU.T @ G
    Cp = pseudo_inverse(compute_covariance(Y, wxi), rel_threshold, warn=False)
    dU = (G - U @ Tr) @ Cp
    dY = Tdot.T @ WU
    return dU, dY


def check_skew(phi, r=None):
    phi = check_matrix(phi, name="phi")
    if phi.shape[0] != phi.shape[1] or (r is not None and phi.shape[0] != r):
        raise DimensionError(f"phi must be {r} x {r}, got {phi.shape}")
    if np.linalg.norm(phi + phi.T) > SKEW_TOL:
        raise ContractError("phi must be skew-symmetric")
    return phi


def rhs_general(U, Y, Tdot, wx, wxi, phi, rel_threshold=DEFAULT_REL_THRESHOLD, check=True):
    """Evolution right-hand side for an arbitrary skew-symmetric gauge ``phi``."""
    phi = check_skew(phi, np.shape(U)[1])
    dU, dY = rhs_phi0(U, Y, Tdot, wx, wxi, rel_threshold, check)
    return dU + U @ phi, dY + Y @ phi


# --------------------------------------------------------------------------
# time stepping


def _gauge(phi, t):
    if phi is None:
        return None
    return phi(t) if callable(phi) else phi


def orthonormalize_state(U, Y, wx):
    """Gram-Schmidt on ``U`` with the compensating update ``Y <- Y R^T``.

    ``U = Q R`` so ``U Y^T = Q (Y R^T)^T`` is left unchanged.
    """
    Q, R = gram_schmidt_weighted(U, wx, return_r=True)
    return Q, Y @ R.T


def step(
    state,
    derivative,
    dt,
    wx,
    wxi,
    scheme=IntegratorScheme.RK4,
    phi=None,
    rel_threshold=DEFAULT_REL_THRESHOLD,
    defect_tol=DEFAULT_DEFECT_TOL,
):
    """Advance ``state`` by ``dt`` and re-orthonormalize the basis.

    Parameters
    ----------
    derivative : callable
        ``derivative(t)`` returns the n x s estimate of ``dT/dt`` at any stage
        time in ``[state.t, state.t + dt]``.
    phi : None, (r, r) array or callable
        Skew-symmetric gauge; ``None`` uses the ``phi = 0`` equations.
    """
    scheme = IntegratorScheme(scheme)
    t = state.t

    def f(tau, U, Y):
        g = _gauge(phi, tau)
        Td = derivative(tau)
        if g is None:
            return rhs_phi0(U, Y, Td, wx, wxi, rel_threshold, check=False)
        return rhs_general(U, Y, Td, wx, wxi, g, rel_threshold, check=False)

    U, Y = state.U, state.Y
    if scheme is IntegratorScheme.EE1:
        dU, dY = f(t, U, Y)
        U1, Y1 = U + dt * dU, Y + dt * dY
    else:
        h = 0.5 * dt
        k1U, k1Y = f(t, U, Y)
        k2U, k2Y = f(t + h, U + h * k1U, Y + h * k1Y)
        k3U, k3Y = f(t + h, U + h * k2U, Y + h * k2Y)
        k4U, k4Y = f(t + dt, U + dt * k3U, Y + dt * k3Y)
        U1 = U + (dt / 6.0) * (k1U + 2.0 * k2U + 2.0 * k3U + k4U)
        Y1 = Y + (dt / 6.0) * (k1Y + 2.0 * k2Y + 2.0 * k3Y + k4Y)
    if not (np.all(np.isfinite(U1)) and np.all(np.isfinite(Y1))):
        raise NumericalError("non-finite values after integration stage")
    U1, Y1 = orthonormalize_state(U1, Y1, wx)
    defect = orthonormality_defect(U1, wx)
    if defect > defect_tol:
        raise NumericalError(f"orthonormality defect {defect:.2e} exceeds {defect_tol:.1e}")
    return ReductionState(t + dt, U1, Y1)


class LinearDerivative:
    """``dT/dt`` between two grid points by linear interpolation of the end values."""

    def __init__(self, t0, dt, d0, d1):
        self.t0, self.dt, self.d0, self.d1 = t0, dt, d0, d1
        self._cache = None

    def __call__(self, t):
        theta = (t - self.t0) / self.dt
        if theta == 0.0:
            return self.d0
        if theta == 1.0:
            return self.d1
        if self._cache is None or self._cache[0] != theta:
            self._cache = (theta, self.d0 + theta * (self.d1 - self.d0))
        return self._cache[1]


# --------------------------------------------------------------------------
# ranking and diagnostics


def rank_modes(state, wxi):
    """Rotate ``(U, Y)`` within the subspace so the coefficients are uncorrelated.

    Returns ``(U_hat, Y_hat, eigenvalues)`` with ``U_hat = U psi``,
    ``Y_hat = Y psi``, eigenvalues descending, and each column of ``U_hat``
    sign-fixed so its largest-magnitude entry is positive.
    """
    cov = compute_covariance(state.Y, wxi)
    psi = cov.psi
    Uh = state.U @ psi
    signs = fix_signs(Uh)
    return Uh * signs, state.Y @ (psi * signs), cov.eigenvalues


def reduction_error(U, Y, T, wx, wxi):
    """Weighted Frobenius norm of ``U Y^T - T``."""
    U = check_matrix(U, name="U")
    Y = check_matrix(Y, (None, U.shape[1]), "Y")
    T = check_matrix(T, (U.shape[0], Y.shape[0]), "T")
    return weighted_frobenius(U @ Y.T - T, wx, wxi)


@dataclass
class MetricTrace:
    """Per-time-step diagnostics of a reduction run."""

    t: np.ndarray
    eigenvalues: np.ndarray
    sigma_total: np.ndarray
    error: np.ndarray
    ortho_defect: np.ndarray

    @classmethod
    def empty(cls, times, r):
        m = len(times)
        return cls(np.asarray(times, dtype=float).copy(), np.zeros((m, r)), np.zeros(m), np.zeros(m), np.zeros(m))

    @property
    def rank(self):
        return self.eigenvalues.shape[1]

    def header(self):
        return ["t"] + [f"lambda_{i + 1}" for i in range(self.rank)] + ["sigma_total", "error", "ortho_defect"]

    def rows(self):
        for k in range(self.t.size):
            yield [self.t[k], *self.eigenvalues[k], self.sigma_total[k], self.error[k], self.ortho_defect[k]]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.header())
            for row in self.rows():
                writer.writerow(["%.17g" % v for v in row])

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1:-3], data[:, -3], data[:, -2], data[:, -1])


def run_reduction(
    series,
    r,
    derivative_scheme=DerivativeScheme.FD4,
    integrator=IntegratorScheme.RK4,
    rel_threshold=DEFAULT_REL_THRESHOLD,
    phi=None,
    callback=None,
    dump_dir=None,
    dump_every=0,
    stats=None,
    defect_tol=DEFAULT_DEFECT_TOL,
):
    """Run the dynamic-basis reduction over a whole series in one streaming pass.

    Snapshots are mean-subtracted and differentiated on the fly (at most five
    resident). The initial state is the KL decomposition of ``T_0``; each step
    uses ``dT`` linearly interpolated between consecutive grid estimates for
    intermediate Runge-Kutta stages.

    Parameters
    ----------
    callback : callable, optional
        ``callback(k, state, T_k)`` after every accepted step (and at k = 0).
    dump_dir, dump_every : optional
        Write ranked ``U`` and ``Y`` every ``dump_every`` steps (and at the
        final step) as ``U_kkkkkk.dbsn`` / ``Y_kkkkkk.dbsn``.
    stats : dict, optional
        Receives ``peak_resident`` from the snapshot stream.

    Returns
    -------
    trace : MetricTrace
    state : ReductionState
        Final (unranked) state.
    """
    derivative_scheme = DerivativeScheme(derivative_scheme)
    integrator = IntegratorScheme(integrator)
    wx, wxi = series.wx, series.wxi
    r = check_rank(r, min(series.n, series.s))
    K, dt = series.K, series.dt
    if dump_dir is not None:
        dump_dir = Path(dump_dir)
        dump_dir.mkdir(parents=True, exist_ok=True)
    trace = MetricTrace.empty(series.times, r)
    stream = stream_windows(series, derivative_scheme, stats)
    pending = deque()

    def pull():
        try:
            pending.append(next(stream))
        except StopIteration:
            pass
        except SnapshotFormatError:
            raise
        except DynBasisError as exc:
            raise SnapshotFormatError(str(exc)) from exc

    for _ in range(3):
        pull()

    def record(k, state, T_k):
        Uh, Yh, lam = rank_modes(state, wxi)
        trace.eigenvalues[k] = lam
        trace.sigma_total[k] = lam.sum()
        trace.error[k] = reduction_error(state.U, state.Y, T_k, wx, wxi)
        trace.ortho_defect[k] = orthonormality_defect(state.U, wx)
        if callback is not None:
            callback(k, state, T_k)
        if dump_dir is not None and dump_every and (k % dump_every == 0 or k == K):
            write_matrix(dump_dir / f"U_{k:06d}.dbsn", Uh)
            write_matrix(dump_dir / f"Y_{k:06d}.dbsn", Yh)

    _, T0, _ = pending[0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankDeficiencyWarning)
        state = initialize_kl(T0, wx, wxi, r, completion=[item[2] for item in pending], t=series.times[0])
    record(0, state, T0)
    for k in range(K):
        _, _, d0 = pending.popleft()
        if not pending:
            pull()
        _, T1, d1 = pending[0]
        try:
            state = step(
                state,
                LinearDerivative(state.t, dt, d0, d1),
                dt,
                wx,
                wxi,
                integrator,
                phi,
                rel_threshold,
                defect_tol,
            )
        except NumericalError as exc:
            raise NumericalError(str(exc), step=k + 1) from exc
        except (DynBasisError, ArithmeticError, np.linalg.LinAlgError) as exc:
            raise NumericalError(f"{type(exc).__name__}: {exc}", step=k + 1) from exc
        state.t = float(series.times[k + 1])
        record(k + 1, state, T1)
        del d0, d1, T1
    return trace, state
