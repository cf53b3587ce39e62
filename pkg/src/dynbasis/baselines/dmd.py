"""Exact dynamic mode decomposition with an energy-threshold SVD truncation."""

import warnings
from dataclasses import dataclass

import numpy as np

from ..exceptions import DMDWarning
from ..validation import check_matrix

ZERO_EIGENVALUE_TOL = 1e-14


@dataclass
class DmdModel:
    """DMD modes ``Phi`` with continuous eigenvalues ``omega`` and amplitudes ``b``.

    Modes are ordered by descending growth rate ``Re(omega)`` with complex
    conjugate pairs adjacent.
    """

    rank: int
    modes: np.ndarray
    omega: np.ndarray
    mu: np.ndarray
    amplitudes: np.ndarray
    dt: float
    singular_values: np.ndarray
    t0: float = 0.0

    @property
    def n_modes(self):
        return self.omega.size


def energy_rank(sv, threshold):
    """Smallest m with ``sum(sv[:m]) / sum(sv) >= threshold`` (full rank if unreachable)."""
    total = sv.sum()
    if total == 0.0:
        return 1
    cum = np.cumsum(sv) / total
    hit = np.flatnonzero(cum >= threshold * (1.0 - 1e-14))
    return int(hit[0] + 1) if hit.size else sv.size


def _growth_order(omega):
    return np.lexsort((-omega.imag, np.abs(omega.imag), -omega.real))


def dmd_fit(snapshots, dt, energy_threshold=0.99, rank=None, t0=0.0, min_rank=1):
    """Fit exact DMD to the columns ``x_0 .. x_K`` of ``snapshots`` (n x (K+1)).

    The SVD of ``X = [x_0 .. x_{K-1}]`` is truncated at the energy threshold on
    the singular values (or at ``rank``), but never below ``min_rank`` nor
    above the numerical rank of ``X``. Zero eigenvalues of the reduced
    operator have no continuous-time counterpart; those modes are dropped with
    a :class:`DMDWarning`. Amplitudes are the least-squares fit of ``x_0``.
    """
    D = check_matrix(snapshots, name="snapshots")
    if D.shape[1] < 3:
        raise ValueError("DMD needs at least three snapshots (K >= 2)")
    X, Xp = D[:, :-1], D[:, 1:]
    Ux, S, Vh = np.linalg.svd(X, full_matrices=False)
    if rank is None:
        m = energy_rank(S, energy_threshold)
    else:
        m = int(rank)
    m = max(m, int(min_rank))
    m = max(1, min(m, int(np.count_nonzero(S > S[0] * 1e-14)) if S[0] > 0 else 1))
    Ur, Sr, Vr = Ux[:, :m], S[:m], Vh[:m].conj().T
    B = Xp @ (Vr / Sr)
    Atil = Ur.conj().T @ B
    mu, W = np.linalg.eig(Atil)
    Phi = B @ W
    zero = np.abs(mu) <= ZERO_EIGENVALUE_TOL * max(np.abs(mu).max(), 1e-300)
    if zero.any():
        warnings.warn(f"dropping {int(zero.sum())} DMD mode(s) with zero eigenvalue", DMDWarning, stacklevel=2)
        mu, Phi = mu[~zero], Phi[:, ~zero]
    omega = np.log(mu.astype(complex)) / dt
    order = _growth_order(omega)
    mu, omega, Phi = mu[order], omega[order], Phi[:, order]
    b = np.linalg.lstsq(Phi, D[:, 0].astype(complex), rcond=None)[0]
    return DmdModel(m, Phi, omega, mu, b, float(dt), S, float(t0))


def _selection(model, r_keep):
    r_keep = int(r_keep)
    if not 0 <= r_keep <= model.n_modes:
        raise ValueError(f"r_keep must lie in [0, {model.n_modes}], got {r_keep}")
    sel = list(range(r_keep))
    if 0 < r_keep < model.n_modes:
        last = model.omega[r_keep - 1]
        nxt = model.omega[r_keep]
        # keep conjugate partners together so the sum stays real
        if last.imag != 0 and np.isclose(nxt, np.conj(last), rtol=1e-10, atol=0):
            sel.append(r_keep)
    return np.array(sel, dtype=int)


def dmd_reconstruct(model, t, r_keep=None):
    """Real part of ``sum_k Phi_k exp(omega_k (t - t0)) b_k`` over the leading modes.

    ``t`` may be a scalar (returns an n-vector) or an array of times (returns
    n x len(t)). If ``r_keep`` would split a conjugate pair the partner is
    included.
    """
    sel = _selection(model, model.n_modes if r_keep is None else r_keep)
    tt = np.atleast_1d(np.asarray(t, dtype=float)) - model.t0
    dyn = np.exp(np.outer(model.omega[sel], tt)) * model.amplitudes[sel, None]
    out = np.real(model.modes[:, sel] @ dyn)
    return out[:, 0] if np.ndim(t) == 0 else out
