"""Snapshot series storage, streaming windows and time-derivative estimation.

A series is ``K + 1`` observation matrices ``T_k`` of shape ``(n, s)`` sampled
on a uniform time grid. On disk every snapshot is one binary file with a
32-byte header (``b"DBSN"``, format version, ``n``, ``s``) followed by the
little-endian float64 payload in column-major order, so that the ``n`` state
values of one sample are contiguous. A JSON manifest lists times, weights and
file names.
"""

import enum
import json
import os
import struct
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import (
    DimensionError,
    HeaderMismatchError,
    NonUniformTimeError,
    SnapshotFormatError,
    StencilError,
    WeightError,
)
from .validation import check_matrix, check_sample_weights, check_state_weights

MAGIC = b"DBSN"
FORMAT_VERSION = 1
MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"
_HEADER = struct.Struct("<4sIQQ8x")
HEADER_SIZE = _HEADER.size  # 32 bytes

# Fourth-order first-derivative stencils on five consecutive points, indexed
# by the position of the evaluation point inside the window. Position 2 is
# the central scheme; the others are one-sided closures.
FD4_STENCILS = (
    (-25.0, 48.0, -36.0, 16.0, -3.0),
    (-3.0, -10.0, 18.0, -6.0, 1.0),
    (1.0, -8.0, 0.0, 8.0, -1.0),
    (-1.0, 6.0, -18.0, 10.0, 3.0),
    (3.0, -16.0, 36.0, -48.0, 25.0),
)


class DerivativeScheme(str, enum.Enum):
    EE1 = "EE1"
    FD4 = "FD4"

    @property
    def width(self):
        return 5 if self is DerivativeScheme.FD4 else 2


# --------------------------------------------------------------------------
# binary snapshot files


def write_matrix(path, M):
    """Write one matrix in the snapshot binary layout."""
    M = np.asarray(M, dtype="<f8")
    if M.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {M.shape}")
    n, s = M.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, n, s))
        fh.write(M.tobytes(order="F"))


def read_matrix(path, shape=None):
    """Read a matrix written by :func:`write_matrix`, optionally checking its shape."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise SnapshotFormatError(f"cannot read {path}: {exc}") from exc
    if len(raw) < HEADER_SIZE:
        raise HeaderMismatchError(f"{path}: truncated header")
    magic, version, n, s = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise SnapshotFormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise SnapshotFormatError(f"{path}: unsupported format version {version}")
    if shape is not None and (n, s) != tuple(shape):
        raise HeaderMismatchError(f"{path}: header says {(n, s)}, expected {tuple(shape)}")
    if len(raw) != HEADER_SIZE + 8 * n * s:
        raise HeaderMismatchError(f"{path}: payload has {len(raw) - HEADER_SIZE} bytes, expected {8 * n * s}")
    data = np.frombuffer(raw, dtype="<f8", offset=HEADER_SIZE)
    return data.reshape((n, s), order="F").astype(np.float64)


# --------------------------------------------------------------------------
# stores: every ``load`` returns a fresh array the caller may modify


class ArrayStore:
    """Snapshots held in memory, either a ``(K+1, n, s)`` array or a list of matrices."""

    def __init__(self, snapshots):
        self._snapshots = snapshots

    def __len__(self):
        return len(self._snapshots)

    def load(self, k):
        return np.array(self._snapshots[k], dtype=np.float64, copy=True)


class FunctionStore:
    """Snapshots generated on demand by ``fn(t)``; nothing is cached."""

    def __init__(self, fn, times):
        self._fn = fn
        self._times = np.asarray(times, dtype=np.float64)

    def __len__(self):
        return self._times.size

    def load(self, k):
        return np.array(self._fn(float(self._times[k])), dtype=np.float64, copy=True)


class DirectoryStore:
    """Snapshots stored one file per time step in a series directory."""

    def __init__(self, root, files, n, s):
        self.root = Path(root)
        self.files = list(files)
        self.shape = (n, s)

    def __len__(self):
        return len(self.files)

    def load(self, k):
        return read_matrix(self.root / self.files[k], self.shape)


@dataclass(frozen=True, eq=False)
class SnapshotSeries:
    """Uniformly sampled ensemble observations ``T_k`` of shape ``(n, s)``.

    ``store`` provides ``load(k)`` and ``len``; see :class:`ArrayStore`,
    :class:`FunctionStore` and :class:`DirectoryStore`.
    """

    times: np.ndarray
    wx: np.ndarray
    wxi: np.ndarray
    store: object
    seed: int = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "wx", check_state_weights(self.wx))
        object.__setattr__(self, "wxi", check_sample_weights(self.wxi))
        if times.ndim != 1 or times.size < 2:
            raise NonUniformTimeError("a series needs at least two time instants")
        if len(self.store) != times.size:
            raise DimensionError(f"store has {len(self.store)} snapshots but {times.size} times are given")
        check_uniform_times(times)

    @classmethod
    def from_arrays(cls, snapshots, times, wx, wxi, **kw):
        return cls(np.asarray(times, dtype=np.float64), wx, wxi, ArrayStore(snapshots), **kw)

    @property
    def n(self):
        return self.wx.size

    @property
    def s(self):
        return self.wxi.size

    @property
    def K(self):
        return self.times.size - 1

    @property
    def dt(self):
        return float((self.times[-1] - self.times[0]) / self.K)

    def snapshot(self, k):
        """Raw (not mean-subtracted) snapshot ``k``, shape-checked."""
        T = self.store.load(k)
        if T.shape != (self.n, self.s):
            raise HeaderMismatchError(f"snapshot {k} has shape {T.shape}, expected {(self.n, self.s)}")
        return T


def check_uniform_times(times, rtol=1e-12):
    times = np.asarray(times, dtype=np.float64)
    if times.size < 2:
        return
    K = times.size - 1
    dt = (times[-1] - times[0]) / K
    if not dt > 0:
        raise NonUniformTimeError("times must be strictly increasing")
    grid = times[0] + dt * np.arange(K + 1)
    scale = max(abs(times[0]), abs(times[-1]), dt)
    if np.abs(times - grid).max() > rtol * scale:
        raise NonUniformTimeError("snapshot times are not uniformly spaced")


# --------------------------------------------------------------------------
# manifest I/O


def snapshot_name(k):
    return f"T_{k:06d}.dbsn"


def write_series(series, directory, extra=None):
    """Write ``series`` as a series directory and return the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for k in range(series.K + 1):
        name = snapshot_name(k)
        write_matrix(directory / name, series.snapshot(k))
        files.append(name)
    manifest = {
        "version": MANIFEST_VERSION,
        "n": series.n,
        "s": series.s,
        "dt": series.dt,
        "times": series.times.tolist(),
        "wx": series.wx.tolist(),
        "wxi": series.wxi.tolist(),
        "snapshots": files,
    }
    if series.seed is not None:
        manifest["seed"] = int(series.seed)
    if extra:
        manifest.update(extra)
    path = directory / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=1))
    return path


def read_series(manifest_path):
    """Open a series directory (or its manifest) without loading snapshot data."""
    path = Path(manifest_path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        manifest = json.loads(path.read_text())
    except (OSError, ValueError) as exc:
        raise SnapshotFormatError(f"cannot read manifest {path}: {exc}") from exc
    required = ("version", "n", "s", "dt", "times", "wx", "wxi", "snapshots")
    missing = [key for key in required if key not in manifest]
    if missing:
        raise SnapshotFormatError(f"{path}: manifest lacks {missing}")
    if manifest["version"] != MANIFEST_VERSION:
        raise SnapshotFormatError(f"{path}: unsupported manifest version {manifest['version']}")
    n, s = int(manifest["n"]), int(manifest["s"])
    times = np.asarray(manifest["times"], dtype=np.float64)
    files = manifest["snapshots"]
    if len(files) != times.size:
        raise SnapshotFormatError(f"{path}: {len(files)} snapshot files for {times.size} times")
    check_uniform_times(times)
    if times.size > 1 and not np.isclose(manifest["dt"], (times[-1] - times[0]) / (times.size - 1), rtol=1e-12, atol=0):
        raise NonUniformTimeError(f"{path}: dt disagrees with times")
    if len(manifest["wx"]) != n or len(manifest["wxi"]) != s:
        raise HeaderMismatchError(f"{path}: weight lengths do not match n={n}, s={s}")
    root = path.parent
    expected = HEADER_SIZE + 8 * n * s
    for name in files:
        try:
            size = os.stat(root / name).st_size
        except OSError as exc:
            raise SnapshotFormatError(f"missing snapshot file {root / name}") from exc
        if size != expected:
            raise HeaderMismatchError(f"{root / name}: {size} bytes, manifest implies {expected}")
    try:
        return SnapshotSeries(
            times,
            manifest["wx"],
            manifest["wxi"],
            DirectoryStore(root, files, n, s),
            seed=manifest.get("seed"),
            meta={k: v for k, v in manifest.items() if k not in required and k != "seed"},
        )
    except WeightError as exc:
        raise SnapshotFormatError(f"{path}: {exc}") from exc


# --------------------------------------------------------------------------
# mean subtraction and derivatives


def subtract_mean(T, wxi, out=None):
    """Remove the weighted sample mean from every row of ``T``.

    Returns ``(T - mean 1^T, mean)`` with ``mean = T @ wxi``. Pass ``out=T``
    to subtract in place.
    """
    T = check_matrix(T, name="T")
    wxi = np.asarray(wxi, dtype=np.float64)
    if wxi.shape != (T.shape[1],):
        raise DimensionError(f"T has {T.shape[1]} samples but wxi has shape {wxi.shape}")
    mean = T @ wxi
    out = np.subtract(T, mean[:, None], out=out)
    return out, mean


@dataclass(frozen=True)
class SnapshotWindow:
    """Consecutive mean-subtracted snapshots ``T_start .. T_start+m-1`` around ``center``."""

    center: int
    start: int
    matrices: tuple
    dt: float
    last: int  # index K of the final snapshot in the series

    def __post_init__(self):
        if not self.matrices:
            raise StencilError("empty window")
        shapes = {m.shape for m in self.matrices}
        if len(shapes) != 1:
            raise DimensionError(f"window matrices have differing shapes {shapes}")
        if not self.start <= self.center < self.start + len(self.matrices):
            raise StencilError(f"center {self.center} outside window starting at {self.start}")


def _combine(coeffs, mats, denom):
    acc = coeffs[0] * mats[0]
    for c, m in zip(coeffs[1:], mats[1:]):
        if c != 0.0:
            acc += c * m
    acc /= denom
    return acc


def fd4_start(k, K):
    """First index of the five-point FD4 stencil used at time index ``k``."""
    return min(max(k - 2, 0), K - 4)


def ee1_start(k, K):
    return k if k < K else K - 1


def estimate_derivative(window, scheme):
    """Finite-difference estimate of ``dT/dt`` at ``window.center``.

    FD4 uses the central fourth-order stencil in the interior and five-point
    one-sided fourth-order closures for the first and last two indices. EE1
    is the forward difference, backward at the final index.
    """
    scheme = DerivativeScheme(scheme)
    k, K = window.center, window.last
    if scheme is DerivativeScheme.FD4:
        if K < 4:
            raise StencilError(f"FD4 needs at least 5 snapshots, series has {K + 1}")
        start = fd4_start(k, K)
        coeffs = FD4_STENCILS[k - start]
        denom = 12.0 * window.dt
    else:
        if K < 1:
            raise StencilError("EE1 needs at least 2 snapshots")
        start = ee1_start(k, K)
        coeffs = (-1.0, 1.0)
        denom = window.dt
    offset = start - window.start
    if offset < 0 or offset + len(coeffs) > len(window.matrices):
        raise StencilError(
            f"{scheme.value} at index {k} needs snapshots {start}..{start + len(coeffs) - 1}, "
            f"window holds {window.start}..{window.start + len(window.matrices) - 1}"
        )
    return _combine(coeffs, window.matrices[offset : offset + len(coeffs)], denom)


def derivatives_in_memory(series, scheme):
    """All ``(T_k, dT_k)`` pairs computed with the whole series in memory."""
    scheme = DerivativeScheme(scheme)
    K = series.K
    mats = [subtract_mean(series.snapshot(k), series.wxi)[0] for k in range(K + 1)]
    out = []
    for k in range(K + 1):
        window = SnapshotWindow(k, 0, tuple(mats), series.dt, K)
        out.append((mats[k], estimate_derivative(window, scheme)))
    return out


def stream_windows(series, scheme, stats=None):
    """Yield ``(k, T_k, dT_k)`` for ``k = 0..K`` holding at most 5 snapshots.

    Snapshots are loaded one at a time, mean-subtracted in place and kept in a
    bounded buffer covering the current stencil. If ``stats`` is a dict, the
    peak buffer occupancy is recorded under ``"peak_resident"``.
    """
    scheme = DerivativeScheme(scheme)
    K = series.K
    width = scheme.width
    if K + 1 < width:
        raise StencilError(f"{scheme.value} needs at least {width} snapshots, series has {K + 1}")
    locate = fd4_start if scheme is DerivativeScheme.FD4 else ee1_start
    buffer = deque(maxlen=width)
    next_index = 0
    peak = 0
    for k in range(K + 1):
        start = locate(k, K)
        while next_index < start + width:
            if len(buffer) == width:
                buffer.popleft()  # evict before loading so at most `width` are alive
            try:
                raw = series.snapshot(next_index)
            except Exception as exc:
                raise SnapshotFormatError(f"snapshot {next_index}: {exc}") from exc
            subtract_mean(raw, series.wxi, out=raw)
            buffer.append(raw)
            next_index += 1
            peak = max(peak, len(buffer))
        if stats is not None:
            stats["peak_resident"] = peak
        window = SnapshotWindow(k, next_index - len(buffer), tuple(buffer), series.dt, K)
        T_k = buffer[k - window.start]
        dT_k = estimate_derivative(window, scheme)
        # drop local references so evicted snapshots are freed on the next load
        del window
        yield k, T_k, dT_k
        del T_k, dT_k
