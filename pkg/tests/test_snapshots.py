import json
import weakref

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dynbasis.exceptions import (
    HeaderMismatchError,
    NonUniformTimeError,
    SnapshotFormatError,
    StencilError,
)
from dynbasis.snapshots import (
    HEADER_SIZE,
    ArrayStore,
    DerivativeScheme,
    SnapshotSeries,
    SnapshotWindow,
    derivatives_in_memory,
    estimate_derivative,
    read_matrix,
    read_series,
    stream_windows,
    subtract_mean,
    write_matrix,
    write_series,
)

from .conftest import random_probabilities, random_weights


class TrackingStore(ArrayStore):
    """Counts loaded snapshots that are still alive."""

    def __init__(self, snapshots):
        super().__init__(snapshots)
        self.live = 0
        self.peak = 0

    def _release(self):
        self.live -= 1

    def load(self, k):
        a = super().load(k)
        self.live += 1
        self.peak = max(self.peak, self.live)
        weakref.finalize(a, self._release)
        return a


def poly_series(coeffs, K, dt, n=3, s=4, seed=0):
    """Snapshots T(t) = sum_p c_p t^p A_p with random A_p, plus the exact derivative."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((len(coeffs), n, s))
    times = 0.3 + dt * np.arange(K + 1)
    T = np.array([sum(c * t**p * A[p] for p, c in enumerate(coeffs)) for t in times])
    dT = np.array([sum((p * c * t ** (p - 1) * A[p] for p, c in enumerate(coeffs) if p), np.zeros((n, s))) for t in times])
    wxi = np.full(s, 1.0 / s)
    series = SnapshotSeries.from_arrays(T, times, np.ones(n), wxi)
    mean_free = dT - (dT @ wxi)[..., None]
    return series, mean_free


def test_matrix_round_trip_is_bitwise(tmp_path, rng):
    M = rng.standard_normal((7, 3))
    M[0, 0] = np.nextafter(1.0, 2.0)
    write_matrix(tmp_path / "a.dbsn", M)
    raw = (tmp_path / "a.dbsn").read_bytes()
    assert raw[:4] == b"DBSN" and len(raw) == HEADER_SIZE + 8 * 21
    # column-major payload: first n values are sample 0
    assert np.frombuffer(raw[HEADER_SIZE : HEADER_SIZE + 56], "<f8").tolist() == M[:, 0].tolist()
    assert np.array_equal(read_matrix(tmp_path / "a.dbsn", (7, 3)), M)


def test_matrix_errors(tmp_path):
    path = tmp_path / "a.dbsn"
    write_matrix(path, np.ones((2, 2)))
    with pytest.raises(HeaderMismatchError):
        read_matrix(path, (2, 3))
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(HeaderMismatchError):
        read_matrix(path)
    path.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(SnapshotFormatError):
        read_matrix(path)
    path.write_bytes(raw[:10])
    with pytest.raises(HeaderMismatchError):
        read_matrix(path)
    with pytest.raises(SnapshotFormatError):
        read_matrix(tmp_path / "missing.dbsn")


def test_series_round_trip(tmp_path, rng):
    T = rng.standard_normal((4, 5, 3))
    series = SnapshotSeries.from_arrays(T, [0.0, 0.5, 1.0, 1.5], random_weights(rng, 5), random_probabilities(rng, 3), seed=7)
    manifest = write_series(series, tmp_path / "s", extra={"testbed": "demo"})
    back = read_series(manifest.parent)
    assert back.K == 3 and back.n == 5 and back.s == 3 and back.seed == 7
    assert back.dt == 0.5 and back.meta == {"testbed": "demo"}
    assert np.array_equal(back.wx, series.wx) and np.array_equal(back.wxi, series.wxi)
    for k in range(4):
        assert np.array_equal(back.snapshot(k), T[k])


def test_manifest_validation(tmp_path, rng):
    T = rng.standard_normal((3, 2, 2))
    series = SnapshotSeries.from_arrays(T, [0.0, 1.0, 2.0], np.ones(2), [0.5, 0.5])
    manifest = write_series(series, tmp_path / "s")
    data = json.loads(manifest.read_text())

    bad = dict(data, times=[0.0, 1.0, 2.5], dt=1.25)
    manifest.write_text(json.dumps(bad))
    with pytest.raises(NonUniformTimeError):
        read_series(manifest)

    bad = {k: v for k, v in data.items() if k != "wx"}
    manifest.write_text(json.dumps(bad))
    with pytest.raises(SnapshotFormatError):
        read_series(manifest)

    bad = dict(data, n=3)
    manifest.write_text(json.dumps(bad))
    with pytest.raises(HeaderMismatchError):
        read_series(manifest)

    manifest.write_text(json.dumps(data))
    (tmp_path / "s" / data["snapshots"][1]).unlink()
    with pytest.raises(SnapshotFormatError):
        read_series(manifest)


def test_non_uniform_times_rejected():
    with pytest.raises(NonUniformTimeError):
        SnapshotSeries.from_arrays(np.zeros((3, 2, 2)), [0.0, 1.0, 3.0], np.ones(2), [0.5, 0.5])
    with pytest.raises(NonUniformTimeError):
        SnapshotSeries.from_arrays(np.zeros((1, 2, 2)), [0.0], np.ones(2), [0.5, 0.5])


@given(st.integers(0, 2**32 - 1))
def test_subtract_mean_properties(seed):
    rng = np.random.default_rng(seed)
    T = rng.standard_normal((5, 6)) * 10.0 ** rng.uniform(-3, 3)
    wxi = random_probabilities(rng, 6)
    D, m = subtract_mean(T, wxi)
    scale = np.abs(T).max()
    assert np.abs(D @ wxi).max() <= 1e-14 * scale
    assert np.abs(D + m[:, None] - T).max() <= 4e-16 * scale
    D2, m2 = subtract_mean(D, wxi)
    assert np.abs(D2 - D).max() <= 1e-14 * scale and np.abs(m2).max() <= 1e-14 * scale


@pytest.mark.parametrize("degree", [0, 1, 2, 3, 4])
def test_fd4_exact_on_quartics(degree):
    coeffs = [1.0, -0.5, 0.25, 2.0, -1.5][: degree + 1]
    series, dT = poly_series(coeffs, K=9, dt=0.1)
    for k, (_, d) in enumerate(derivatives_in_memory(series, "FD4")):
        assert np.abs(d - dT[k]).max() <= 1e-11


def test_ee1_exact_on_linear():
    series, dT = poly_series([1.0, 3.0], K=4, dt=0.25)
    for k, (_, d) in enumerate(derivatives_in_memory(series, "EE1")):
        assert np.abs(d - dT[k]).max() <= 1e-13


def _sine_error(scheme, dt):
    times = dt * np.arange(int(round(1.0 / dt)) + 1)
    T = np.stack([np.array([[np.sin(t), -np.sin(t)]]) for t in times])
    series = SnapshotSeries.from_arrays(T, times, np.ones(1), [0.5, 0.5])
    return max(abs(d[0, 0] - np.cos(t)) for t, (_, d) in zip(times, derivatives_in_memory(series, scheme)))


def test_fd4_convergence_order():
    e = [_sine_error("FD4", dt) for dt in (0.02, 0.01, 0.005)]
    assert min(np.log2(e[0] / e[1]), np.log2(e[1] / e[2])) >= 3.8


def test_fd4_cubic_example():
    dt = 0.1
    times = dt * np.arange(11)
    T = np.stack([np.array([[t**3, 0.0]]) for t in times])
    series = SnapshotSeries.from_arrays(T, times, np.ones(1), [0.5, 0.5])
    d = derivatives_in_memory(series, "FD4")[5][1]
    # mean over the two samples is t^3 / 2, so sample 0 carries half the slope
    assert d[0, 0] == pytest.approx(0.5 * 0.75, rel=1e-13)


def test_derivative_examples():
    T = np.repeat(np.arange(6.0).reshape(1, 2, 3), 6, axis=0)
    series = SnapshotSeries.from_arrays(T, 0.1 * np.arange(6), np.ones(2), np.full(3, 1 / 3))
    for scheme in ("FD4", "EE1"):
        assert all(np.abs(d).max() <= 1e-12 for _, d in derivatives_in_memory(series, scheme))


def test_subtract_mean_examples():
    D, m = subtract_mean(np.array([[1.0, 3.0]]), np.array([0.5, 0.5]))
    assert D.tolist() == [[-1.0, 1.0]] and m.tolist() == [2.0]
    c = np.array([1.0, -2.0, 5.0])
    D, m = subtract_mean(np.tile(c[:, None], (1, 4)), np.full(4, 0.25))
    assert np.all(D == 0.0) and np.array_equal(m, c)
    Z = np.array([[1.0, -1.0], [2.0, -2.0]])
    D, m = subtract_mean(Z, np.array([0.5, 0.5]))
    assert np.array_equal(D, Z) and np.all(m == 0.0)


def test_stream_window_count_and_peak():
    rng = np.random.default_rng(4)
    series = SnapshotSeries.from_arrays(rng.standard_normal((11, 2, 2)), 0.1 * np.arange(11), np.ones(2), [0.5, 0.5])
    assert [k for k, _, _ in stream_windows(series, "FD4")] == list(range(11))
    store = TrackingStore(rng.standard_normal((101, 3, 2)))
    series = SnapshotSeries(0.01 * np.arange(101), np.ones(3), [0.5, 0.5], store)
    stats = {}
    for item in stream_windows(series, "FD4", stats):
        pass
    del item
    assert store.peak <= 5 and stats["peak_resident"] <= 5


def test_manifest_header_mismatch_n8_vs_n7(tmp_path, rng):
    series = SnapshotSeries.from_arrays(rng.standard_normal((7, 8, 4)), 0.1 * np.arange(7), np.ones(8), np.full(4, 0.25))
    manifest = write_series(series, tmp_path / "s")
    for k in range(7):
        assert np.array_equal(read_series(manifest).snapshot(k), series.snapshot(k))
    write_matrix(tmp_path / "s" / "T_000003.dbsn", np.zeros((7, 4)))
    with pytest.raises(HeaderMismatchError):
        read_series(manifest)


def test_non_uniform_example():
    with pytest.raises(NonUniformTimeError):
        SnapshotSeries.from_arrays(np.zeros((3, 2, 2)), [0.0, 0.1, 0.25], np.ones(2), [0.5, 0.5])


def test_ee1_convergence_order():
    e1, e2 = _sine_error("EE1", 0.02), _sine_error("EE1", 0.01)
    assert 0.9 <= np.log2(e1 / e2) <= 1.1


def test_stencil_errors():
    series = SnapshotSeries.from_arrays(np.zeros((4, 2, 2)), [0, 1, 2, 3], np.ones(2), [0.5, 0.5])
    with pytest.raises(StencilError):
        list(stream_windows(series, "FD4"))
    window = SnapshotWindow(0, 0, (np.zeros((2, 2)),), 1.0, 5)
    with pytest.raises(StencilError):
        estimate_derivative(window, DerivativeScheme.EE1)


@pytest.mark.parametrize("scheme", ["FD4", "EE1"])
def test_stream_matches_in_memory(scheme, rng):
    T = rng.standard_normal((12, 6, 4))
    series = SnapshotSeries.from_arrays(T, 0.1 * np.arange(12), random_weights(rng, 6), random_probabilities(rng, 4))
    ref = derivatives_in_memory(series, scheme)
    stats = {}
    for k, Tk, dTk in stream_windows(series, scheme, stats):
        assert np.array_equal(Tk, ref[k][0])
        assert np.array_equal(dTk, ref[k][1])
    assert stats["peak_resident"] <= DerivativeScheme(scheme).width


def test_stream_holds_at_most_five_snapshots(rng):
    store = TrackingStore(rng.standard_normal((40, 3, 2)))
    series = SnapshotSeries(0.1 * np.arange(40), np.ones(3), [0.5, 0.5], store)
    for k, Tk, dTk in stream_windows(series, "FD4"):
        pass
    del k, Tk, dTk
    assert store.peak <= 5
