import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from worldline_casimir.loopgen import (ALGORITHM_ID, CorruptEnsembleError, EnsembleFormatError,
                                       LoopEnsemble, WorldlineLoop, extent, generate_ensemble,
                                       generate_unit_loop, load_ensemble, loop_rng, open_ensemble,
                                       save_ensemble)


class ZeroRng:
    def standard_normal(self, size):
        return np.zeros(size)


def test_zero_noise_loop_is_degenerate():
    loop = generate_unit_loop(4, ZeroRng())
    assert np.array_equal(loop.points, np.zeros((4, 3)))
    assert extent(loop, "z") == 0.0


def test_too_few_points():
    with pytest.raises(ValueError):
        generate_unit_loop(3, loop_rng(0, 0))
    with pytest.raises(ValueError):
        WorldlineLoop(np.zeros((3, 3)))


def test_same_seed_same_loop():
    a = generate_unit_loop(257, loop_rng(11, 3))
    b = generate_unit_loop(257, loop_rng(11, 3))
    assert a.points.tobytes() == b.points.tobytes()
    c = generate_unit_loop(257, loop_rng(11, 4))
    assert not np.array_equal(a.points, c.points)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(4, 3000), seed=st.integers(0, 2**64 - 1), k=st.integers(0, 10**6))
def test_center_of_mass_at_origin(n, seed, k):
    pts = generate_unit_loop(n, loop_rng(seed, k)).points
    assert pts.shape == (n, 3)
    scale = np.abs(pts).max()
    assert np.all(np.abs(pts.mean(axis=0)) <= 1e-12 * scale)


def test_closure_step_matches_bulk_steps():
    # closing edge is an ordinary bridge increment, not a jump
    n = 4096
    steps = []
    for k in range(200):
        pts = generate_unit_loop(n, loop_rng(5, k)).points
        steps.append(np.linalg.norm(pts[0] - pts[-1]))
    # |step|^2 has mean 3 * 2/n (up to O(1/n^2) drift correction)
    assert np.mean(np.square(steps)) == pytest.approx(6.0 / n, rel=0.15)


def _relative_displacements(count, n_points, taus, seed):
    idx = [round(t * n_points) for t in taus]
    out = np.empty((count, len(idx)))
    for k in range(count):
        z = generate_unit_loop(n_points, loop_rng(seed, k)).points[:, 2]
        out[k] = z[idx] - z[0]
    return out


@pytest.fixture(scope="module")
def bridge_samples():
    return _relative_displacements(100_000, 1000, [0.25, 0.5, 0.75], seed=2024)


def test_bridge_variance_at_half(bridge_samples):
    y = bridge_samples[:, 1]
    n = y.size
    var = y.var(ddof=1)
    # stderr of the sample variance of a Gaussian
    se = var * math.sqrt(2.0 / (n - 1))
    assert abs(var - 0.5) <= 3 * se


@pytest.mark.parametrize("i,j,t1,t2", [(0, 1, 0.25, 0.5), (1, 2, 0.5, 0.75), (0, 2, 0.25, 0.75)])
def test_bridge_covariance(bridge_samples, i, j, t1, t2):
    a, b = bridge_samples[:, i], bridge_samples[:, j]
    prod = (a - a.mean()) * (b - b.mean())
    cov = prod.mean()
    se = prod.std(ddof=1) / math.sqrt(prod.size)
    assert abs(cov - 2 * t1 * (1 - t2)) <= 3 * se


def test_generate_ensemble_deterministic():
    a = generate_ensemble(2, 100, 7)
    b = generate_ensemble(2, 100, 7)
    assert a.coords.tobytes() == b.coords.tobytes()
    lazy = generate_ensemble(2, 100, 7, lazy=True)
    assert lazy.is_lazy
    for k in range(2):
        assert lazy.loop(k).points.tobytes() == a.loop(k).points.tobytes()


def test_ensemble_validation():
    with pytest.raises(ValueError):
        generate_ensemble(0, 100, 1)
    with pytest.raises(ValueError):
        LoopEnsemble(count=1, n_points=100, seed=-1)
    with pytest.raises(ValueError):
        LoopEnsemble(count=1, n_points=100, seed=2**64)


def test_production_scale_size():
    ens = LoopEnsemble(count=800, n_points=10**6, seed=1)
    # 800 loops x 10^6 points x 3 coordinates x 8 bytes plus a small header
    payload = 800 * 10**6 * 3 * 8
    assert payload <= ens.nbytes() <= payload + 64
    assert len(ens.loops) == 800


def test_loops_of_one_ensemble_are_uncorrelated():
    first, second = [], []
    for seed in range(2000):
        ens = generate_ensemble(2, 64, seed, lazy=True)
        first.append(extent(ens.loop(0)))
        second.append(extent(ens.loop(1)))
    r = np.corrcoef(first, second)[0, 1]
    assert abs(r) <= 3 / math.sqrt(len(first))


def test_extent_isotropy():
    ext = np.array([[extent(loop, ax) for ax in "xyz"]
                    for loop in generate_ensemble(3000, 256, 99, lazy=True)])
    for a, b in [(0, 1), (0, 2), (1, 2)]:
        assert stats.ks_2samp(ext[:, a], ext[:, b]).pvalue > 1e-3


def test_extent_axis_validation():
    loop = generate_unit_loop(8, loop_rng(0, 0))
    with pytest.raises(ValueError):
        extent(loop, "w")


def _roundtrip(ens):
    buf = io.BytesIO()
    save_ensemble(ens, buf)
    return buf.getvalue(), load_ensemble(io.BytesIO(buf.getvalue()))


def test_save_load_roundtrip():
    ens = generate_ensemble(3, 50, 123456789)
    raw, back = _roundtrip(ens)
    assert back.coords.tobytes() == ens.coords.tobytes()
    assert (back.count, back.n_points, back.seed, back.algorithm_id) == (3, 50, 123456789, ALGORITHM_ID)
    buf = io.BytesIO()
    save_ensemble(back, buf)
    assert buf.getvalue() == raw


def test_lazy_and_materialized_save_identically():
    lazy = generate_ensemble(2, 40, 5, lazy=True)
    assert _roundtrip(lazy)[0] == _roundtrip(lazy.materialize())[0]


def test_header_layout():
    raw, _ = _roundtrip(generate_ensemble(1, 4, 9))
    assert raw[:4] == b"WLGE"
    assert int.from_bytes(raw[4:8], "little") == 1
    assert int.from_bytes(raw[8:16], "little") == 1
    assert int.from_bytes(raw[16:24], "little") == 4
    assert int.from_bytes(raw[24:32], "little") == 9
    alg_len = int.from_bytes(raw[32:36], "little")
    assert raw[36:36 + alg_len].decode() == ALGORITHM_ID
    assert len(raw) == 36 + alg_len + 4 * 3 * 8


def test_bad_magic():
    raw, _ = _roundtrip(generate_ensemble(2, 8, 1))
    with pytest.raises(EnsembleFormatError):
        load_ensemble(io.BytesIO(b"XXXX" + raw[4:]))


def test_bad_version():
    raw, _ = _roundtrip(generate_ensemble(2, 8, 1))
    bad = raw[:4] + (99).to_bytes(4, "little") + raw[8:]
    with pytest.raises(EnsembleFormatError):
        load_ensemble(io.BytesIO(bad))


def test_truncated_payload():
    ens = generate_ensemble(3, 8, 1)
    raw, _ = _roundtrip(ens)
    # header still says 3 loops, but only 2 loops of data follow
    with pytest.raises(CorruptEnsembleError):
        load_ensemble(io.BytesIO(raw[: len(raw) - 8 * 3 * 8]))


def test_trailing_bytes():
    raw, _ = _roundtrip(generate_ensemble(1, 8, 1))
    with pytest.raises(CorruptEnsembleError):
        load_ensemble(io.BytesIO(raw + b"\0"))


def test_memory_mapped_open(tmp_path):
    ens = generate_ensemble(4, 33, 77)
    path = tmp_path / "e.wlge"
    with open(path, "wb") as fh:
        save_ensemble(ens, fh)
    mapped = open_ensemble(path)
    assert mapped.seed == 77
    for k in range(4):
        assert mapped.loop(k).points.tobytes() == ens.loop(k).points.tobytes()
    path.write_bytes(path.read_bytes()[:-1])
    with pytest.raises(CorruptEnsembleError):
        open_ensemble(path)


def test_loops_are_read_only():
    loop = generate_ensemble(1, 16, 0).loop(0)
    with pytest.raises(ValueError):
        loop.points[0, 0] = 1.0
