import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kemeny.renewal.rng import Stream, fill_uniforms, philox_block, stream_key

U64 = st.integers(0, 2**64 - 1)


def numpy_block(c, k):
    """Reference block: numpy advances its 256-bit counter before generating."""
    value = sum(int(w) << (64 * i) for i, w in enumerate(c)) - 1
    value %= 1 << 256
    ctr = np.array([(value >> (64 * i)) & (2**64 - 1) for i in range(4)], dtype=np.uint64)
    bg = np.random.Philox(counter=ctr, key=np.array(k, dtype=np.uint64))
    return bg.random_raw(4)


@given(U64, U64, U64, U64, U64, U64)
def test_block_matches_numpy_philox(c0, c1, c2, c3, k0, k1):
    out = np.empty(4, dtype=np.uint64)
    philox_block(np.uint64(c0), np.uint64(c1), np.uint64(c2), np.uint64(c3),
                 np.uint64(k0), np.uint64(k1), out)
    np.testing.assert_array_equal(out, numpy_block([c0, c1, c2, c3], [k0, k1]))


def test_uniform_stream_is_numpy_raw_shifted():
    k0, k1 = stream_key(5, 7)
    u = np.empty(12)
    fill_uniforms(k0, k1, np.uint64(3), np.uint64(2), np.uint64(0), u)
    words = np.concatenate([numpy_block([b, 3, 2, 0], [5, 7]) for b in range(3)])
    np.testing.assert_array_equal(u, (words >> np.uint64(11)).astype(np.float64) * 2.0**-53)


def test_uniforms_in_unit_interval_and_sequential():
    s = Stream(123)
    a = s.uniforms(10)
    b = s.uniforms(10)
    assert np.all((a >= 0) & (a < 1)) and not np.array_equal(a[:8], b[:8])
    t = Stream(123)
    np.testing.assert_array_equal(t.uniforms(12)[:10], a)


def test_streams_differ_by_tag_trajectory_and_set():
    base = Stream(9).uniforms(8)
    for other in (Stream(9, tag=1), Stream(9, trajectory=1), Stream(9, set_id=1), Stream(10)):
        assert not np.array_equal(base, other.uniforms(8))


def test_uniform_moments():
    u = Stream(2024).uniforms(400000)
    assert abs(u.mean() - 0.5) < 5 * np.sqrt(1 / 12 / u.size)
    assert abs(u.var() - 1 / 12) < 1e-3


def test_seed_range():
    with pytest.raises(ValueError):
        stream_key(-1, 0)
    with pytest.raises(ValueError):
        stream_key(2**64, 0)
    stream_key(2**64 - 1, 0)
