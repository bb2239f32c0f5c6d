"""Counter-based random streams (Philox4x64-10) usable inside numba kernels.

A stream is addressed by ``key = (seed, tag)`` and the counter words
``(block, trajectory, set, 0)``; every trajectory therefore owns an
independent stream and results do not depend on how trajectories are
scheduled. Blocks match :class:`numpy.random.Philox`, which the tests use as
the reference implementation.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_LO32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_TO_UNIT = 2.0 ** -53

TAG_STEPCOUNT = 1
TAG_DEFICIT = 2
TAG_PATH = 3


@njit(inline="always")
def _mulhilo(a, b):
    a_lo = a & _LO32
    a_hi = a >> _S32
    b_lo = b & _LO32
    b_hi = b >> _S32
    ll = a_lo * b_lo
    lh = a_lo * b_hi
    hl = a_hi * b_lo
    hh = a_hi * b_hi
    mid = (ll >> _S32) + (lh & _LO32) + (hl & _LO32)
    hi = hh + (lh >> _S32) + (hl >> _S32) + (mid >> _S32)
    return hi, a * b


@njit(cache=True, nogil=True)
def philox_block(c0, c1, c2, c3, k0, k1, out):
    """Write the four 64-bit words of one Philox4x64-10 block into ``out``."""
    for _ in range(10):
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = k0 + _W0
        k1 = k1 + _W1
    out[0] = c0
    out[1] = c1
    out[2] = c2
    out[3] = c3


@njit(cache=True, nogil=True)
def fill_uniforms(k0, k1, traj, set_id, first_block, out):
    """Uniforms in ``[0, 1)`` from consecutive blocks of one stream."""
    buf = np.empty(4, dtype=np.uint64)
    n = out.size
    block = first_block
    i = 0
    while i < n:
        philox_block(block, traj, set_id, np.uint64(0), k0, k1, buf)
        for w in range(4):
            if i < n:
                out[i] = np.float64(buf[w] >> _S11) * _TO_UNIT
                i += 1
        block += np.uint64(1)


def stream_key(seed: int, tag: int) -> tuple[np.uint64, np.uint64]:
    """Philox key words for a user seed and an estimator tag."""
    if not 0 <= int(seed) < 2**64:
        raise ValueError("seed must be an integer in [0, 2**64)")
    return np.uint64(int(seed)), np.uint64(int(tag))


class Stream:
    """Sequential view of one trajectory's stream, for use from Python.

    Parameters
    ----------
    seed : int
        User seed in ``[0, 2**64)``.
    tag : int
        Estimator tag; different estimators never share streams.
    set_id, trajectory : int
        Remaining counter words.
    """

    def __init__(self, seed: int, tag: int = TAG_PATH, set_id: int = 0, trajectory: int = 0):
        self.seed = int(seed)
        self.tag = int(tag)
        self.set_id = int(set_id)
        self.trajectory = int(trajectory)
        self.key = stream_key(seed, tag)
        self.block = 0

    @property
    def words(self) -> tuple:
        """``(k0, k1, trajectory, set_id, next_block)`` as kernel arguments."""
        return (self.key[0], self.key[1], np.uint64(self.trajectory),
                np.uint64(self.set_id), np.uint64(self.block))

    def uniforms(self, n: int) -> np.ndarray:
        """Next ``n`` uniforms; whole blocks are consumed."""
        out = np.empty(n)
        fill_uniforms(*self.words, out)
        self.block += -(-n // 4)
        return out
