"""Numba path kernels.

Each trajectory consumes its own Philox stream ``(k0, k1; block, traj, set)``
and writes only its own output slot, so a batch may be split across threads
in any way without changing a single bit of the result.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .rng import philox_block

_S11 = np.uint64(11)
_TO_UNIT = 2.0 ** -53


@njit(inline="always")
def _pick(cum, row, u):
    """Smallest ``k`` with ``u < cum[row, k]`` (last column if none)."""
    lo = 0
    hi = cum.shape[1] - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if u < cum[row, mid]:
            hi = mid
        else:
            lo = mid + 1
    return lo


@njit(cache=True, nogil=True)
def walk_discrete(cum, start, n, half, k0, k1, traj, set_id, counts, counts_half):
    """Visit counts ``N_j(n)`` over ``0..n`` (and ``N_j(half)``) of one path."""
    buf = np.empty(4, dtype=np.uint64)
    block = np.uint64(0)
    used = 4
    x = start
    counts[x] += 1.0
    if half >= 0:
        counts_half[x] += 1.0
    for step in range(1, n + 1):
        if used == 4:
            philox_block(block, traj, set_id, np.uint64(0), k0, k1, buf)
            block += np.uint64(1)
            used = 0
        u = np.float64(buf[used] >> _S11) * _TO_UNIT
        used += 1
        x = _pick(cum, x, u)
        counts[x] += 1.0
        if step <= half:
            counts_half[x] += 1.0


@njit(cache=True, nogil=True)
def walk_continuous(cum, rates, start, horizon, half, k0, k1, traj, set_id, occ, occ_half):
    """Occupation times ``M_j(t)`` on ``[0, t]`` (and on ``[0, half]``) of one path.

    Holding times are ``-log(1 - u) / q_x``; the last sojourn is clipped at the
    horizon, so the occupation times sum to it exactly up to rounding.
    """
    buf = np.empty(4, dtype=np.uint64)
    block = np.uint64(0)
    used = 4
    x = start
    t = 0.0
    while True:
        if used == 4:
            philox_block(block, traj, set_id, np.uint64(0), k0, k1, buf)
            block += np.uint64(1)
            used = 0
        u = np.float64(buf[used] >> _S11) * _TO_UNIT
        used += 1
        q = rates[x]
        hold = np.inf if q == 0.0 else -np.log1p(-u) / q
        end = t + hold
        if t < half:
            occ_half[x] += min(end, half) - t
        if end >= horizon:
            occ[x] += horizon - t
            return
        occ[x] += hold
        t = end
        if used == 4:
            philox_block(block, traj, set_id, np.uint64(0), k0, k1, buf)
            block += np.uint64(1)
            used = 0
        u = np.float64(buf[used] >> _S11) * _TO_UNIT
        used += 1
        x = _pick(cum, x, u)


@njit(cache=True, nogil=True)
def batch_discrete(cum, start, n, half, k0, k1, set_id, lo, hi, target, out, out_half):
    """``out[r] = N_target(n)`` for trajectories ``lo <= r < hi``."""
    m = cum.shape[0]
    counts = np.empty(m)
    counts_half = np.empty(m)
    for r in range(lo, hi):
        counts[:] = 0.0
        counts_half[:] = 0.0
        walk_discrete(cum, start, n, half, k0, k1, np.uint64(r), set_id, counts, counts_half)
        out[r] = counts[target]
        out_half[r] = counts_half[target]


@njit(cache=True, nogil=True)
def batch_continuous(cum, rates, start, horizon, half, k0, k1, set_id, lo, hi, target,
                     out, out_half):
    """``out[r] = M_target(t)`` for trajectories ``lo <= r < hi``."""
    m = cum.shape[0]
    occ = np.empty(m)
    occ_half = np.empty(m)
    for r in range(lo, hi):
        occ[:] = 0.0
        occ_half[:] = 0.0
        walk_continuous(cum, rates, start, horizon, half, k0, k1, np.uint64(r), set_id,
                        occ, occ_half)
        out[r] = occ[target]
        out_half[r] = occ_half[target]
