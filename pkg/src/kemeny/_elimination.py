"""Subtraction-free state elimination kernels.

Both kernels censor the chain one state at a time and compute every
"one minus a probability" as an explicit sum of the remaining outflows, so
no diagonal pivot is formed by cancellation. This keeps componentwise
relative accuracy when the stationary masses or hitting times span hundreds
of orders of magnitude.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def gth_log_stationary(rates):
    """Unnormalised ``log pi`` from off-diagonal rates (or probabilities).

    Grassmann-Taksar-Heyman reduction; diagonal entries are ignored, so a
    generator and its transition matrix give the same answer up to scale.
    """
    n = rates.shape[0]
    a = rates.copy()
    for k in range(n - 1, 0, -1):
        s = 0.0
        for l in range(k):
            s += a[k, l]
        if not s > 0.0:
            return np.full(n, np.nan)
        for i in range(k):
            a[i, k] /= s
        for i in range(k):
            f = a[i, k]
            if f != 0.0:
                for l in range(k):
                    if l != i:
                        a[i, l] += f * a[k, l]
    logx = np.empty(n)
    logx[0] = 0.0
    for k in range(1, n):
        top = -np.inf
        for i in range(k):
            if a[i, k] > 0.0:
                v = logx[i] + np.log(a[i, k])
                if v > top:
                    top = v
        acc = 0.0
        for i in range(k):
            if a[i, k] > 0.0:
                acc += np.exp(logx[i] + np.log(a[i, k]) - top)
        logx[k] = top + np.log(acc)
    return logx


@njit(cache=True)
def censored_hitting(p, c, target, order):
    """Solve ``h = c + P h`` off ``target`` with ``h_target = 0``.

    ``order`` lists the non-target states in elimination order; the last one
    is solved directly and the rest by back substitution. ``p`` must be
    row-stochastic.
    """
    m = p.shape[0]
    a = p.copy()
    b = c.copy()
    esc = np.empty(m)
    for k in range(m):
        esc[k] = a[k, target]
    alive = np.ones(m, dtype=np.bool_)
    alive[target] = False
    leave = np.zeros(m)
    nk = order.size
    for t in range(nk - 1):
        r = order[t]
        alive[r] = False
        s = esc[r]
        for l in range(m):
            if alive[l]:
                s += a[r, l]
        leave[r] = s
        if not s > 0.0:
            return np.full(m, np.nan)
        for k in range(m):
            if alive[k] and a[k, r] != 0.0:
                f = a[k, r] / s
                for l in range(m):
                    if alive[l]:
                        a[k, l] += f * a[r, l]
                esc[k] += f * esc[r]
                b[k] += f * b[r]
    h = np.zeros(m)
    last = order[nk - 1]
    if not esc[last] > 0.0:
        return np.full(m, np.nan)
    h[last] = b[last] / esc[last]
    for t in range(nk - 2, -1, -1):
        r = order[t]
        acc = b[r]
        for u in range(t + 1, nk):
            l = order[u]
            acc += a[r, l] * h[l]
        h[r] = acc / leave[r]
    return h
