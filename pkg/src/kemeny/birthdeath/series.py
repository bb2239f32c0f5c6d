"""Summation of nonnegative series with an honest three-way verdict.

A series is *converged* when either

* a rule-supplied analytic enclosure of the remaining tail is narrower than
  ``rtol`` times the value (the midpoint of the enclosure is added), or
* the last ``window`` terms are each below ``rtol`` times the partial sum and
  a geometric bound with the largest recent term ratio ``r < 0.999`` puts the
  tail below ``rtol`` times the partial sum.

It is *diverged* only on analytic grounds supplied by the caller, or
heuristically when term ratios stay at or above one (and are not drifting
down) over the last ``window`` terms. Anything else at ``max_terms`` is
*undecided*.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Iterator

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import RateTableExhausted

WINDOW = 20
RATIO_CAP = 0.999
GROWTH_SLACK = 1e-3
DEFAULT_RTOL = 1e-12
DEFAULT_MAX_TERMS = 10**7


class Verdict(str, Enum):
    CONVERGED = "converged"
    DIVERGED = "diverged"
    UNDECIDED = "undecided"


class DivergenceReason(str, Enum):
    ANALYTIC = "analytic"
    NECESSARY_CONDITION_FAILED = "necessary_condition_failed"
    HEURISTIC_GROWTH = "heuristic_growth"


@dataclass(frozen=True)
class SeriesResult:
    """Outcome of summing a series.

    ``value`` is the sum when converged, the partial sum when undecided, and
    ``inf`` (or the partial sum reached) when diverged.
    """

    verdict: Verdict
    value: float
    terms_used: int
    tail_bound: float | None = None
    reason: DivergenceReason | None = None
    detail: str = ""

    @property
    def converged(self) -> bool:
        return self.verdict is Verdict.CONVERGED

    @property
    def diverged(self) -> bool:
        return self.verdict is Verdict.DIVERGED

    @classmethod
    def analytic_divergence(cls, detail: str,
                            reason: DivergenceReason = DivergenceReason.ANALYTIC) -> "SeriesResult":
        return cls(Verdict.DIVERGED, math.inf, 0, None, reason, detail)

    def label(self) -> str:
        if self.reason is not None:
            return f"{self.verdict.value}({self.reason.value})"
        return self.verdict.value

    def to_dict(self) -> dict:
        out = {"verdict": self.verdict.value,
               "value": self.value if math.isfinite(self.value) else None,
               "terms_used": self.terms_used}
        if self.tail_bound is not None:
            out["tail_bound"] = self.tail_bound
        if self.reason is not None:
            out["reason"] = self.reason.value
        if self.detail:
            out["detail"] = self.detail
        return out


TailHook = Callable[[np.ndarray], "tuple[np.ndarray, np.ndarray] | None"]


def growing_blocks(make: Callable[[int, int], np.ndarray], first: int = 0,
                   initial: int = 64, largest: int = 1 << 16) -> Iterator[np.ndarray]:
    """Yield ``make(start, stop)`` over consecutive index ranges of doubling size."""
    start, size = first, initial
    while True:
        yield make(start, start + size)
        start += size
        size = min(2 * size, largest)


def sum_series(blocks: Iterable[np.ndarray], rtol: float = DEFAULT_RTOL,
               max_terms: int = DEFAULT_MAX_TERMS, *, first_index: int = 0,
               tail: TailHook | None = None, window: int = WINDOW) -> SeriesResult:
    """Sum the nonnegative terms produced by ``blocks``.

    ``tail(n)`` (vectorised over ``n``) must enclose ``sum_{j>n} term_j`` where
    ``n`` is the global index of the last summed term; indices start at
    ``first_index``.
    """
    block_sums: list[float] = []
    partial = 0.0
    used = 0
    prev = np.empty(0)  # last `window` terms, for sliding checks across blocks
    it = iter(blocks)
    while used < max_terms:
        try:
            arr = np.asarray(next(it), dtype=np.float64)
        except StopIteration:
            break
        except RateTableExhausted as exc:
            return SeriesResult(Verdict.UNDECIDED, math.fsum(block_sums), used,
                                detail=str(exc))
        arr = arr[: max_terms - used]
        if arr.size == 0:
            break
        if np.any(np.isnan(arr)):
            return SeriesResult(Verdict.UNDECIDED, math.fsum(block_sums), used,
                                detail="non-numeric term encountered")
        if np.any(np.isinf(arr)):
            k = int(np.argmax(np.isinf(arr)))
            return SeriesResult(Verdict.DIVERGED, math.inf, used + k + 1, None,
                                DivergenceReason.HEURISTIC_GROWTH, "term overflowed")

        ext = np.concatenate([prev, arr])
        off = prev.size
        s = partial + np.cumsum(arr)
        idx = first_index + used + np.arange(arr.size)  # global index of each term

        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = ext[1:] / ext[:-1]
        ratios = np.where((ext[1:] == 0) & (ext[:-1] == 0), 0.0, ratios)
        ratios = np.concatenate([[np.nan], ratios])  # ratio at position p is ext[p]/ext[p-1]

        hit = np.full(arr.size, False)
        value = s.copy()
        bound = np.full(arr.size, np.inf)
        if tail is not None:
            enc = tail(idx)
            if enc is not None:
                lo, hi = (np.broadcast_to(np.asarray(x, dtype=np.float64), arr.shape) for x in enc)
                value = s + 0.5 * (lo + hi)
                bound = 0.5 * (hi - lo)
                hit = bound <= rtol * value
        growth = np.full(arr.size, False)
        if ext.size >= window + 1:
            win_terms = sliding_window_view(ext, window)
            win_ratio = sliding_window_view(ratios, window)
            # window ending at ext position p covers p-window+1..p; align to arr
            first_p = max(off, window - 1)
            sl = slice(first_p - (window - 1), ext.size - (window - 1))
            tmax = win_terms[sl].max(axis=1)
            rwin = win_ratio[sl]
            rmax = np.nanmax(rwin, axis=1) if rwin.size else np.empty(0)
            pos = np.arange(first_p, ext.size) - off
            t_last = arr[pos]
            small = tmax <= rtol * s[pos]
            with np.errstate(divide="ignore", invalid="ignore"):
                gbound = np.where(rmax < RATIO_CAP, t_last * rmax / (1.0 - rmax), np.inf)
            geo = small & (gbound <= rtol * s[pos]) & (s[pos] > 0)
            use_geo = geo & ~hit[pos]
            hit[pos] |= geo
            bound[pos] = np.where(use_geo, gbound, bound[pos])
            value[pos] = np.where(use_geo, s[pos], value[pos])
            grow = np.all(rwin >= 1.0, axis=1) & (rwin[:, -1] >= (1 - GROWTH_SLACK) * rwin[:, 0])
            growth[pos] = grow & (t_last > 0)

        first_hit = int(np.argmax(hit)) if hit.any() else arr.size
        first_grow = int(np.argmax(growth)) if growth.any() else arr.size
        if first_grow < first_hit:
            k = first_grow
            return SeriesResult(Verdict.DIVERGED, float(s[k]), used + k + 1, None,
                                DivergenceReason.HEURISTIC_GROWTH,
                                f"term ratios >= 1 over the last {window} terms")
        if first_hit < arr.size:
            k = first_hit
            exact = math.fsum(block_sums + [math.fsum(arr[: k + 1])])
            val = exact + (float(value[k]) - float(s[k]))
            return SeriesResult(Verdict.CONVERGED, val, used + k + 1, float(bound[k]))

        block_sums.append(math.fsum(arr))
        partial = math.fsum(block_sums)
        used += arr.size
        prev = ext[-window:]
    return SeriesResult(Verdict.UNDECIDED, math.fsum(block_sums), used,
                        detail=f"no verdict after {used} terms")
