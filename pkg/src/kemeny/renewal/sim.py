"""Monte-Carlo estimators built on visit counts and occupation times.

* :func:`visit_deficit` estimates ``E_j[N_j(n)] - E_i[N_j(n)]``, whose limit
  is ``pi_j E_i[theta_j]``.
* :func:`step_count_identity` estimates ``sum_j E_j[N_j(n)] - (n + 1)``
  (discrete) or ``sum_j E_j[M_j(t)] - t`` (continuous), whose limit is ``K'``.

Standard errors come from the across-trajectory sample variance. Every
estimate also compares itself with the same estimator at half the horizon;
a difference beyond three standard errors of the paired difference sets
``mixing_warning``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..chain import MarkovChain, embedded_form
from ..errors import PeriodicChainError
from .kernels import batch_continuous, batch_discrete, walk_continuous, walk_discrete
from .rng import TAG_DEFICIT, TAG_STEPCOUNT, Stream, stream_key


@dataclass(frozen=True)
class SimConfig:
    """Monte-Carlo settings.

    ``horizon`` is a step count for discrete chains and a time for continuous
    ones. ``workers`` only affects speed, never the result.
    """

    horizon: float
    trajectories: int
    seed: int
    start: int | None = None
    target: int | None = None
    workers: int = 1

    def __post_init__(self):
        if self.trajectories < 1:
            raise ValueError("trajectories must be at least 1")
        if not self.horizon >= 0 or not math.isfinite(self.horizon):
            raise ValueError("horizon must be finite and nonnegative")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        stream_key(self.seed, 0)

    def to_dict(self) -> dict:
        out = {"horizon": self.horizon, "trajectories": self.trajectories, "seed": self.seed}
        if self.start is not None:
            out["start"] = self.start
        if self.target is not None:
            out["target"] = self.target
        return out


@dataclass(frozen=True)
class SimulationEstimate:
    value: float
    std_error: float
    R: int
    horizon: float
    seed: int
    half_horizon_value: float | None = None
    window_delta_se: float | None = None
    mixing_warning: bool = False

    def to_dict(self) -> dict:
        def num(x):
            return x if x is None or math.isfinite(x) else None

        out = {"value": self.value, "std_error": num(self.std_error), "R": self.R,
               "horizon": self.horizon, "seed": self.seed,
               "mixing_warning": self.mixing_warning}
        if self.half_horizon_value is not None:
            out["half_horizon_value"] = self.half_horizon_value
            out["window_delta_se"] = num(self.window_delta_se)
        return out


def _mean_var(x: np.ndarray) -> tuple[float, float]:
    """Mean and variance of the mean, by compensated sums in index order."""
    r = x.size
    mean = math.fsum(x) / r
    if r < 2:
        return mean, math.inf
    return mean, math.fsum((x - mean) ** 2) / (r - 1) / r


class _Sampler:
    """Runs trajectory sets of one chain; chunks go to a thread pool."""

    def __init__(self, chain: MarkovChain, config: SimConfig):
        self.chain = chain
        self.config = config
        p, _ = embedded_form(chain)
        cum = np.cumsum(p, axis=1)
        cum[:, -1] = 1.0  # guard against rows summing to 1 - ulp
        self.cum = np.ascontiguousarray(cum)
        if chain.is_discrete:
            self.n = int(config.horizon)
            if self.n != config.horizon:
                raise ValueError("discrete horizon must be an integer")
            self.half = self.n // 2
        else:
            self.rates = np.ascontiguousarray(chain.exit_rates if chain.m > 1 else np.zeros(1))
            self.half = 0.5 * float(config.horizon)

    def run(self, tag: int, set_id: int, start: int, target: int):
        cfg = self.config
        k0, k1 = stream_key(cfg.seed, tag)
        r = cfg.trajectories
        out = np.empty(r)
        out_half = np.empty(r)
        sid = np.uint64(set_id)

        def chunk(bounds):
            lo, hi = bounds
            if self.chain.is_discrete:
                batch_discrete(self.cum, start, self.n, self.half, k0, k1, sid, lo, hi,
                               target, out, out_half)
            else:
                batch_continuous(self.cum, self.rates, start, float(cfg.horizon), self.half,
                                 k0, k1, sid, lo, hi, target, out, out_half)

        if cfg.workers == 1 or r < 2 * cfg.workers:
            chunk((0, r))
        else:
            edges = np.linspace(0, r, 4 * cfg.workers + 1).astype(int)
            with ThreadPoolExecutor(cfg.workers) as pool:
                list(pool.map(chunk, zip(edges[:-1], edges[1:])))
        return out, out_half


def _require_aperiodic(chain: MarkovChain) -> None:
    if chain.is_discrete and not chain.aperiodic:
        raise PeriodicChainError(
            f"renewal limits need an aperiodic chain; period is {chain.period}")


def _estimate(parts, offset_full: float, offset_half: float, config: SimConfig):
    """Combine ``(sign, full, half)`` trajectory sets into one estimate."""
    value = -offset_full
    half_value = -offset_half
    var = 0.0
    var_delta = 0.0
    for sign, full, half in parts:
        mean, v = _mean_var(full)
        mean_h, _ = _mean_var(half)
        _, vd = _mean_var(full - half)
        value += sign * mean
        half_value += sign * mean_h
        var += v
        var_delta += vd
    se = math.sqrt(var)
    delta_se = math.sqrt(var_delta)
    # the expected change between windows is zero once the chain has mixed
    gap = abs(value - half_value)
    warn = bool(gap > 3.0 * delta_se + 1e-12 * (1.0 + abs(value)))
    return SimulationEstimate(value, se, config.trajectories, config.horizon, config.seed,
                              half_value, delta_se, warn)


def _horizon_offsets(chain: MarkovChain, sampler: _Sampler) -> tuple[float, float]:
    if chain.is_discrete:
        return sampler.n + 1.0, sampler.half + 1.0
    return float(sampler.config.horizon), sampler.half


def visit_deficit(chain: MarkovChain, i: int, j: int, config: SimConfig) -> SimulationEstimate:
    """Estimate ``E_j[N_j(n)] - E_i[N_j(n)]`` (or with ``M_j(t)``).

    The two expectations use independent trajectory sets (set 0 starts at
    ``j``, set 1 at ``i``). ``i == j`` returns exactly 0.

    Raises
    ------
    PeriodicChainError
        For periodic discrete chains.
    """
    _require_aperiodic(chain)
    for s in (i, j):
        if not 0 <= s < chain.m:
            raise IndexError(f"state {s} out of range for {chain.m} states")
    if i == j:
        return SimulationEstimate(0.0, 0.0, config.trajectories, config.horizon, config.seed)
    sampler = _Sampler(chain, config)
    from_j = sampler.run(TAG_DEFICIT, 0, j, j)
    from_i = sampler.run(TAG_DEFICIT, 1, i, j)
    return _estimate([(1.0, *from_j), (-1.0, *from_i)], 0.0, 0.0, config)


def step_count_identity(chain: MarkovChain, config: SimConfig) -> SimulationEstimate:
    """Estimate ``sum_j E_j[N_j(n)] - (n + 1)`` or ``sum_j E_j[M_j(t)] - t``.

    Trajectory set ``j`` starts at ``j`` and records only its own visits or
    occupation time; no start state is involved.

    Raises
    ------
    PeriodicChainError
        For periodic discrete chains.
    """
    _require_aperiodic(chain)
    sampler = _Sampler(chain, config)
    parts = [(1.0, *sampler.run(TAG_STEPCOUNT, j, j, j)) for j in range(chain.m)]
    full, half = _horizon_offsets(chain, sampler)
    return _estimate(parts, full, half, config)


def simulate_path(chain: MarkovChain, start: int, horizon: float, stream: Stream) -> np.ndarray:
    """Visit counts (discrete, times ``0..n``) or occupation times (continuous).

    The path reads the stream's current trajectory index from block 0
    onwards; the index is then advanced so the next call draws a fresh path.
    """
    if not 0 <= start < chain.m:
        raise IndexError(f"start {start} out of range for {chain.m} states")
    if not horizon >= 0:
        raise ValueError("horizon must be nonnegative")
    p, _ = embedded_form(chain)
    cum = np.cumsum(p, axis=1)
    cum[:, -1] = 1.0
    cum = np.ascontiguousarray(cum)
    k0, k1 = stream.key
    traj, sid = np.uint64(stream.trajectory), np.uint64(stream.set_id)
    out = np.zeros(chain.m)
    scratch = np.zeros(chain.m)
    if chain.is_discrete:
        n = int(horizon)
        if n != horizon:
            raise ValueError("discrete horizon must be an integer")
        walk_discrete(cum, start, n, -1, k0, k1, traj, sid, out, scratch)
    else:
        rates = np.ascontiguousarray(chain.exit_rates if chain.m > 1 else np.zeros(1))
        walk_continuous(cum, rates, start, float(horizon), 0.0, k0, k1, traj, sid, out, scratch)
    stream.trajectory += 1
    return out
