"""Series machinery for Kemeny's constant of birth-and-death processes.

Notation: ``beta_n = lambda_0...lambda_{n-1} / (mu_1...mu_n)``, ``B = sum beta_n``,
``pi_n = beta_n / B``. The theta series is accumulated through the recurrence
``f_j = (lambda_{j-1} f_{j-1} + 1) / mu_j`` (``f_0 = 0``), whose terms sum to
theta; it never touches ``pi`` and so cannot underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ..chain import ChainKind, MarkovChain
from ..errors import NotPositiveRecurrentError, PreconditionUnmetError
from .series import (
    DEFAULT_MAX_TERMS,
    DEFAULT_RTOL,
    DivergenceReason,
    SeriesResult,
    Verdict,
    growing_blocks,
    sum_series,
)
from .spec import BirthDeathSpec

LOG_SWITCH = 600.0


@njit(cache=True)
def _affine(a, b, x0):
    """``x_i = a_i x_{i-1} + b_i`` starting from ``x0``."""
    out = np.empty(a.size)
    x = x0
    for i in range(a.size):
        x = a[i] * x + b[i]
        out[i] = x
    return out


def log_beta(spec: BirthDeathSpec, n: int) -> np.ndarray:
    """``log beta_0 .. log beta_{n-1}``."""
    if n <= 0:
        return np.empty(0)
    steps = spec.log_birth(0, n - 1) - spec.log_death(1, n)
    return np.concatenate([[0.0], np.cumsum(steps)])


def _beta_blocks(spec: BirthDeathSpec):
    state = {"log": 0.0, "beta": 1.0}

    def make(start, stop):
        spec.check_rates(start, stop)
        lo = max(start, 1)
        steps = spec.log_birth(lo - 1, stop - 1) - spec.log_death(lo, stop)
        logb = state["log"] + np.cumsum(steps)
        if np.all(np.abs(logb) <= LOG_SWITCH) and abs(state["log"]) <= LOG_SWITCH:
            beta = state["beta"] * np.cumprod(np.exp(steps))
        else:
            beta = np.exp(logb)
        if logb.size:
            state["log"], state["beta"] = float(logb[-1]), float(beta[-1])
        if start == 0:
            beta = np.concatenate([[1.0], beta])
        return beta

    return growing_blocks(make, first=0)


@dataclass(frozen=True)
class BDStationary:
    """``beta``, ``log_beta`` and ``pi`` over ``0..N`` plus the normaliser series."""

    beta: np.ndarray
    log_beta: np.ndarray
    normaliser: SeriesResult
    pi: np.ndarray


def normaliser_series(spec: BirthDeathSpec, rtol: float = DEFAULT_RTOL,
                      max_terms: int = DEFAULT_MAX_TERMS) -> SeriesResult:
    """Verdict on ``B = sum_n beta_n`` (positive recurrence)."""
    if spec.beta_divergent:
        return SeriesResult.analytic_divergence(spec.beta_divergent)
    return sum_series(_beta_blocks(spec), rtol, max_terms, first_index=0, tail=spec.beta_tail)


def bd_stationary(spec: BirthDeathSpec, n: int, rtol: float = DEFAULT_RTOL,
                  max_terms: int = DEFAULT_MAX_TERMS) -> BDStationary:
    """Stationary distribution on ``0..n`` normalised by the converged ``B``.

    Raises
    ------
    NotPositiveRecurrentError
        If ``B`` diverges.
    PreconditionUnmetError
        If no verdict on ``B`` is reached within ``max_terms``.
    """
    res = normaliser_series(spec, rtol, max_terms)
    if res.diverged:
        raise NotPositiveRecurrentError(f"sum of beta_n diverges ({res.label()}): {res.detail}")
    if not res.converged:
        raise PreconditionUnmetError(f"positive recurrence undecided: {res.detail}")
    lb = log_beta(spec, n + 1)
    beta = np.exp(lb)
    head = next(_beta_blocks(spec))
    k = min(head.size, beta.size)
    beta[:k] = head[:k]  # multiplicative values where available
    pi = np.exp(lb - math.log(res.value))
    return BDStationary(beta, lb, res, pi)


def _theta_maker(spec: BirthDeathSpec):
    """Block builder for consecutive ranges of ``f_j`` starting at ``j = 1``."""
    state = {"f": 0.0}

    def make(start, stop):
        spec.check_rates(start - 1, stop)
        lm = spec.log_death(start, stop)
        a = np.exp(spec.log_birth(start - 1, stop - 1) - lm)
        f = _affine(a, np.exp(-lm), state["f"])
        state["f"] = float(f[-1])
        return f

    return make


def _theta_blocks(spec: BirthDeathSpec):
    return growing_blocks(_theta_maker(spec), first=1)


def theta_terms(spec: BirthDeathSpec, n: int) -> np.ndarray:
    """``f_1 .. f_n`` from the recurrence."""
    if n <= 0:
        return np.empty(0)
    return _theta_maker(spec)(1, n + 1)


def necessary_condition(spec: BirthDeathSpec, rtol: float = DEFAULT_RTOL,
                        max_terms: int = DEFAULT_MAX_TERMS) -> SeriesResult:
    """Verdict on ``sum_{j>=1} 1/mu_j``, whose divergence forces theta to diverge."""
    if spec.is_discrete:
        return SeriesResult.analytic_divergence("discrete time: mu_j <= 1 - lambda_j < 1")
    if spec.inv_death_divergent:
        return SeriesResult.analytic_divergence(spec.inv_death_divergent)

    def make(start, stop):
        spec.check_rates(start, stop)
        return np.exp(-spec.log_death(start, stop))

    return sum_series(growing_blocks(make, first=1), rtol, max_terms, first_index=1,
                      tail=spec.inv_death_tail)


def theta_series(spec: BirthDeathSpec, rtol: float = DEFAULT_RTOL,
                 max_terms: int = DEFAULT_MAX_TERMS) -> SeriesResult:
    """Verdict and value for ``theta = sum_k (lambda_k pi_k)^-1 sum_{j>k} pi_j``."""
    if spec.is_discrete:
        return SeriesResult.analytic_divergence(
            "discrete time: E_n[theta_0] >= n is unbounded")
    if spec.theta_divergent:
        return SeriesResult.analytic_divergence(spec.theta_divergent)
    if spec.inv_death_divergent:
        return SeriesResult.analytic_divergence(
            f"sum 1/mu_j diverges ({spec.inv_death_divergent})",
            DivergenceReason.NECESSARY_CONDITION_FAILED)
    res = sum_series(_theta_blocks(spec), rtol, max_terms, first_index=1, tail=spec.theta_tail)
    if res.verdict is Verdict.UNDECIDED:
        nec = necessary_condition(spec, rtol, max_terms)
        if nec.diverged:
            reason = (DivergenceReason.NECESSARY_CONDITION_FAILED
                      if nec.reason is DivergenceReason.ANALYTIC
                      else DivergenceReason.HEURISTIC_GROWTH)
            return SeriesResult(Verdict.DIVERGED, math.inf, res.terms_used, None, reason,
                                f"sum 1/mu_j: {nec.label()}")
    return res


def _tail_ratios(spec: BirthDeathSpec, m: int):
    """``log lambda_k``, ``log beta_k`` and ``r_k = sum_{j>k} beta_j / beta_k`` for ``k < m``.

    ``r`` runs backwards from a start value at ``k = m``. With a family tail
    enclosure for ``beta`` the start has a known relative error ``eps`` and the
    backward pass never amplifies it. Otherwise a geometric estimate is used
    (``eps = nan``) and its error is damped by ``beta_m / beta_k`` at index ``k``.
    """
    spec.check_rates(0, m + 2)
    llam = spec.log_birth(0, m + 1)
    lb = log_beta(spec, m + 1)
    a = np.exp(llam - spec.log_death(1, m + 2))
    r_end, eps = math.nan, math.nan
    enc = spec.beta_tail(np.array([m])) if spec.beta_tail is not None else None
    if enc is not None:
        lo, hi = float(np.asarray(enc[0]).ravel()[0]), float(np.asarray(enc[1]).ravel()[0])
        if lo > 0 and math.isfinite(hi):
            mid = 0.5 * (lo + hi)
            r_end = math.exp(math.log(mid) - lb[m])
            eps = 0.5 * (hi - lo) / mid
    if math.isnan(r_end) and a[m] < 1:
        r_end = a[m] / (1.0 - a[m])
    start = 0.0 if math.isnan(r_end) else r_end
    r = _affine(a[:m][::-1], a[:m][::-1], start)[::-1]
    return llam[:m], lb, r, r_end, eps


def e_pi_theta0(spec: BirthDeathSpec, rtol: float = DEFAULT_RTOL,
                max_terms: int = DEFAULT_MAX_TERMS) -> SeriesResult:
    """``E_pi[theta_0] = sum_k (lambda_k pi_k)^-1 (sum_{j>k} pi_j)^2``.

    Tails ``sum_{j>k} pi_j`` are carried as the ratios ``r_k`` through one
    backward pass, not re-summed for each ``k``. Term ``k`` equals the tail
    mass beyond ``k`` times the ``k``-th term of the theta series, so the
    remainder after ``n`` terms is at most that mass at ``n`` times the
    remainder of the theta series.

    Raises
    ------
    PreconditionUnmetError
        When the theta series has not converged.
    """
    theta = theta_series(spec, rtol, max_terms)
    if not theta.converged:
        raise PreconditionUnmetError(f"theta series is {theta.label()}")
    theta_hi = theta.value + theta.tail_bound
    log_b = math.log(bd_stationary(spec, 0, rtol, max_terms).normaliser.value)
    m = 256
    while True:
        llam, lb, r, r_end, eps = _tail_ratios(spec, m)
        log_pi = lb - log_b
        terms = np.exp(log_pi[:m] - llam) * r * r
        mass = np.exp(log_pi[:m]) * r  # sum_{j>k} pi_j
        # theta remainder beyond k, with a margin for the running-sum rounding
        rest = theta_hi - np.cumsum(r * np.exp(-llam))
        rest = np.maximum(rest, 0.0) + (np.arange(m) + 2) * 2.3e-16 * theta_hi

        def remainder(idx, mass=mass, rest=rest):
            i = np.minimum(idx, m - 1)
            hi = mass[i] * rest[i]
            return np.zeros_like(hi), hi

        res = sum_series([terms], rtol, m, tail=remainder)
        if res.converged and not math.isnan(r_end):
            k = res.terms_used - 1
            if not math.isnan(eps):
                # relative error of r_k is at most eps * T_m / T_k
                t_ratio = math.exp(log_pi[m] - log_pi[k]) * r_end / r[k] if r[k] > 0 else 0.0
                prop = 2.0 * eps * t_ratio * res.value
            else:
                damp = math.exp(lb[m] - lb[k])
                rmin = float(np.min(r[: k + 1]))
                prop = (2.0 * res.value * damp * (1.0 + r_end) / rmin
                        if damp <= 1e-3 * rtol and rmin > 0 else math.inf)
            bound = res.tail_bound + prop
            if bound <= rtol * res.value:
                return SeriesResult(Verdict.CONVERGED, res.value, res.terms_used, bound)
        if res.diverged:
            return res
        if 2 * m > max_terms:
            return SeriesResult(Verdict.UNDECIDED, res.value, res.terms_used,
                                detail="tail ratios did not settle within max_terms")
        m *= 2


def kemeny_bd(spec: BirthDeathSpec, rtol: float = DEFAULT_RTOL,
              max_terms: int = DEFAULT_MAX_TERMS) -> SeriesResult:
    """``K' = theta - E_pi[theta_0]`` when theta converges; diverged otherwise.

    Raises
    ------
    NotPositiveRecurrentError
        If ``B`` diverges.
    """
    bd_stationary(spec, 0, rtol, max_terms)
    theta = theta_series(spec, rtol, max_terms)
    if theta.diverged:
        return SeriesResult(Verdict.DIVERGED, math.inf, theta.terms_used, None,
                            theta.reason, f"theta diverges: {theta.detail}")
    inner = rtol
    for _ in range(2):
        if not theta.converged:
            return SeriesResult(Verdict.UNDECIDED, math.nan, theta.terms_used,
                                detail=f"theta undecided: {theta.detail}")
        e = e_pi_theta0(spec, inner, max_terms)
        if not e.converged:
            return SeriesResult(Verdict.UNDECIDED, math.nan, theta.terms_used,
                                detail=f"E_pi[theta_0] undecided: {e.detail}")
        value = theta.value - e.value
        bound = theta.tail_bound + e.tail_bound
        used = max(theta.terms_used, e.terms_used)
        if bound <= rtol * value:
            return SeriesResult(Verdict.CONVERGED, value, used, bound)
        if not value > 0:
            break
        # the subtraction cancels digits: tighten both series once
        inner = 0.25 * rtol * value / theta.value
        theta = theta_series(spec, inner, max_terms)
    return SeriesResult(Verdict.UNDECIDED, value, used, bound,
                        detail="cancellation: tail bound exceeds rtol * K'")


def hitting_from_zero(spec: BirthDeathSpec, j: int) -> float:
    """``E_0[theta_j] = sum_{k<j} (lambda_k pi_k)^-1 sum_{l<=k} pi_l``.

    Evaluated as ``sum_{k<j} p_k / lambda_k`` with ``p_k = sum_{l<=k} beta_l/beta_k``
    so the normaliser cancels.
    """
    if j <= 0:
        return 0.0
    spec.check_rates(0, j)
    llam = spec.log_birth(0, j)
    c = np.exp(spec.log_death(1, j) - llam[:-1])
    p = np.concatenate([[1.0], _affine(c, np.ones(j - 1), 1.0)])
    return math.fsum(np.exp(np.log(p) - llam))


def taboo_sojourn(spec: BirthDeathSpec, j: int) -> float:
    """Expected time in ``j`` before reaching 0, from ``j``: ``pi_j sum_{1<=k<=j} 1/(pi_k mu_k)``."""
    if j <= 0:
        return 0.0
    lb = log_beta(spec, j + 1)
    lmu = spec.log_death(1, j + 1)
    return math.fsum(np.exp(lb[j] - lb[1:] - lmu))


def truncate(spec: BirthDeathSpec, n: int) -> MarkovChain:
    """Finite chain on ``0..n`` with a reflecting boundary at ``n``.

    Continuous: ``lambda_n`` is set to zero. Discrete: ``lambda_n`` is added to
    the holding probability at ``n``.
    """
    if n < 1:
        raise ValueError("truncation level must be at least 1")
    spec.check_rates(0, n + 1)
    lam = np.exp(spec.log_birth(0, n))
    mu = np.exp(spec.log_death(1, n + 1))
    a = np.zeros((n + 1, n + 1))
    idx = np.arange(n)
    a[idx, idx + 1] = lam
    a[idx + 1, idx] = mu
    labels = [str(i) for i in range(n + 1)]
    if spec.kind is ChainKind.CONTINUOUS:
        a[np.diag_indices(n + 1)] = -a.sum(axis=1)
        return MarkovChain(a, ChainKind.CONTINUOUS, labels)
    hold = 1.0 - a.sum(axis=1)
    hold[np.abs(hold) < 1e-15] = 0.0
    a[np.diag_indices(n + 1)] = hold
    return MarkovChain(a, ChainKind.DISCRETE, labels)
