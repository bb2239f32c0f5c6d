"""Exact hitting times, Kemeny's constant and the deviation matrix.

Two independent routes to ``K'``:

* the hitting route sums ``pi_j E_i[theta_j]`` over targets, one linear solve
  per target, and reports the per-start values so their constancy can be
  checked;
* the trace route takes the trace of the deviation matrix, obtained from a
  single shifted solve.

Each route serves as the other's oracle.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from ._elimination import censored_hitting
from .chain import MarkovChain, StationaryDistribution, embedded_form, stationary_distribution
from .errors import ConstancyViolation, SingularSystemError

HUNTER_RTOL = 1e-10


def _lu(a: np.ndarray):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            return scipy.linalg.lu_factor(a, check_finite=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning, ValueError) as exc:
        raise SingularSystemError(f"singular system: {exc}") from None


def _solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    lu = _lu(a)
    x = scipy.linalg.lu_solve(lu, b, check_finite=False)
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("solve produced non-finite values")
    return x


@dataclass(frozen=True)
class HittingProfile:
    """Expected first hitting times ``h_i = E_i[theta_j]`` of one target ``j``."""

    target: int
    h: np.ndarray


HITTING_METHODS = ("elimination", "lu")
MAX_SHIFT = 690.0  # keeps the scaled right-hand side above the subnormal range


def _elimination_orders(chain: MarkovChain):
    """Per target: non-target states, farthest (in the undirected graph) first."""
    adj = csr_matrix(np.abs(chain.matrix) > 0)
    dist = shortest_path(adj, directed=False, unweighted=True)
    for j in range(chain.m):
        order = np.argsort(-dist[j], kind="stable")
        yield order[order != j].astype(np.int64)


def _solve_target(p: np.ndarray, c: np.ndarray, j: int, order: np.ndarray,
                  method: str) -> np.ndarray:
    m = p.shape[0]
    if method == "elimination":
        h = censored_hitting(p, c, j, order)
        if not np.all(np.isfinite(h)):
            raise SingularSystemError(f"elimination towards state {j} broke down")
        return h
    if method != "lu":
        raise ValueError(f"unknown hitting method {method!r}")
    keep = np.arange(m) != j
    h = np.zeros(m)
    h[keep] = _solve(np.eye(m - 1) - p[np.ix_(keep, keep)], c[keep])
    return h


def _columns(chain: MarkovChain, method: str, log_pi: np.ndarray | None = None):
    """Yield ``(j, h, w)`` with ``w = pi_j h`` computed without overflow.

    The right-hand side is scaled by ``exp(-shift)`` so that ``h`` stays finite
    even when ``E_i[theta_j]`` exceeds the double range; ``w`` is bounded by
    ``K'`` and never overflows.
    """
    if chain.m == 1:
        yield 0, np.zeros(1), np.zeros(1)
        return
    p, c = embedded_form(chain)
    p = np.ascontiguousarray(p, dtype=np.float64)
    room = MAX_SHIFT + math.log(float(np.min(c)))
    for j, order in enumerate(_elimination_orders(chain)):
        shift = 0.0 if log_pi is None else max(0.0, -float(log_pi[j]) - 300.0)
        if shift > room:
            raise SingularSystemError(
                f"hitting times towards state {j} span more than the double range "
                f"(log pi_j = {float(log_pi[j]):.1f})")
        u = _solve_target(p, c * math.exp(-shift), j, order, method)
        if np.any(np.delete(u, j) <= 0):
            raise SingularSystemError(f"non-positive hitting time towards state {j}")
        with np.errstate(over="ignore"):
            h = u * math.exp(shift)
        w = None if log_pi is None else u * math.exp(float(log_pi[j]) + shift)
        yield j, h, w


def hitting_times(chain: MarkovChain, j: int, method: str = "elimination") -> HittingProfile:
    """Solve the first-step equations ``h = c + P h`` on ``S \\ {j}``, ``h_j = 0``.

    Times are in steps for discrete chains and in time units for continuous
    ones (the generator system is solved in its jump-chain form).

    Parameters
    ----------
    method : {"elimination", "lu"}
        ``"elimination"`` censors states one at a time without forming any
        pivot by cancellation; ``"lu"`` is a plain LU solve of the reduced
        system.
    """
    m = chain.m
    if not 0 <= j < m:
        raise IndexError(f"target {j} out of range for {m} states")
    if m == 1:
        return HittingProfile(j, np.zeros(1))
    p, c = embedded_form(chain)
    order = next(itertools.islice(_elimination_orders(chain), j, None))
    h = _solve_target(np.ascontiguousarray(p, dtype=np.float64), c, j, order, method)
    if np.any(np.delete(h, j) <= 0):
        raise SingularSystemError(f"non-positive hitting time towards state {j}")
    return HittingProfile(j, h)


def hitting_matrix(chain: MarkovChain, method: str = "elimination") -> np.ndarray:
    """``H[i, j] = E_i[theta_j]``, one independent solve per column."""
    return np.column_stack([h for _, h, _ in _columns(chain, method)])


def mfpt_matrix(chain: MarkovChain, pi: np.ndarray | None = None) -> np.ndarray:
    """Mean first passage times ``E_i[T_j]`` of a discrete chain.

    Off-diagonal entries equal the hitting times; the diagonal holds the mean
    return times ``1/pi_j``.
    """
    if not chain.is_discrete:
        raise TypeError("mfpt_matrix is defined for discrete chains")
    if pi is None:
        pi = stationary_distribution(chain).pi
    mt = hitting_matrix(chain)
    mt[np.diag_indices_from(mt)] = 1.0 / pi
    return mt


@dataclass(frozen=True)
class DeviationMatrix:
    d: np.ndarray
    fixed_point_residual: float
    row_sum_residual: float
    left_null_residual: float

    @property
    def residuals(self) -> dict[str, float]:
        return {"fixed_point": self.fixed_point_residual,
                "row_sum": self.row_sum_residual,
                "left_null": self.left_null_residual}


def deviation_matrix(chain: MarkovChain, tol: float | None = None,
                     pi: np.ndarray | None = None) -> DeviationMatrix:
    """Deviation matrix from one shifted solve, never from the series.

    Discrete: ``D = (I - P + 1 pi^T)^{-1} - 1 pi^T``. Continuous: with jump
    chain ``P``, exit rates ``q`` and ``psi`` proportional to ``pi * q``,
    ``Z = (I - P + 1 psi^T)^{-1} diag(1/q)`` inverts ``-Q + q psi^T`` and
    ``D = (I - 1 pi^T) Z (I - 1 pi^T)`` is the group inverse of ``-Q``. The
    row-equilibrated form stays well conditioned when rates span many
    orders of magnitude.

    If ``tol`` is given, residuals larger than ``tol`` (scaled by the matrix
    norms) raise :class:`SingularSystemError`. The fixed-point residual is
    measured on the row-equilibrated system for continuous chains.
    """
    m = chain.m
    if pi is None:
        pi = stationary_distribution(chain).pi
    if m == 1:
        return DeviationMatrix(np.zeros((1, 1)), 0.0, 0.0, 0.0)
    ones = np.ones(m)
    big_pi = np.outer(ones, pi)
    p, hold = embedded_form(chain)
    gen = p - np.eye(m)
    if chain.is_discrete:
        d = _solve(np.eye(m) - p + big_pi, np.eye(m)) - big_pi
        rhs = np.eye(m) - big_pi
    else:
        psi = pi / hold
        psi = psi / psi.sum()
        z = _solve(np.eye(m) - p + np.outer(ones, psi), np.diag(hold))
        z = z - np.outer(z @ ones, pi)
        d = z - np.outer(ones, pi @ z)
        rhs = hold[:, None] * (np.eye(m) - big_pi)
    fixed = float(np.max(np.abs(-gen @ d - rhs)))
    rows = float(np.max(np.abs(d @ ones)))
    left = float(np.max(np.abs(pi @ d)))
    if tol is not None:
        dnorm = 1.0 + float(np.max(np.abs(d).sum(axis=1)))
        if fixed > 2 * tol * dnorm or rows > tol * dnorm or left > tol * dnorm:
            raise SingularSystemError(
                f"deviation residuals too large: fixed={fixed:.2e} row={rows:.2e} left={left:.2e}")
    return DeviationMatrix(d, fixed, rows, left)


def kemeny_via_trace(chain: MarkovChain) -> float:
    """``K'`` as the trace of the deviation matrix."""
    return math.fsum(np.diag(deviation_matrix(chain).d))


@dataclass(frozen=True)
class AnalysisReport:
    """Result of :func:`kemeny_exact`.

    ``k`` and ``mfpt`` are only set for discrete chains; ``deviation_trace`` is
    ``None`` when the trace route was not requested.
    """

    kind: str
    m: int
    kprime_by_state: np.ndarray
    kprime: float
    spread: float
    tol: float
    pi: np.ndarray
    hitting: np.ndarray
    k: float | None = None
    mfpt: np.ndarray | None = None
    hunter_bound_ok: bool | None = None
    deviation_trace: float | None = None
    route_delta: float | None = None
    cross_check_tol: float | None = None
    residuals: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind, "m": self.m, "kprime": self.kprime}
        if self.k is not None:
            out["k"] = self.k
        out["kprime_by_state"] = self.kprime_by_state.tolist()
        out["spread"] = self.spread
        out["tol"] = self.tol
        if self.deviation_trace is not None:
            out["deviation_trace"] = self.deviation_trace
            out["route_delta"] = self.route_delta
            out["cross_check_tol"] = self.cross_check_tol
            out["routes_agree"] = bool(self.route_delta <= self.cross_check_tol)
        if self.hunter_bound_ok is not None:
            out["hunter_bound_ok"] = self.hunter_bound_ok
        out["residuals"] = dict(self.residuals)
        return out


def constancy_tol(kprime: float) -> float:
    return 1e-9 * (1.0 + abs(kprime))


def kemeny_exact(chain: MarkovChain, tol: float | None = None, *,
                 with_trace: bool = True, method: str = "elimination") -> AnalysisReport:
    """Kemeny's constant from per-start sums of ``pi_j E_i[theta_j]``.

    Parameters
    ----------
    chain : MarkovChain
    tol : float, optional
        Allowed spread of the per-start sums; default ``1e-9 (1 + K')``.
    with_trace : bool
        Also run the independent trace route and report the disagreement.
    method : {"elimination", "lu"}
        Solver for the per-target hitting systems.

    Raises
    ------
    ConstancyViolation
        If the per-start sums spread by more than ``tol``.
    """
    stat: StationaryDistribution = stationary_distribution(chain)
    pi = stat.pi
    cols = list(_columns(chain, method, stat.log_pi))
    hit = np.column_stack([h for _, h, _ in cols])
    weighted = np.column_stack([w for _, _, w in cols])
    by_state = np.array([math.fsum(row) for row in weighted])
    spread = float(by_state.max() - by_state.min())
    kprime = math.fsum(by_state * pi)
    if tol is None:
        tol = constancy_tol(kprime)
    if spread > tol:
        raise ConstancyViolation(spread, tol)

    residuals = {"stationary": stat.residual}
    extra: dict = {}
    if chain.is_discrete:
        k = kprime + 1.0
        bound = (chain.m + 1) / 2
        extra["k"] = k
        extra["hunter_bound_ok"] = bool(k >= bound * (1.0 - HUNTER_RTOL))
        mt = hit.copy()
        mt[np.diag_indices_from(mt)] = 1.0 / pi
        extra["mfpt"] = mt
        omega = mt @ pi
        residuals["fixed_point"] = float(np.max(np.abs(chain.matrix @ omega - omega)))
    if with_trace:
        dev = deviation_matrix(chain, pi=pi)
        trace = math.fsum(np.diag(dev.d))
        dnorm = float(np.max(np.abs(dev.d).sum(axis=1)))
        extra["deviation_trace"] = trace
        extra["route_delta"] = abs(trace - kprime)
        extra["cross_check_tol"] = 1e-12 * chain.m * (1.0 + dnorm)
        residuals.update({f"deviation_{k_}": v for k_, v in dev.residuals.items()})
        residuals["hitting_deviation"] = float(np.max(np.abs(
            weighted - (np.diag(dev.d)[None, :] - dev.d))))
    return AnalysisReport(kind=chain.kind.value, m=chain.m, kprime_by_state=by_state,
                          kprime=kprime, spread=spread, tol=tol, pi=pi, hitting=hit,
                          residuals=residuals, **extra)


def identity_report(chain: MarkovChain) -> dict[str, float]:
    """Infinity-norm residuals of the identities linking hitting times and ``D``.

    Keys: ``fixed_point`` (``P omega - omega`` with
    ``omega_i = sum_j pi_j E_i[T_j]``, discrete only), ``hitting_deviation``
    (``pi_j E_i[theta_j] - (D_jj - D_ij)`` over all ``i, j``),
    ``left_null`` (``pi^T D``) and ``row_sum`` (``D 1``).
    """
    stat = stationary_distribution(chain)
    pi = stat.pi
    cols = list(_columns(chain, "elimination", stat.log_pi))
    hit = np.column_stack([h for _, h, _ in cols])
    weighted = np.column_stack([w for _, _, w in cols])
    dev = deviation_matrix(chain, pi=pi)
    out = {}
    if chain.is_discrete:
        mt = hit.copy()
        mt[np.diag_indices_from(mt)] = 1.0 / pi
        omega = mt @ pi
        out["fixed_point"] = float(np.max(np.abs(chain.matrix @ omega - omega)))
    diff = weighted - (np.diag(dev.d)[None, :] - dev.d)
    out["hitting_deviation"] = float(np.max(np.abs(diff)))
    out["left_null"] = dev.left_null_residual
    out["row_sum"] = dev.row_sum_residual
    return out
