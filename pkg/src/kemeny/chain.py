"""Finite Markov chains in discrete and continuous time.

A :class:`MarkovChain` is validated on construction and immutable afterwards.
Discrete chains carry a row-stochastic matrix ``P``; continuous chains carry a
generator ``Q`` with nonnegative off-diagonal rates and zero row sums.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from ._elimination import gth_log_stationary
from .errors import (
    AbsorbingStateError,
    InvalidChainError,
    PeriodicWarning,
    SingularSystemError,
    Violation,
)

DEFAULT_VALIDATION_TOL = 1e-12


class ChainKind(str, Enum):
    DISCRETE = "dtmc"
    CONTINUOUS = "ctmc"

    @classmethod
    def parse(cls, value: "ChainKind | str") -> "ChainKind":
        if isinstance(value, cls):
            return value
        aliases = {"dtmc": cls.DISCRETE, "discrete": cls.DISCRETE,
                   "ctmc": cls.CONTINUOUS, "continuous": cls.CONTINUOUS}
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"unknown chain kind {value!r}") from None


def _collect_violations(a: np.ndarray, kind: ChainKind, tol: float) -> list[Violation]:
    out: list[Violation] = []
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return [Violation("not_square", f"matrix has shape {a.shape}, expected m x m")]
    m = a.shape[0]
    if m == 0:
        return [Violation("empty", "matrix has no states")]
    bad = np.argwhere(~np.isfinite(a))
    for i, j in bad:
        out.append(Violation("non_finite", f"entry ({i},{j}) is not finite",
                             row=int(i), column=int(j)))
    if bad.size:
        return out

    off = ~np.eye(m, dtype=bool)
    if kind is ChainKind.DISCRETE:
        for i, j in np.argwhere(a < 0):
            out.append(Violation("negative_entry", f"P[{i},{j}] = {a[i, j]!r} < 0",
                                 row=int(i), column=int(j)))
        for i, j in np.argwhere(a > 1):
            out.append(Violation("entry_out_of_range", f"P[{i},{j}] = {a[i, j]!r} > 1",
                                 row=int(i), column=int(j)))
        sums = a.sum(axis=1)
        scale = np.maximum(1.0, np.abs(a).sum(axis=1))
        dev = sums - 1.0
    else:
        for i, j in np.argwhere((a < 0) & off):
            out.append(Violation("negative_entry", f"Q[{i},{j}] = {a[i, j]!r} < 0",
                                 row=int(i), column=int(j)))
        for i in np.flatnonzero(np.diag(a) > 0):
            out.append(Violation("positive_diagonal", f"Q[{i},{i}] = {a[i, i]!r} > 0",
                                 row=int(i), column=int(i)))
        dev = a.sum(axis=1)
        scale = np.maximum(1.0, np.abs(a).sum(axis=1))
    for i in np.flatnonzero(np.abs(dev) > tol * scale):
        out.append(Violation("row_sum", f"row {i} sum deviates by {dev[i]:.3e}",
                             row=int(i), deviation=float(dev[i])))
    return out


def _transition_graph(a: np.ndarray) -> csr_matrix:
    adj = (a > 0).astype(np.int8)
    np.fill_diagonal(adj, 0)
    return csr_matrix(adj)


def _period(a: np.ndarray) -> int:
    """gcd of cycle lengths of the positive-entry digraph (self-loops included)."""
    m = a.shape[0]
    if np.any(np.diag(a) > 0):
        return 1
    graph = csr_matrix((a > 0).astype(np.int8))
    order, pred = breadth_first_order(graph, 0, directed=True, return_predecessors=True)
    level = np.full(m, -1, dtype=np.int64)
    level[0] = 0
    for v in order[1:]:
        level[v] = level[pred[v]] + 1
    g = 0
    rows, cols = graph.nonzero()
    for u, v in zip(rows, cols):
        g = math.gcd(g, int(level[u] + 1 - level[v]))
        if g == 1:
            break
    return g


@dataclass(frozen=True, eq=False)
class MarkovChain:
    """A validated, irreducible finite Markov chain.

    Parameters
    ----------
    matrix : array_like
        Row-stochastic ``P`` (discrete) or generator ``Q`` (continuous).
    kind : ChainKind or str
        ``"dtmc"`` or ``"ctmc"``.
    labels : sequence of str, optional
        State names.
    tol : float
        Row-sum tolerance, relative to the row's absolute sum (at least 1).

    Raises
    ------
    InvalidChainError
        Listing every violated invariant. Periodicity is not a violation; it
        is recorded in :attr:`period` and signalled with :class:`PeriodicWarning`.
    """

    matrix: np.ndarray
    kind: ChainKind = ChainKind.DISCRETE
    labels: tuple[str, ...] | None = None
    tol: float = DEFAULT_VALIDATION_TOL
    period: int = field(init=False, default=1)

    def __post_init__(self):
        kind = ChainKind.parse(self.kind)
        a = np.array(self.matrix, dtype=np.float64, copy=True)
        violations = _collect_violations(a, kind, self.tol)
        if violations:
            raise InvalidChainError(violations)
        m = a.shape[0]
        labels = None if self.labels is None else tuple(str(s) for s in self.labels)
        if labels is not None and len(labels) != m:
            raise InvalidChainError([Violation(
                "labels", f"{len(labels)} labels given for {m} states")])
        ncomp, comp = connected_components(_transition_graph(a), directed=True,
                                           connection="strong")
        if ncomp > 1:
            members = [tuple(int(s) for s in np.flatnonzero(comp == c)) for c in range(ncomp)]
            raise InvalidChainError([
                Violation("not_irreducible",
                          f"{ncomp} strongly connected components; component {c}: "
                          f"{list(mem[:10])}{'...' if len(mem) > 10 else ''}",
                          component=mem)
                for c, mem in enumerate(members)])
        a.setflags(write=False)
        object.__setattr__(self, "matrix", a)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "labels", labels)
        if kind is ChainKind.DISCRETE:
            p = _period(a)
            object.__setattr__(self, "period", p)
            if p > 1:
                warnings.warn(f"chain is periodic with period {p}", PeriodicWarning,
                              stacklevel=3)

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_discrete(self) -> bool:
        return self.kind is ChainKind.DISCRETE

    @property
    def aperiodic(self) -> bool:
        return self.period == 1

    @property
    def exit_rates(self) -> np.ndarray:
        """``q_i = -Q_ii`` for continuous chains."""
        if self.is_discrete:
            raise TypeError("exit rates are defined for continuous chains only")
        return -np.diag(self.matrix).copy()

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value, "matrix": self.matrix.tolist()}
        if self.labels is not None:
            out["labels"] = list(self.labels)
        return out


def validate_chain(raw, kind: ChainKind | str, *, labels: Sequence[str] | None = None,
                   tol: float = DEFAULT_VALIDATION_TOL) -> MarkovChain:
    """Validate ``raw`` as a chain of the given kind; see :class:`MarkovChain`."""
    return MarkovChain(raw, kind, labels, tol)


def chain_from_dict(doc: dict, *, tol: float = DEFAULT_VALIDATION_TOL) -> MarkovChain:
    """Build a chain from ``{"kind": ..., "matrix": [[...]], "labels": [...]?}``."""
    if not isinstance(doc, dict) or "matrix" not in doc or "kind" not in doc:
        raise InvalidChainError([Violation("format", "chain document needs 'kind' and 'matrix'")])
    try:
        kind = ChainKind.parse(doc["kind"])
    except ValueError as exc:
        raise InvalidChainError([Violation("format", str(exc))]) from None
    try:
        matrix = np.array(doc["matrix"], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise InvalidChainError([Violation("format", f"matrix is not numeric: {exc}")]) from None
    return MarkovChain(matrix, kind, doc.get("labels"), tol)


def load_chain(path: str | Path, *, tol: float = DEFAULT_VALIDATION_TOL) -> MarkovChain:
    with open(path, encoding="utf-8") as fh:
        return chain_from_dict(json.load(fh), tol=tol)


def embedded_form(chain: MarkovChain) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(P, c)`` with ``h = c + P h`` the first-step equations.

    For a discrete chain this is ``(P, 1)``. For a continuous chain it is the
    jump chain together with mean holding times ``1/q``; dividing the generator
    rows by ``q_i`` equilibrates systems whose rates span many magnitudes.
    """
    if chain.is_discrete:
        return chain.matrix, np.ones(chain.m)
    if chain.m == 1:
        return np.ones((1, 1)), np.zeros(1)
    return _jump_matrix(chain), 1.0 / chain.exit_rates


@dataclass(frozen=True)
class StationaryDistribution:
    """``pi`` with its balance residual; ``log_pi`` survives underflow of ``pi``."""

    pi: np.ndarray
    residual: float
    log_pi: np.ndarray | None = None


def _bordered(chain: MarkovChain) -> np.ndarray:
    m = chain.m
    p, _ = embedded_form(chain)
    weights = np.ones(m) if chain.is_discrete else 1.0 / chain.exit_rates
    a = np.eye(m) - p.T
    a[-1, :] = weights
    b = np.zeros(m)
    b[-1] = 1.0
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            lu = scipy.linalg.lu_factor(a, check_finite=False)
            y = scipy.linalg.lu_solve(lu, b, check_finite=False)
            y = y + scipy.linalg.lu_solve(lu, b - a @ y, check_finite=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning, ValueError) as exc:
        raise SingularSystemError(f"stationary solve failed: {exc}") from None
    pi = y * weights
    if not np.all(np.isfinite(pi)) or np.any(pi <= 0):
        raise SingularSystemError("stationary solve produced a non-positive vector")
    return np.log(pi / pi.sum())


def stationary_distribution(chain: MarkovChain, tol: float = 1e-9,
                            method: str = "gth") -> StationaryDistribution:
    """Stationary vector of an irreducible chain.

    Parameters
    ----------
    chain : MarkovChain
    tol : float
        Allowed balance residual, relative to ``max(1, ||P or Q||_inf)``.
    method : {"gth", "bordered"}
        ``"gth"`` (default) uses subtraction-free state reduction and is
        accurate componentwise, even for masses far below machine epsilon.
        ``"bordered"`` replaces one balance equation with the normalisation
        and solves directly with one step of iterative refinement;
        continuous chains are solved for ``y = pi * q`` against the jump
        chain with the normalisation row weighted by ``1/q``.

    Raises
    ------
    SingularSystemError
        If the reduction breaks down or the residual exceeds the tolerance.
    """
    m = chain.m
    if m == 1:
        return StationaryDistribution(np.ones(1), 0.0, np.zeros(1))
    if method == "gth":
        logx = gth_log_stationary(np.ascontiguousarray(chain.matrix, dtype=np.float64))
        if not np.all(np.isfinite(logx)):
            raise SingularSystemError("state reduction broke down")
        top = float(np.max(logx))
        log_pi = logx - (top + math.log(math.fsum(np.exp(logx - top))))
    elif method == "bordered":
        log_pi = _bordered(chain)
    else:
        raise ValueError(f"unknown stationary method {method!r}")
    pi = np.exp(log_pi)
    q = chain.matrix
    if chain.is_discrete:
        residual = float(np.max(np.abs(pi @ q - pi)))
    else:
        residual = float(np.max(np.abs(pi @ q)))
    scale = max(1.0, float(np.max(np.abs(q).sum(axis=1))))
    if residual > tol * scale:
        raise SingularSystemError(
            f"stationary residual {residual:.3e} exceeds {tol:.1e} x {scale:.3e}")
    return StationaryDistribution(pi, residual, log_pi)


def _jump_matrix(chain: MarkovChain) -> np.ndarray:
    q = chain.exit_rates
    zero = np.flatnonzero(q <= 0)
    if zero.size:
        raise AbsorbingStateError(f"states {zero.tolist()} have zero exit rate")
    p = chain.matrix / q[:, None]
    np.fill_diagonal(p, 0.0)
    return p


def jump_chain(chain: MarkovChain) -> MarkovChain:
    """Embedded jump chain ``P_ij = q_ij / q_i`` (i != j) of a continuous chain.

    The result may be periodic (every two-state jump chain is); the usual
    :class:`PeriodicWarning` is suppressed here since that is expected.
    """
    if chain.is_discrete:
        raise TypeError("jump_chain expects a continuous-time chain")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PeriodicWarning)
        return MarkovChain(_jump_matrix(chain), ChainKind.DISCRETE, chain.labels,
                           max(chain.tol, 1e-12))
