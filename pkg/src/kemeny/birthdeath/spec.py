"""Birth-and-death specifications and the built-in families."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..chain import ChainKind
from ..errors import InvalidDesignError, InvalidSpecError, RateTableExhausted
from .rules import (
    Const,
    Designed,
    InverseSquare,
    Power,
    Rule,
    Shifted,
    Table,
    f_rule_from_dict,
    rule_from_dict,
)

EAGER_CHECK = 1000  # indices validated at construction; later ones lazily


@dataclass(frozen=True, eq=False)
class BirthDeathSpec:
    """Rates of a birth-and-death process on ``{0, 1, 2, ...}``.

    ``birth(n)`` is ``lambda_n`` (``n >= 0``) and ``death(n)`` is ``mu_n``
    (``n >= 1``); for discrete processes they are one-step probabilities.

    The hook fields carry closed-form knowledge a family has about its series:
    ``theta_divergent`` and ``inv_death_divergent`` are analytic divergence
    proofs, ``beta_divergent`` an analytic proof of null/transient behaviour,
    and the ``*_tail`` callables analytic tail enclosures.
    """

    kind: ChainKind
    family: str
    params: dict
    birth_rule: Rule
    death_rule: Rule
    theta_divergent: str | None = None
    theta_tail: Callable | None = None
    inv_death_divergent: str | None = None
    inv_death_tail: Callable | None = None
    beta_divergent: str | None = None
    beta_tail: Callable | None = None
    analytic_verdict: str | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "kind", ChainKind.parse(self.kind))
        try:
            self.check_rates(0, EAGER_CHECK)
        except RateTableExhausted:
            pass
        if self.kind is ChainKind.DISCRETE:
            object.__setattr__(self, "analytic_verdict", "theta_infinite")
        elif self.analytic_verdict is None:
            if self.theta_divergent or self.inv_death_divergent:
                verdict = "theta_infinite"
            elif self.theta_tail is not None:
                verdict = "theta_finite"
            else:
                verdict = None
            object.__setattr__(self, "analytic_verdict", verdict)

    @property
    def is_discrete(self) -> bool:
        return self.kind is ChainKind.DISCRETE

    def log_birth(self, start: int, stop: int) -> np.ndarray:
        return self.birth_rule.log_values(start, stop)

    def log_death(self, start: int, stop: int) -> np.ndarray:
        """``log mu_n`` over ``[start, stop)``; ``mu_0 = 0``."""
        if stop <= start:
            return np.empty(0)
        if start >= 1:
            return self.death_rule.log_values(start, stop)
        out = np.empty(stop - start)
        out[0] = -np.inf
        out[1:] = self.death_rule.log_values(1, stop)
        return out

    def birth(self, n: int) -> float:
        return float(np.exp(self.log_birth(n, n + 1)[0]))

    def death(self, n: int) -> float:
        return float(np.exp(self.log_death(n, n + 1)[0]))

    def check_rates(self, start: int, stop: int) -> None:
        """Validate rates on ``[start, stop)``; raises :class:`InvalidSpecError`."""
        lb = self.log_birth(start, stop)
        bad = np.flatnonzero(np.isnan(lb) | (lb == -np.inf))
        if bad.size:
            raise InvalidSpecError(f"birth rate must be positive at n={start + int(bad[0])}")
        lo = max(start, 1)
        ld = self.log_death(lo, stop)
        bad = np.flatnonzero(np.isnan(ld) | (ld == -np.inf))
        if bad.size:
            raise InvalidSpecError(f"death rate must be positive at n={lo + int(bad[0])}")
        if self.is_discrete:
            lam = np.exp(lb)
            mu = np.zeros_like(lam)
            if stop > lo:
                mu[lo - start:] = np.exp(ld)
            over = np.flatnonzero(lam + mu > 1 + 1e-12)
            if over.size:
                n = start + int(over[0])
                raise InvalidSpecError(
                    f"discrete process needs lambda_n + mu_n <= 1; fails at n={n}")

    def to_config(self) -> dict:
        return {"family": self.family, "kind": self.kind.value, **self.params}


def mm1(lam: float, mu: float, kind: ChainKind | str = ChainKind.CONTINUOUS) -> BirthDeathSpec:
    """M/M/1 queue. Every term of the theta series equals ``1/(mu - lam)``."""
    return BirthDeathSpec(
        kind, "mm1", {"lambda": lam, "mu": mu}, Const(lam), Const(mu),
        theta_divergent="every term of the theta series equals 1/(mu - lambda)",
        inv_death_divergent="constant death rate",
        beta_divergent=None if lam < mu else "lambda >= mu: beta_n = rho^n does not decay",
        beta_tail=(lambda n: _geometric_tail(n, lam / mu)) if lam < mu else None,
        analytic_verdict="theta_infinite")


def _geometric_tail(n, r):
    t = np.exp((np.asarray(n, dtype=np.float64) + 1) * math.log(r)) / (1 - r)
    return t, t


def sped_up_mm1(rho: float, birth: Rule, kind: ChainKind | str = ChainKind.CONTINUOUS) -> BirthDeathSpec:
    """Sped-up M/M/1: arbitrary ``lambda_n`` and ``mu_n = lambda_{n-1} / rho``.

    With these death rates ``beta_n = rho**n`` exactly.
    """
    if not 0 < rho:
        raise InvalidSpecError("rho must be positive")
    return BirthDeathSpec(
        kind, "sped_up_mm1", {"rho": rho, "lambda": birth.to_dict()},
        birth, Shifted(birth, 1.0 / rho),
        theta_divergent="sum of 1/lambda_k diverges" if birth.reciprocal_diverges else None,
        inv_death_divergent="sum of 1/lambda_k diverges" if birth.reciprocal_diverges else None,
        inv_death_tail=Shifted(birth, 1.0 / rho).reciprocal_tail if not birth.reciprocal_diverges else None,
        beta_divergent=None if rho < 1 else "rho >= 1",
        beta_tail=(lambda n: _geometric_tail(n, rho)) if rho < 1 else None)


def _checkable(rule: Rule, start: int) -> int:
    """End of the eagerly validated index range of ``rule``."""
    if isinstance(rule, Table) and rule.extend == "error":
        return max(start + 1, min(EAGER_CHECK, rule.offset + len(rule.table)))
    return EAGER_CHECK


def design_from_f(f: Rule, birth: Rule, kind: ChainKind | str = ChainKind.CONTINUOUS) -> BirthDeathSpec:
    """Spec whose theta recurrence reproduces ``f`` exactly.

    Death rates are ``mu_j = (lambda_{j-1} f_{j-1} + 1) / f_j`` with ``f_0 = 0``.

    Raises
    ------
    InvalidDesignError
        If some ``f_j`` (``j >= 1``) or ``lambda_j`` is not positive.
    """
    lf = f.log_values(1, _checkable(f, 1))
    lb = birth.log_values(0, _checkable(birth, 0))
    if np.any(~np.isfinite(lf)) or np.any(np.isnan(lb)) or np.any(lb == -np.inf):
        raise InvalidDesignError("designed rates need f_j > 0 (j >= 1) and lambda_j > 0")
    return BirthDeathSpec(
        kind, "designed_f", {"f": f.to_dict(), "lambda": birth.to_dict()},
        birth, Designed(f, birth),
        theta_tail=f.tail if f.tail(np.array([1])) is not None else None,
        analytic_verdict=("theta_finite" if f.tail(np.array([1])) is not None else None))


def power_law(alpha: float, kind: ChainKind | str = ChainKind.CONTINUOUS) -> BirthDeathSpec:
    """``mu_j = j**(1+alpha)``, ``lambda_j = mu_j`` (j >= 1), ``lambda_0 = 1``.

    Then ``beta_n = 1/mu_n`` and ``f_j = j**(-alpha)``, so the theta series
    diverges exactly when ``alpha <= 1`` although ``sum 1/mu_j`` converges.
    """
    if not alpha > 0:
        raise InvalidSpecError("alpha must be positive")
    p = 1.0 + alpha
    death = Power(p)
    return BirthDeathSpec(
        kind, "power_law", {"alpha": alpha}, Power(p, at_zero=1.0), death,
        theta_divergent=(f"f_j = j^-{alpha} is not summable" if alpha <= 1 else None),
        theta_tail=(Power(-alpha).tail if alpha > 1 else None),
        inv_death_tail=death.reciprocal_tail,
        beta_tail=death.reciprocal_tail)


def mm_infinity(lam: float, mu: float, kind: ChainKind | str = ChainKind.CONTINUOUS) -> BirthDeathSpec:
    """M/M/infinity queue: ``mu_n = n mu``; ``sum 1/mu_n`` is harmonic."""
    return BirthDeathSpec(
        kind, "mm_infinity", {"lambda": lam, "mu": mu}, Const(lam), Power(1.0, mu),
        inv_death_divergent="mu_n = n mu: harmonic series")


def table(birth: Table, death: Table, kind: ChainKind | str = ChainKind.CONTINUOUS) -> BirthDeathSpec:
    """Explicit rates; ``death.table[0]`` is ``mu_1``."""
    death = Table(death.table, death.extend, offset=1)
    eventually_const = birth.extend == "last" and death.extend == "last"
    return BirthDeathSpec(
        kind, "table",
        {"lambda": birth.to_dict(), "mu": Table(death.table, death.extend).to_dict()},
        birth, death,
        inv_death_divergent="death rates eventually constant" if death.extend == "last" else None,
        beta_divergent=("eventually constant rates with lambda >= mu"
                        if eventually_const and birth.table[-1] >= death.table[-1] else None))


def spec_from_config(doc: dict) -> BirthDeathSpec:
    """Build a spec from a family config (see the README for the schema)."""
    if not isinstance(doc, dict) or "family" not in doc:
        raise InvalidSpecError("family config needs a 'family' field")
    fam = doc["family"]
    kind = doc.get("kind", "ctmc")
    try:
        kind = ChainKind.parse(kind)
    except ValueError as exc:
        raise InvalidSpecError(str(exc)) from None
    try:
        if fam == "mm1":
            return mm1(float(doc["lambda"]), float(doc["mu"]), kind)
        if fam == "sped_up_mm1":
            return sped_up_mm1(float(doc["rho"]), rule_from_dict(doc["lambda"]), kind)
        if fam == "designed_f":
            return design_from_f(f_rule_from_dict(doc["f"]), rule_from_dict(doc["lambda"]), kind)
        if fam == "power_law":
            return power_law(float(doc["alpha"]), kind)
        if fam == "mm_infinity":
            return mm_infinity(float(doc["lambda"]), float(doc["mu"]), kind)
        if fam == "table":
            b, d = rule_from_dict(doc["lambda"]), rule_from_dict(doc["mu"])
            if not (isinstance(b, Table) and isinstance(d, Table)):
                raise InvalidSpecError("table family needs explicit value arrays")
            return table(b, d, kind)
    except KeyError as exc:
        raise InvalidSpecError(f"family {fam!r} is missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InvalidSpecError):
            raise
        raise InvalidSpecError(f"bad parameter for family {fam!r}: {exc}") from None
    raise InvalidSpecError(f"unknown family {fam!r}")


__all__ = [
    "BirthDeathSpec", "mm1", "sped_up_mm1", "design_from_f", "power_law",
    "mm_infinity", "table", "spec_from_config", "InverseSquare",
]
