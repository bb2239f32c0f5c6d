"""Index rules ``n -> value`` used for birth rates, death rates and designed f.

Every rule evaluates in log space over index ranges, which keeps rates such as
``2**n`` usable far past the point where they overflow a double. Rules that
know a closed form for their tail sums expose it as an enclosure
``(lo, hi)`` of ``sum_{j > n} value(j)``; these enclosures are what lets an
algebraically convergent series be declared converged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidSpecError, RateTableExhausted


class Rule:
    """Base class. Subclasses implement :meth:`log_values` and :meth:`to_dict`."""

    def log_values(self, start: int, stop: int) -> np.ndarray:
        raise NotImplementedError

    def values(self, start: int, stop: int) -> np.ndarray:
        return np.exp(self.log_values(start, stop))

    def __call__(self, n: int) -> float:
        return float(np.exp(self.log_values(n, n + 1)[0]))

    def tail(self, n):
        """Enclosure of ``sum_{j>n} value(j)``, or ``None`` if unknown/divergent."""
        return None

    def reciprocal_tail(self, n):
        """Enclosure of ``sum_{j>n} 1/value(j)``, or ``None``."""
        return None

    @property
    def reciprocal_diverges(self) -> bool:
        """True when ``sum 1/value(j)`` is known to diverge."""
        return False

    def to_dict(self) -> dict:
        raise NotImplementedError


def _power_tail(n, exponent: float, scale: float):
    """Enclosure of ``sum_{j>n} scale * j**exponent`` for ``exponent < -1``.

    The summand is convex and decreasing, so the trapezoid rule overestimates
    and the midpoint rule underestimates its integral on each unit cell.
    """
    n = np.asarray(n, dtype=np.float64)
    s = -exponent - 1.0
    lo = scale * ((n + 1.0) ** (-s) / s + 0.5 * (n + 1.0) ** exponent)
    hi = scale * (n + 0.5) ** (-s) / s
    return lo, hi


@dataclass(frozen=True)
class Const(Rule):
    value: float

    def __post_init__(self):
        if not self.value > 0 or not math.isfinite(self.value):
            raise InvalidSpecError(f"constant rule needs a positive finite value, got {self.value!r}")

    def log_values(self, start, stop):
        return np.full(max(stop - start, 0), math.log(self.value))

    @property
    def reciprocal_diverges(self):
        return True

    def to_dict(self):
        return {"rule": "const", "value": self.value}


@dataclass(frozen=True)
class Pow(Rule):
    """``scale * base**n``."""

    base: float
    scale: float = 1.0

    def __post_init__(self):
        if not (self.base > 0 and self.scale > 0):
            raise InvalidSpecError("pow rule needs positive base and scale")

    def log_values(self, start, stop):
        n = np.arange(start, stop, dtype=np.float64)
        return math.log(self.scale) + n * math.log(self.base)

    def tail(self, n):
        if self.base >= 1:
            return None
        n = np.asarray(n, dtype=np.float64)
        t = self.scale * np.exp((n + 1) * math.log(self.base)) / (1 - self.base)
        return t, t

    def reciprocal_tail(self, n):
        if self.base <= 1:
            return None
        n = np.asarray(n, dtype=np.float64)
        t = np.exp(-(n + 1) * math.log(self.base)) / self.scale / (1 - 1 / self.base)
        return t, t

    @property
    def reciprocal_diverges(self):
        return self.base <= 1

    def to_dict(self):
        out = {"rule": "pow", "base": self.base}
        if self.scale != 1.0:
            out["scale"] = self.scale
        return out


@dataclass(frozen=True)
class Power(Rule):
    """``scale * n**exponent`` for ``n >= 1``; ``at_zero`` overrides ``n = 0``."""

    exponent: float
    scale: float = 1.0
    at_zero: float | None = None

    def __post_init__(self):
        if not self.scale > 0:
            raise InvalidSpecError("power rule needs a positive scale")

    def log_values(self, start, stop):
        n = np.arange(start, stop, dtype=np.float64)
        with np.errstate(divide="ignore"):
            out = math.log(self.scale) + self.exponent * np.log(n)
        if start == 0 and stop > 0:
            if self.at_zero is not None:
                out[0] = math.log(self.at_zero) if self.at_zero > 0 else -np.inf
            elif self.exponent == 0:
                out[0] = math.log(self.scale)
            else:
                out[0] = -np.inf if self.exponent > 0 else np.inf
        return out

    def tail(self, n):
        if self.exponent >= -1:
            return None
        return _power_tail(n, self.exponent, self.scale)

    def reciprocal_tail(self, n):
        if self.exponent <= 1:
            return None
        return _power_tail(n, -self.exponent, 1.0 / self.scale)

    @property
    def reciprocal_diverges(self):
        return self.exponent <= 1

    def to_dict(self):
        out = {"rule": "power", "exponent": self.exponent}
        if self.scale != 1.0:
            out["scale"] = self.scale
        if self.at_zero is not None:
            out["at_zero"] = self.at_zero
        return out


@dataclass(frozen=True)
class InverseSquare(Power):
    """``1/n**2``, serialised by name."""

    exponent: float = -2.0

    def to_dict(self):
        return {"rule": "inverse_square"}


@dataclass(frozen=True)
class Table(Rule):
    """Explicit values for ``n = offset, offset+1, ...``.

    ``extend='last'`` repeats the final value forever; ``extend='error'``
    raises :class:`RateTableExhausted` past the end.
    """

    table: tuple[float, ...]
    extend: str = "error"
    offset: int = 0

    def __post_init__(self):
        object.__setattr__(self, "table", tuple(float(v) for v in self.table))
        if self.extend not in ("last", "error"):
            raise InvalidSpecError(f"extend must be 'last' or 'error', got {self.extend!r}")
        if not self.table:
            raise InvalidSpecError("table rule needs at least one value")

    def values(self, start, stop):
        if stop <= start:
            return np.empty(0)
        idx = np.arange(start, stop) - self.offset
        if idx[0] < 0:
            raise InvalidSpecError(f"table starts at index {self.offset}, asked for {start}")
        arr = np.asarray(self.table)
        if idx[-1] >= arr.size:
            if self.extend == "error":
                raise RateTableExhausted(
                    f"rate table has {arr.size} entries; index {stop - 1} requested")
            idx = np.minimum(idx, arr.size - 1)
        return arr[idx]

    def log_values(self, start, stop):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(self.values(start, stop))

    @property
    def reciprocal_diverges(self):
        return self.extend == "last"

    def to_dict(self):
        return {"rule": "table", "values": list(self.table), "extend": self.extend}


@dataclass(frozen=True)
class Shifted(Rule):
    """``factor * base(n - 1)``; the sped-up M/M/1 death rule."""

    base: Rule
    factor: float

    def log_values(self, start, stop):
        if stop <= start:
            return np.empty(0)
        out = np.empty(stop - start)
        lo = max(start, 1)
        if start == 0:
            out[0] = -np.inf
        out[lo - start:] = math.log(self.factor) + self.base.log_values(lo - 1, stop - 1)
        return out

    def reciprocal_tail(self, n):
        t = self.base.reciprocal_tail(np.asarray(n) - 1)
        if t is None:
            return None
        return t[0] / self.factor, t[1] / self.factor

    @property
    def reciprocal_diverges(self):
        return self.base.reciprocal_diverges

    def to_dict(self):
        raise TypeError("derived rule; serialise the owning family instead")


@dataclass(frozen=True)
class Designed(Rule):
    """``mu_j = (lambda_{j-1} f_{j-1} + 1) / f_j`` with ``f_0 = 0``."""

    f: Rule
    birth: Rule

    def log_values(self, start, stop):
        if stop <= start:
            return np.empty(0)
        out = np.empty(stop - start)
        lo = max(start, 1)
        if start == 0:
            out[0] = -np.inf
        if lo == 1:  # f_0 = 0 by convention and is never read from the rule
            log_f = np.concatenate([[-np.inf], self.f.log_values(1, stop)])
        else:
            log_f = self.f.log_values(lo - 1, stop)
        log_lam = self.birth.log_values(lo - 1, stop - 1)
        out[lo - start:] = np.logaddexp(log_lam + log_f[:-1], 0.0) - log_f[1:]
        return out

    def to_dict(self):
        raise TypeError("derived rule; serialise the owning family instead")


def f_rule_from_dict(doc) -> Rule:
    """Like :func:`rule_from_dict`, but explicit values are ``f_1, f_2, ...``."""
    rule = rule_from_dict(doc)
    if isinstance(rule, Table):
        return Table(rule.table, rule.extend, offset=1)
    return rule


def rule_from_dict(doc) -> Rule:
    """Parse a rule config.

    Accepted forms: a bare number (constant), ``{"rule": "const", "value": c}``,
    ``{"rule": "pow", "base": b, "scale"?: s}``, ``{"rule": "power",
    "exponent": p, "scale"?: s}``, ``{"rule": "inverse_square"}`` and
    ``{"rule": "table"?, "values": [...], "extend": "last"|"error"}``.
    """
    if isinstance(doc, (int, float)) and not isinstance(doc, bool):
        return Const(float(doc))
    if isinstance(doc, list):
        return Table(tuple(doc), "error")
    if not isinstance(doc, dict):
        raise InvalidSpecError(f"cannot parse rule {doc!r}")
    kind = doc.get("rule", "table" if "values" in doc else None)
    try:
        if kind == "const":
            return Const(float(doc["value"]))
        if kind == "pow":
            return Pow(float(doc["base"]), float(doc.get("scale", 1.0)))
        if kind == "power":
            z = doc.get("at_zero")
            return Power(float(doc["exponent"]), float(doc.get("scale", 1.0)),
                         None if z is None else float(z))
        if kind == "inverse_square":
            return InverseSquare()
        if kind == "table":
            return Table(tuple(doc["values"]), doc.get("extend", "error"))
    except KeyError as exc:
        raise InvalidSpecError(f"rule {kind!r} is missing field {exc}") from None
    raise InvalidSpecError(f"unknown rule {kind!r}")
