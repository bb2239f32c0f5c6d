"""Exception types shared across the package."""

from __future__ import annotations

from dataclasses import dataclass


class KemenyError(Exception):
    """Base class for all errors raised by this package."""


@dataclass(frozen=True)
class Violation:
    """One violated chain invariant.

    ``code`` is one of ``not_square``, ``empty``, ``non_finite``,
    ``negative_entry``, ``entry_out_of_range``, ``positive_diagonal``,
    ``row_sum`` or ``not_irreducible``.
    """

    code: str
    message: str
    row: int | None = None
    column: int | None = None
    deviation: float | None = None
    component: tuple[int, ...] | None = None

    def to_dict(self) -> dict:
        out = {"code": self.code, "message": self.message}
        for name in ("row", "column", "deviation"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        if self.component is not None:
            out["component"] = list(self.component)
        return out


class InvalidChainError(KemenyError, ValueError):
    """Raised by chain validation; carries every violated invariant."""

    def __init__(self, violations: list[Violation]):
        self.violations = list(violations)
        lines = "; ".join(v.message for v in self.violations[:5])
        more = len(self.violations) - 5
        if more > 0:
            lines += f"; ... ({more} more)"
        super().__init__(f"invalid Markov chain: {lines}")


class SingularSystemError(KemenyError, ArithmeticError):
    """A linear solve failed or produced a non-finite / non-positive answer."""


class AbsorbingStateError(KemenyError, ValueError):
    """A continuous-time chain has a state with zero total outflow rate."""


class ConstancyViolation(KemenyError, ArithmeticError):
    """Per-start Kemeny sums disagree beyond tolerance (numerical breakdown)."""

    def __init__(self, spread: float, tol: float):
        self.spread = spread
        self.tol = tol
        super().__init__(f"per-start spread {spread:.3e} exceeds tolerance {tol:.3e}")


class PeriodicChainError(KemenyError, ValueError):
    """A renewal-limit estimator was asked to run on a periodic chain."""


class NotPositiveRecurrentError(KemenyError, ValueError):
    """The normalising series of a birth-and-death process diverges."""


class PreconditionUnmetError(KemenyError, ValueError):
    """An operation's precondition does not hold (e.g. an undecided series)."""


class InvalidDesignError(KemenyError, ValueError):
    """Nonpositive f or birth rate supplied to the rate designer."""


class InvalidSpecError(KemenyError, ValueError):
    """A birth-and-death specification is malformed or violates its invariants."""


class RateTableExhausted(InvalidSpecError):
    """A table rule with ``extend='error'`` was asked for an index past its end."""


class PeriodicWarning(UserWarning):
    """Issued when a discrete chain is periodic (accepted, but flagged)."""
