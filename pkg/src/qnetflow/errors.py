"""Exception types shared across the package."""

from __future__ import annotations


class QNetError(Exception):
    """Base class for all package errors."""


class NonInvertible(QNetError, ArithmeticError):
    """A ring element or matrix has (numerically) zero determinant."""


class DegenerateCoupling(QNetError):
    """Column elimination stalled on a nonzero zero-divisor pivot."""


class AmbiguousPairing(QNetError):
    """Doubled-form eigenvalues cannot be grouped into unique mode pairs."""


class SingularAt(QNetError, ArithmeticError):
    """A transfer map could not be evaluated at the requested frequency."""

    def __init__(self, s, detail: str = ""):
        self.s = s
        msg = f"singular evaluation at s={s!r}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class Unsupported(QNetError):
    """Operation is not defined for this variant (e.g. time samples of a delta kernel)."""


class NotPassive(QNetError):
    """Static component fails the flat-unitary / unitary checks."""


class UnstableSimulation(QNetError):
    """Time-domain state blew up during integration."""


class InsufficientDecay(QNetError):
    """Response has not decayed within the simulation horizon."""
