"""Arithmetic in the ring D of 2x2 complex matrices ``[[alpha, beta], [beta*, alpha*]]``.

An element is stored as its real coordinates ``(a, b, c, d)`` in the basis
``e, i, j, k`` where::

    e = D(1, 0)    i = D(1j, 0)    j = D(0, 1)    k = D(0, 1j)

so that ``alpha = a + ib`` and ``beta = c + id``.  The basis obeys
``-i*i = j*j = k*k = e``, ``i*j*k = e`` and pairwise anticommutation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonInvertible

INV_RTOL = 1e-12


@dataclass(frozen=True)
class DNum:
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    d: float = 0.0

    def __post_init__(self):
        for name in ("a", "b", "c", "d"):
            object.__setattr__(self, name, float(getattr(self, name)))

    # -- construction -------------------------------------------------
    @classmethod
    def from_complex(cls, alpha: complex, beta: complex = 0.0) -> DNum:
        alpha = complex(alpha)
        beta = complex(beta)
        return cls(alpha.real, alpha.imag, beta.real, beta.imag)

    @classmethod
    def from_matrix(cls, m, *, atol: float = 1e-12) -> DNum:
        """Inverse of :attr:`matrix`; raises if ``m`` lacks the D structure."""
        m = np.asarray(m, dtype=complex)
        if m.shape != (2, 2):
            raise ValueError(f"expected a 2x2 matrix, got shape {m.shape}")
        scale = max(1.0, float(np.abs(m).max()))
        if abs(m[1, 1] - np.conj(m[0, 0])) > atol * scale or abs(m[1, 0] - np.conj(m[0, 1])) > atol * scale:
            raise ValueError("matrix is not of the form [[alpha, beta], [beta*, alpha*]]")
        return cls.from_complex(m[0, 0], m[0, 1])

    # -- views ----------------------------------------------------------
    @property
    def alpha(self) -> complex:
        return complex(self.a, self.b)

    @property
    def beta(self) -> complex:
        return complex(self.c, self.d)

    @property
    def matrix(self) -> np.ndarray:
        al, be = self.alpha, self.beta
        return np.array([[al, be], [be.conjugate(), al.conjugate()]])

    @property
    def coeffs(self) -> tuple[float, float, float, float]:
        return (self.a, self.b, self.c, self.d)

    def det(self) -> float:
        return self.a**2 + self.b**2 - self.c**2 - self.d**2

    def norm(self) -> float:
        """Frobenius norm of the 2x2 matrix form."""
        return math.sqrt(2.0 * (self.a**2 + self.b**2 + self.c**2 + self.d**2))

    # -- algebra --------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, DNum):
            return DNum(self.a + other.a, self.b + other.b, self.c + other.c, self.d + other.d)
        if isinstance(other, (int, float)):
            return DNum(self.a + other, self.b, self.c, self.d)
        return NotImplemented

    __radd__ = __add__

    def __neg__(self):
        return DNum(-self.a, -self.b, -self.c, -self.d)

    def __sub__(self, other):
        if isinstance(other, (DNum, int, float)):
            return self + (-other)
        return NotImplemented

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, DNum):
            a1, b1 = self.alpha, self.beta
            a2, b2 = other.alpha, other.beta
            return DNum.from_complex(a1 * a2 + b1 * b2.conjugate(), a1 * b2 + b1 * a2.conjugate())
        if isinstance(other, (int, float)):
            return DNum(self.a * other, self.b * other, self.c * other, self.d * other)
        return NotImplemented

    def __rmul__(self, other):
        # real scalars are central
        if isinstance(other, (int, float)):
            return self * other
        return NotImplemented

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return DNum(self.a / other, self.b / other, self.c / other, self.d / other)
        if isinstance(other, DNum):
            return self * other.inv()
        return NotImplemented

    def flat(self) -> DNum:
        """Flat conjugate ``i^-1 p^dagger i``: negates the i, j, k coordinates."""
        return DNum(self.a, -self.b, -self.c, -self.d)

    def is_invertible(self, rtol: float = INV_RTOL) -> bool:
        return abs(self.det()) > rtol * max(1.0, self.norm() ** 2)

    def inv(self, rtol: float = INV_RTOL) -> DNum:
        det = self.det()
        if not abs(det) > rtol * max(1.0, self.norm() ** 2):
            raise NonInvertible(f"{self!r} is a zero divisor (|alpha|^2 - |beta|^2 = {det:g})")
        return self.flat() / det

    def classify(self) -> tuple[float, float]:
        """Invariants ``(a, C)`` with ``C = -b^2 + c^2 + d^2``.

        Both are unchanged under ``p -> u.flat() * p * u`` for unimodular ``u``;
        the 2x2 eigenvalues are ``a +/- sqrt(C)``.
        """
        return self.a, -self.b**2 + self.c**2 + self.d**2

    def isclose(self, other: DNum, atol: float = 1e-12) -> bool:
        return all(abs(x - y) <= atol for x, y in zip(self.coeffs, other.coeffs))

    def to_literal(self) -> str:
        return "d({})".format(",".join(repr(x) for x in self.coeffs))

    def __str__(self) -> str:
        return f"{self.a:g}e{self.b:+g}i{self.c:+g}j{self.d:+g}k"


E = DNum(1.0, 0.0, 0.0, 0.0)
I = DNum(0.0, 1.0, 0.0, 0.0)
J = DNum(0.0, 0.0, 1.0, 0.0)
K = DNum(0.0, 0.0, 0.0, 1.0)
ZERO = DNum()


def mode_labels(a: float, C: float, tol: float = 1e-10) -> tuple[str, str]:
    """Physical reading of the invariants: medium type and squeezing."""
    if a > tol:
        medium = "gain"
    elif a < -tol:
        medium = "lossy"
    else:
        medium = "lossless"
    return medium, ("squeezed" if C > tol else "non-squeezed")
