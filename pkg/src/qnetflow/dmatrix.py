"""Matrices over D, held in their doubled complex form.

An ``r x c`` D-matrix is stored as a ``2r x 2c`` complex array whose 2x2 blocks
are the entries.  Matrices built from ring elements keep the D structure
(bottom row of each block is the conjugate swap of the top row).  Transfer
function values at complex ``s`` generally do not, so the class holds any
doubled array; :meth:`DMatrix.is_real` tells the two apart.

The flat conjugate is ``J^-1 X^dagger J`` with ``J = diag(i, ..., i)``; on the
doubled form that is a conjugate transpose with a checkerboard sign.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .dring import INV_RTOL, DNum, mode_labels
from .errors import AmbiguousPairing, DegenerateCoupling, NonInvertible, SingularAt

COND_LIMIT = 1e12


def _checker(p: int, q: int) -> np.ndarray:
    return (-1.0) ** np.add.outer(np.arange(p), np.arange(q))


def flat_array(x: np.ndarray) -> np.ndarray:
    """Flat conjugate of a (possibly batched) doubled array ``(..., 2r, 2c)``."""
    xt = np.conj(np.swapaxes(x, -1, -2))
    return xt * _checker(xt.shape[-2], xt.shape[-1])


def project_array(x: np.ndarray) -> np.ndarray:
    """Nearest D-structured array (average of a block and its conjugate swap)."""
    al = 0.5 * (x[..., 0::2, 0::2] + np.conj(x[..., 1::2, 1::2]))
    be = 0.5 * (x[..., 0::2, 1::2] + np.conj(x[..., 1::2, 0::2]))
    return _interleave(al, be)


def _interleave(alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    shape = alpha.shape[:-2] + (2 * alpha.shape[-2], 2 * alpha.shape[-1])
    x = np.empty(shape, dtype=complex)
    x[..., 0::2, 0::2] = alpha
    x[..., 0::2, 1::2] = beta
    x[..., 1::2, 0::2] = np.conj(beta)
    x[..., 1::2, 1::2] = np.conj(alpha)
    return x


def doubled_identity(n: int) -> np.ndarray:
    return np.eye(2 * n, dtype=complex)


def checked_inv(x: np.ndarray, s=None) -> np.ndarray:
    """Batched inverse of doubled arrays with the condition-number guard."""
    cond = np.linalg.cond(x)
    bad = ~(cond < COND_LIMIT)
    if np.any(bad):
        where = s
        if s is not None and np.ndim(s) > 0:
            where = np.asarray(s)[np.nonzero(np.atleast_1d(bad))[0][0]]
        raise SingularAt(where, f"condition number {np.max(cond):.3g}")
    return np.linalg.inv(x)


class DMatrix:
    """Immutable matrix over D."""

    __slots__ = ("_x",)

    def __init__(self, doubled):
        x = np.array(doubled, dtype=complex)
        if x.ndim != 2 or x.shape[0] % 2 or x.shape[1] % 2:
            raise ValueError(f"doubled form must be 2-D with even sides, got {x.shape}")
        x.flags.writeable = False
        self._x = x

    # -- construction -------------------------------------------------
    @classmethod
    def from_parts(cls, alpha, beta=None):
        alpha = np.atleast_2d(np.asarray(alpha, dtype=complex))
        beta = np.zeros_like(alpha) if beta is None else np.atleast_2d(np.asarray(beta, dtype=complex))
        if alpha.shape != beta.shape:
            raise ValueError(f"alpha {alpha.shape} and beta {beta.shape} differ in shape")
        return cls(_interleave(alpha, beta))

    @classmethod
    def from_entries(cls, rows: Sequence[Sequence[DNum]]):
        rows = [list(r) for r in rows]
        if not rows or not rows[0] or any(len(r) != len(rows[0]) for r in rows):
            raise ValueError("entries must form a non-empty rectangular grid")
        alpha = np.array([[p.alpha for p in r] for r in rows])
        beta = np.array([[p.beta for p in r] for r in rows])
        return cls.from_parts(alpha, beta)

    @classmethod
    def from_blockform(cls, a_minus, a_plus):
        """Build from the ``[[A-, A+], [A+*, A-*]]`` ordering (all modes, then all adjoints)."""
        a_minus = np.atleast_2d(np.asarray(a_minus, dtype=complex))
        a_plus = np.atleast_2d(np.asarray(a_plus, dtype=complex))
        if a_minus.shape != a_plus.shape or a_minus.shape[0] != a_minus.shape[1]:
            raise ValueError(f"A- {a_minus.shape} and A+ {a_plus.shape} must be equal square shapes")
        return cls.from_parts(a_minus, a_plus)

    @classmethod
    def scalar(cls, p: DNum, n: int = 1):
        return cls.from_parts(p.alpha * np.eye(n), p.beta * np.eye(n))

    @classmethod
    def identity(cls, n: int):
        return cls(doubled_identity(n))

    @classmethod
    def zeros(cls, rows: int, cols: int):
        return cls(np.zeros((2 * rows, 2 * cols), dtype=complex))

    @classmethod
    def block(cls, grid: Sequence[Sequence[DMatrix]]):
        return cls(np.block([[m.doubled for m in row] for row in grid]))

    # -- views ----------------------------------------------------------
    @property
    def doubled(self) -> np.ndarray:
        return self._x

    @property
    def shape(self) -> tuple[int, int]:
        return self._x.shape[0] // 2, self._x.shape[1] // 2

    @property
    def rows(self) -> int:
        return self.shape[0]

    @property
    def cols(self) -> int:
        return self.shape[1]

    @property
    def alpha(self) -> np.ndarray:
        """Top-left entries of every block."""
        return self._x[0::2, 0::2].copy()

    @property
    def beta(self) -> np.ndarray:
        """Top-right entries of every block."""
        return self._x[0::2, 1::2].copy()

    def to_blockform(self) -> tuple[np.ndarray, np.ndarray]:
        return self.alpha, self.beta

    def is_real(self, atol: float = 1e-12) -> bool:
        """True when every block has the ``[[a, b], [b*, a*]]`` structure."""
        x = self._x
        scale = max(1.0, float(np.abs(x).max(initial=0.0)))
        return bool(
            np.all(np.abs(x[1::2, 1::2] - np.conj(x[0::2, 0::2])) <= atol * scale)
            and np.all(np.abs(x[1::2, 0::2] - np.conj(x[0::2, 1::2])) <= atol * scale)
        )

    def block_at(self, j: int, k: int) -> np.ndarray:
        return self._x[2 * j : 2 * j + 2, 2 * k : 2 * k + 2].copy()

    def entry(self, j: int, k: int) -> DNum:
        return DNum.from_matrix(self.block_at(j, k), atol=1e-9)

    def entries(self) -> list[list[DNum]]:
        r, c = self.shape
        return [[self.entry(j, k) for k in range(c)] for j in range(r)]

    def project(self) -> DMatrix:
        return DMatrix(project_array(self._x))

    def norm(self) -> float:
        return float(np.linalg.norm(self._x))

    def isclose(self, other: DMatrix, atol: float = 1e-12) -> bool:
        return self.shape == other.shape and bool(np.all(np.abs(self._x - other._x) <= atol))

    # -- algebra --------------------------------------------------------
    def flat(self) -> DMatrix:
        return DMatrix(flat_array(self._x))

    def __add__(self, other):
        if isinstance(other, DMatrix):
            self._same_shape(other)
            return DMatrix(self._x + other._x)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, DMatrix):
            self._same_shape(other)
            return DMatrix(self._x - other._x)
        return NotImplemented

    def __neg__(self):
        return DMatrix(-self._x)

    def __matmul__(self, other):
        if isinstance(other, DMatrix):
            if self.cols != other.rows:
                raise ValueError(f"cannot multiply {self.shape} by {other.shape}")
            return DMatrix(self._x @ other._x)
        return NotImplemented

    def __mul__(self, other):
        # complex scalars act as s*e, i.e. multiples of the doubled identity
        if isinstance(other, (int, float, complex, np.number)):
            return DMatrix(complex(other) * self._x)
        if isinstance(other, DNum):
            return self @ DMatrix.scalar(other, self.cols)
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            return DMatrix(complex(other) * self._x)
        if isinstance(other, DNum):
            return DMatrix.scalar(other, self.rows) @ self
        return NotImplemented

    def inv(self) -> DMatrix:
        if self.rows != self.cols:
            raise ValueError(f"cannot invert non-square {self.shape}")
        try:
            return DMatrix(checked_inv(self._x))
        except SingularAt as exc:
            raise NonInvertible(str(exc)) from None

    def _same_shape(self, other: DMatrix):
        if self.shape != other.shape:
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")

    def __eq__(self, other):
        if not isinstance(other, DMatrix):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self._x, other._x))

    __hash__ = None

    def to_literal(self) -> str:
        rows = self.entries()
        return "[" + " ; ".join(",".join(p.to_literal() for p in r) for r in rows) + "]"

    def __repr__(self) -> str:
        if self.is_real():
            return f"DMatrix({self.to_literal()})"
        return f"DMatrix(doubled={self._x!r})"


class Generator(DMatrix):
    """Square skew flat-Hermitian D-matrix, i.e. ``P.flat() == -P``."""

    __slots__ = ()

    def __init__(self, doubled, tol: float = 1e-12):
        super().__init__(doubled)
        if self.rows != self.cols:
            raise ValueError(f"generator must be square, got {self.shape}")
        if not is_skew_flat_hermitian(self, tol):
            raise ValueError("generator is not skew flat-Hermitian")

    @property
    def n(self) -> int:
        return self.rows


def is_skew_flat_hermitian(a: DMatrix, tol: float = 1e-12) -> bool:
    if a.rows != a.cols:
        raise ValueError(f"expected a square matrix, got {a.shape}")
    return (a.flat() + a).norm() <= tol * max(a.norm(), np.finfo(float).tiny)


def is_flat_hermitian(a: DMatrix, tol: float = 1e-12) -> bool:
    if a.rows != a.cols:
        raise ValueError(f"expected a square matrix, got {a.shape}")
    return (a.flat() - a).norm() <= tol * max(a.norm(), np.finfo(float).tiny)


def is_flat_unitary(a: DMatrix, tol: float = 1e-10) -> bool:
    if a.rows != a.cols:
        raise ValueError(f"expected a square matrix, got {a.shape}")
    return (a.flat() @ a - DMatrix.identity(a.rows)).norm() <= tol


def is_unitary(a: DMatrix, tol: float = 1e-10) -> bool:
    """Unitary in the ordinary complex sense (on the doubled form)."""
    x = a.doubled
    return x.shape[0] == x.shape[1] and float(np.linalg.norm(x.conj().T @ x - np.eye(x.shape[0]))) <= tol


def expm(a: DMatrix, t: float | complex = 1.0) -> DMatrix:
    """``exp(a t)`` via scaling-and-squaring Pade on the doubled form."""
    x = scipy.linalg.expm(t * a.doubled)
    if np.isrealobj(t) and a.is_real():
        x = project_array(x)
    return DMatrix(x)


# -- column rank / decomposition ----------------------------------------------------


def column_decompose(c: DMatrix, tol: float = 1e-10) -> tuple[DMatrix, DMatrix, int]:
    """Factor ``C = E @ D.flat()`` with ``k`` = column rank of ``C`` over D.

    Gaussian elimination by right column operations, pivoting on the entry of
    largest ``|det|``.  Returns ``(E, D, k)`` with ``E`` of shape ``m x k`` and
    ``D`` of shape ``n x k`` (empty when ``k == 0``).
    """
    if not c.is_real(1e-9):
        raise ValueError("column decomposition needs a D-structured matrix")
    m, n = c.shape
    r_ = c.entries()
    w = [[DNum(1.0) if i == j else DNum() for j in range(n)] for i in range(n)]
    zero_tol = tol * max(1.0, c.norm())
    used: set[int] = set()
    k = 0
    for r in range(min(m, n)):
        cand = [(i, j) for i in range(m) if i not in used for j in range(r, n)]
        if not cand or max(r_[i][j].norm() for i, j in cand) <= zero_tol:
            break
        i, j = max(cand, key=lambda ij: (abs(r_[ij[0]][ij[1]].det()), -ij[1], -ij[0]))
        piv = r_[i][j]
        if not piv.is_invertible(INV_RTOL):
            raise DegenerateCoupling(
                f"remaining block is nonzero but every candidate pivot is a zero divisor (best {piv})"
            )
        for row in r_:
            row[r], row[j] = row[j], row[r]
        w[r], w[j] = w[j], w[r]
        p_inv = r_[i][r].inv()
        for col in range(r + 1, n):
            coef = p_inv * r_[i][col]
            if coef.norm() == 0.0:
                continue
            for row in r_:
                row[col] = row[col] - row[r] * coef
            w[r] = [w[r][q] + coef * w[col][q] for q in range(n)]
        used.add(i)
        k = r + 1
    if k == 0:
        return DMatrix.zeros(m, 0) if m else DMatrix.zeros(0, 0), DMatrix.zeros(n, 0), 0
    e_mat = DMatrix.from_entries([row[:k] for row in r_])
    d_flat = DMatrix.from_entries(w[:k])
    return e_mat, d_flat.flat(), k


# -- mode classification ------------------------------------------------------------


@dataclass(frozen=True)
class ModeInvariant:
    a: float
    C: float
    labels: tuple[str, str]


def _pair_eigenvalues(lam: np.ndarray, tol: float) -> list[tuple[complex, complex]]:
    cplx = [z for z in lam if abs(z.imag) > tol]
    real = sorted(z.real for z in lam if abs(z.imag) <= tol)
    upper = sorted((z for z in cplx if z.imag > 0), key=lambda z: (z.real, z.imag))
    lower = [z for z in cplx if z.imag < 0]
    if len(upper) != len(lower):
        raise AmbiguousPairing("complex eigenvalues are not closed under conjugation")
    pairs = []
    for z in upper:
        idx = int(np.argmin([abs(w - np.conj(z)) for w in lower]))
        if abs(lower[idx] - np.conj(z)) > 1e3 * tol:
            raise AmbiguousPairing(f"no conjugate partner for eigenvalue {z}")
        pairs.append((z, lower.pop(idx)))
    if len(real) % 2:
        raise AmbiguousPairing("odd number of real eigenvalues")
    nested = [(real[i], real[-1 - i]) for i in range(len(real) // 2)]
    means = [0.5 * (x + y) for x, y in nested]
    if len(nested) > 1 and max(means) - min(means) > 1e3 * tol:
        raise AmbiguousPairing(
            "real eigenvalues admit several pairings with different means; mode classes are not unique"
        )
    pairs.extend((complex(x), complex(y)) for x, y in nested)
    return pairs


def classify_modes(p: DMatrix, tol: float = 1e-9) -> list[ModeInvariant]:
    """Per-mode right-eigenvalue invariants ``(a, C)`` of a square D-matrix.

    The doubled spectrum is grouped into pairs ``(l1, l2)``; each pair gives
    ``a = Re (l1 + l2) / 2`` and ``C = Re ((l1 - l2) / 2)^2``.  Complex
    eigenvalues pair with their conjugates.  Real eigenvalues are paired
    symmetrically about a common centre, which is the only canonical choice;
    if no common centre exists the classes are ambiguous.
    """
    if p.rows != p.cols:
        raise ValueError(f"expected a square matrix, got {p.shape}")
    lam = np.linalg.eigvals(p.doubled)
    scale = max(1.0, float(np.max(np.abs(lam), initial=0.0)))
    pairs = _pair_eigenvalues(lam, tol * scale)
    out = []
    for l1, l2 in pairs:
        a = float(np.real(0.5 * (l1 + l2)))
        C = float(np.real((0.5 * (l1 - l2)) ** 2))
        out.append(ModeInvariant(a, C, mode_labels(a, C, tol * scale)))
    return sorted(out, key=lambda m: (m.a, m.C))
