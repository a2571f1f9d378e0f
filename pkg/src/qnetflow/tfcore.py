"""s-evaluable transfer maps and bath memory kernels.

A :class:`TransferMap` is a matrix-valued function of the Laplace variable.
Every map evaluates on a batch of ``s`` values at once and returns doubled
arrays of shape ``(N, 2 rows, 2 cols)``; ``G(s)`` for a scalar ``s`` wraps the
result in a :class:`DMatrix`.  Complex ``s`` acts as ``s * e``, so values at
non-real ``s`` are complexified D-matrices (see :mod:`qnetflow.dmatrix`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .dmatrix import (
    DMatrix,
    Generator,
    checked_inv,
    flat_array,
    is_flat_hermitian,
    project_array,
)
from .errors import SingularAt, Unsupported


def _s_batch(s) -> tuple[np.ndarray, bool]:
    arr = np.asarray(s, dtype=complex)
    if arr.ndim == 0:
        return arr.reshape(1), True
    if arr.ndim != 1:
        raise ValueError("s must be a scalar or a 1-D array")
    return arr, False


def _resolvent_solve(a: np.ndarray, rhs: np.ndarray, s: np.ndarray) -> np.ndarray:
    """``(s I - a)^-1 rhs`` for each ``s``; ``rhs`` is ``(2n, q)`` or ``(N, 2n, q)``."""
    m = s[:, None, None] * np.eye(a.shape[0]) - a
    minv = checked_inv(m, s)
    return minv @ rhs


class TransferMap:
    """Base class; subclasses implement ``_eval`` on a 1-D batch of ``s``."""

    shape: tuple[int, int]

    def _eval(self, s: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def evaluate(self, s) -> np.ndarray:
        arr, scalar = _s_batch(s)
        out = self._eval(arr)
        return out[0] if scalar else out

    def __call__(self, s) -> DMatrix:
        arr, scalar = _s_batch(s)
        if not scalar:
            raise TypeError("call with a scalar s; use evaluate() for batches")
        return DMatrix(self._eval(arr)[0])

    # -- composition ----------------------------------------------------
    def __add__(self, other):
        other = as_map(other)
        return Sum(self, other)

    def __radd__(self, other):
        return as_map(other) + self

    def __sub__(self, other):
        return Sum(self, Scaled(as_map(other), -1.0))

    def __rsub__(self, other):
        return as_map(other) - self

    def __neg__(self):
        return Scaled(self, -1.0)

    def __matmul__(self, other):
        return Product(self, as_map(other))

    def __rmatmul__(self, other):
        return Product(as_map(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float, complex)):
            return Scaled(self, other)
        return NotImplemented

    __rmul__ = __mul__

    def inv(self) -> TransferMap:
        return Inverse(self)

    def tilde(self) -> TransferMap:
        return Tilde(self)


def as_map(x) -> TransferMap:
    if isinstance(x, TransferMap):
        return x
    if isinstance(x, DMatrix):
        return Constant(x)
    raise TypeError(f"cannot use {type(x).__name__} as a transfer map")


class Constant(TransferMap):
    def __init__(self, value: DMatrix):
        self.value = value
        self.shape = value.shape

    def _eval(self, s):
        return np.broadcast_to(self.value.doubled, (len(s),) + self.value.doubled.shape).copy()


def identity_map(n: int) -> Constant:
    return Constant(DMatrix.identity(n))


def zero_map(rows: int, cols: int) -> Constant:
    return Constant(DMatrix.zeros(rows, cols))


class Resolvent(TransferMap):
    """``s -> feedthrough + b_out (s I - a)^-1 b_in``."""

    def __init__(self, b_out: DMatrix, a: DMatrix, b_in: DMatrix, feedthrough: DMatrix | None = None):
        if a.rows != a.cols or b_out.cols != a.rows or b_in.rows != a.rows:
            raise ValueError(f"incompatible resolvent shapes {b_out.shape}, {a.shape}, {b_in.shape}")
        self.b_out, self.a, self.b_in = b_out, a, b_in
        self.shape = (b_out.rows, b_in.cols)
        if feedthrough is not None and feedthrough.shape != self.shape:
            raise ValueError(f"feedthrough shape {feedthrough.shape} != {self.shape}")
        self.feedthrough = feedthrough

    def _eval(self, s):
        out = self.b_out.doubled @ _resolvent_solve(self.a.doubled, self.b_in.doubled, s)
        if self.feedthrough is not None:
            out = out + self.feedthrough.doubled
        return out


class Delay(TransferMap):
    """Pure delay ``diag(exp(-s tau_k))``; equal delays give ``exp(-s tau) I``."""

    def __init__(self, tau: float | Sequence[float], size: int = 1):
        taus = np.atleast_1d(np.asarray(tau, dtype=float))
        if taus.size == 1:
            taus = np.full(size, taus[0])
        if np.any(taus < 0):
            raise ValueError("delays must be non-negative")
        self.taus = taus
        self.shape = (len(taus), len(taus))

    def _eval(self, s):
        f = np.exp(-np.outer(s, np.repeat(self.taus, 2)))
        out = np.zeros((len(s),) + (2 * self.shape[0],) * 2, dtype=complex)
        idx = np.arange(2 * self.shape[0])
        out[:, idx, idx] = f
        return out


class Sum(TransferMap):
    def __init__(self, *terms: TransferMap):
        shapes = {t.shape for t in terms}
        if len(shapes) != 1:
            raise ValueError(f"cannot add maps of shapes {sorted(shapes)}")
        self.terms = terms
        self.shape = terms[0].shape

    def _eval(self, s):
        out = self.terms[0]._eval(s)
        for t in self.terms[1:]:
            out = out + t._eval(s)
        return out


class Scaled(TransferMap):
    def __init__(self, inner: TransferMap, factor: complex):
        self.inner, self.factor = inner, factor
        self.shape = inner.shape

    def _eval(self, s):
        return self.factor * self.inner._eval(s)


class Product(TransferMap):
    """Matrix product; the rightmost factor acts first."""

    def __init__(self, *factors: TransferMap):
        for left, right in zip(factors, factors[1:]):
            if left.shape[1] != right.shape[0]:
                raise ValueError(f"cannot multiply {left.shape} by {right.shape}")
        self.factors = factors
        self.shape = (factors[0].shape[0], factors[-1].shape[1])

    def _eval(self, s):
        out = self.factors[-1]._eval(s)
        for f in reversed(self.factors[:-1]):
            out = f._eval(s) @ out
        return out


class Inverse(TransferMap):
    def __init__(self, inner: TransferMap):
        if inner.shape[0] != inner.shape[1]:
            raise ValueError(f"cannot invert non-square map of shape {inner.shape}")
        self.inner = inner
        self.shape = inner.shape

    def _eval(self, s):
        return checked_inv(self.inner._eval(s), s)


class Tilde(TransferMap):
    """``G~(s) = flat(G(-s*))``."""

    def __init__(self, inner: TransferMap):
        self.inner = inner
        self.shape = (inner.shape[1], inner.shape[0])

    def _eval(self, s):
        return flat_array(self.inner._eval(-np.conj(s)))


class Block(TransferMap):
    """Block matrix of maps; row heights and column widths must line up."""

    def __init__(self, grid: Sequence[Sequence[TransferMap]]):
        self.grid = [list(r) for r in grid]
        heights = [r[0].shape[0] for r in self.grid]
        widths = [m.shape[1] for m in self.grid[0]]
        for r, h in zip(self.grid, heights):
            if len(r) != len(widths) or any(m.shape != (h, w) for m, w in zip(r, widths)):
                raise ValueError("block grid shapes do not line up")
        self.shape = (sum(heights), sum(widths))

    def _eval(self, s):
        return np.concatenate(
            [np.concatenate([m._eval(s) for m in row], axis=-1) for row in self.grid], axis=-2
        )


class Pointwise(TransferMap):
    """Wrap a batched evaluator ``fn(s) -> (N, 2r, 2c)``."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], shape: tuple[int, int], name: str = ""):
        self.fn, self.shape, self.name = fn, shape, name

    def _eval(self, s):
        return self.fn(s)


class KernelHalf(TransferMap):
    """Half-line Laplace transform ``N_+`` (sign=+1) or ``N_-`` (sign=-1) of a kernel."""

    def __init__(self, kernel: MemoryKernel, sign: int):
        if sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        self.kernel, self.sign = kernel, sign
        self.shape = (kernel.size, kernel.size)

    def _eval(self, s):
        return self.kernel.half_laplace(self.sign, s)


# -- memory kernels -----------------------------------------------------------------


class MemoryKernel:
    """Bath correlation ``N(t)``, with ``N.flat()(t) == N(-t)``."""

    size: int

    def time(self, t: float) -> DMatrix:
        raise NotImplementedError

    def half_laplace(self, sign: int, s: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def npm(self, sign: int) -> KernelHalf:
        return KernelHalf(self, sign)

    def realization(self, side: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Doubled ``(L, A, R)`` with ``N(side * r) = L exp(A r) R`` for ``r >= 0``."""
        raise Unsupported(f"{type(self).__name__} has no finite-dimensional time realization")

    def timescale(self) -> float:
        return 0.0

    def memory_length(self, rtol: float = 1e-12) -> float:
        """Smallest ``L`` with ``|N(t)| < rtol |N(0)|`` for ``|t| >= L``."""
        raise Unsupported(f"{type(self).__name__} has no sampled memory")


@dataclass(frozen=True)
class Lorentzian(MemoryKernel):
    """``N(t) = (kappa gamma / 2) exp(-gamma |t|) I_size``."""

    kappa: float
    gamma: float
    size: int = 1

    def __post_init__(self):
        if not (self.kappa > 0 and self.gamma > 0):
            raise ValueError(f"Lorentzian kernel needs kappa > 0 and gamma > 0, got {self.kappa}, {self.gamma}")
        if self.size < 1:
            raise ValueError("kernel size must be positive")

    @property
    def weight(self) -> float:
        return 0.5 * self.kappa * self.gamma

    def time(self, t: float) -> DMatrix:
        return DMatrix.identity(self.size) * (self.weight * math.exp(-self.gamma * abs(t)))

    def half_laplace(self, sign, s):
        f = self.weight / (sign * s + self.gamma)
        return f[:, None, None] * np.eye(2 * self.size)

    def realization(self, side):
        c = math.sqrt(self.weight) * np.eye(2 * self.size)
        return c, -self.gamma * np.eye(2 * self.size), c

    def timescale(self):
        return max(1.0 / self.gamma, 1.0 / self.kappa)

    def memory_length(self, rtol=1e-12):
        return math.log(1.0 / rtol) / self.gamma


@dataclass(frozen=True, eq=False)
class MarkovDelta(MemoryKernel):
    """White-noise limit ``N(t) = N0 delta(t)``: ``N_+ = N_- = N0 / 2``."""

    n0: DMatrix

    def __post_init__(self):
        if self.n0.rows != self.n0.cols or not self.n0.is_real():
            raise ValueError("N0 must be a square D-matrix")
        if not is_flat_hermitian(self.n0, 1e-10):
            raise ValueError("N0 must be flat-Hermitian")

    @property
    def size(self) -> int:
        return self.n0.rows

    def time(self, t):
        raise Unsupported("a delta kernel has no pointwise time samples")

    def half_laplace(self, sign, s):
        return np.broadcast_to(0.5 * self.n0.doubled, (len(s),) + self.n0.doubled.shape).copy()

    def __eq__(self, other):
        return isinstance(other, MarkovDelta) and self.n0 == other.n0

    def __hash__(self):
        return hash(self.n0.doubled.tobytes())


@dataclass(frozen=True, eq=False)
class ExpMode(MemoryKernel):
    """Finite-mode kernel ``N(t) = E.flat() exp(Q t) E`` for ``t >= 0``.

    For ``t < 0`` the kernel is continued by evenness, ``N(t) = N(-t).flat()``,
    which coincides with ``E.flat() exp(Q t) E`` whenever ``Q`` is skew
    flat-Hermitian.  A dissipative ``Q`` (for instance ``-gamma e``) gives a
    decaying, colored kernel.
    """

    e: DMatrix
    q: DMatrix

    def __post_init__(self):
        if self.q.rows != self.q.cols or self.e.rows != self.q.rows:
            raise ValueError(f"incompatible E {self.e.shape} and Q {self.q.shape}")
        if not (self.e.is_real() and self.q.is_real()):
            raise ValueError("E and Q must be D-structured")

    @property
    def size(self) -> int:
        return self.e.cols

    def time(self, t):
        ef = self.e.flat().doubled
        if t >= 0:
            x = ef @ scipy.linalg.expm(self.q.doubled * t) @ self.e.doubled
        else:
            x = ef @ scipy.linalg.expm(-self.q.flat().doubled * t) @ self.e.doubled
        return DMatrix(project_array(x))

    def half_laplace(self, sign, s):
        ef, e = self.e.flat().doubled, self.e.doubled
        if sign > 0:
            return ef @ _resolvent_solve(self.q.doubled, e, s)
        # integral of N(-r) exp(s r) over r > 0: E^b (-s I - Q^b)^-1 E
        return ef @ _resolvent_solve(self.q.flat().doubled, e, -s)

    def realization(self, side):
        ef, e = self.e.flat().doubled, self.e.doubled
        a = self.q.doubled if side > 0 else self.q.flat().doubled
        return ef, a, e

    def timescale(self):
        lam = np.linalg.eigvals(self.q.doubled)
        decay = -lam.real
        if np.all(decay > 0):
            return 1.0 / float(decay.min())
        return 0.0

    def memory_length(self, rtol=1e-12):
        lam = np.linalg.eigvals(self.q.doubled)
        if not np.all(lam.real < 0):
            return math.inf
        # generous bound: slowest decay rate with a polynomial-growth allowance
        return (math.log(1.0 / rtol) + 2.0 * math.log(1.0 + self.q.rows)) / float(-lam.real.max())

    def __eq__(self, other):
        return isinstance(other, ExpMode) and self.e == other.e and self.q == other.q

    def __hash__(self):
        return hash((self.e.doubled.tobytes(), self.q.doubled.tobytes()))


def kernel_time(kernel: MemoryKernel, t: float) -> DMatrix:
    return kernel.time(t)


def kernel_npm(kernel: MemoryKernel, sign: int) -> KernelHalf:
    return kernel.npm(sign)


# -- generators and system maps ---------------------------------------------------


def generator_from_hamiltonian(n: int, omegas, alpha=None, beta=None) -> Generator:
    """Coefficient matrix ``P`` of the Heisenberg equations for a quadratic Hamiltonian.

    ``alpha`` and ``beta`` are ``n x n`` complex arrays of which only the upper
    triangle (``k <= j``) is read.  For ``k < j`` the entry is
    ``P[k, j] = D(alpha_kj, beta_kj)`` and its mirror ``P[j, k] = -P[k, j].flat()``.
    Diagonal entries are ``D(i (omega_j + Im alpha_jj), beta_jj)``; the real part of
    ``alpha_jj`` cancels in the Hamiltonian and is dropped.
    """
    omegas = np.asarray(omegas, dtype=float).reshape(-1)
    alpha = np.zeros((n, n), complex) if alpha is None else np.asarray(alpha, dtype=complex)
    beta = np.zeros((n, n), complex) if beta is None else np.asarray(beta, dtype=complex)
    if omegas.shape != (n,) or alpha.shape != (n, n) or beta.shape != (n, n):
        raise ValueError(f"expected omegas ({n},), alpha and beta ({n}, {n})")
    pa = np.zeros((n, n), complex)
    pb = np.zeros((n, n), complex)
    for k in range(n):
        pa[k, k] = 1j * (omegas[k] + alpha[k, k].imag)
        pb[k, k] = beta[k, k]
        for j in range(k + 1, n):
            pa[k, j], pb[k, j] = alpha[k, j], beta[k, j]
            # -(D(a, b)).flat() = D(-a*, b)
            pa[j, k], pb[j, k] = -np.conj(alpha[k, j]), beta[k, j]
    return Generator(DMatrix.from_parts(pa, pb).doubled)


def resolvent(p: DMatrix) -> Resolvent:
    """``(s I - P)^-1``."""
    eye = DMatrix.identity(p.rows)
    return Resolvent(eye, p, eye)


def system_M(p: DMatrix, d: DMatrix) -> Resolvent:
    """``M(s) = D.flat() (s I - P)^-1 D``."""
    if d.rows != p.rows:
        raise ValueError(f"coupling D {d.shape} does not match P {p.shape}")
    return Resolvent(d.flat(), p, d)


def tf_eval(g: TransferMap, s) -> DMatrix:
    return g(s)


def tf_tilde(g: TransferMap) -> TransferMap:
    return g.tilde()
