"""Network-level constructions built on transfer maps and signal flow graphs.

Covers direct coherent feedback between two linear systems, field-mediated
input-output systems with memory kernels, the Markovian limit, static
components (beam splitters, delays), series products and the indirect
feedback loop through a beam splitter.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dmatrix import (
    DMatrix,
    Generator,
    checked_inv,
    column_decompose,
    is_flat_hermitian,
    is_flat_unitary,
    is_unitary,
)
from .errors import NotPassive
from .sfg import SignalFlowGraph
from .tfcore import (
    Block,
    Constant,
    Delay,
    ExpMode,
    MarkovDelta,
    MemoryKernel,
    Pointwise,
    Resolvent,
    TransferMap,
    identity_map,
    resolvent,
    system_M,
)

# -- input-output systems -----------------------------------------------------------


@dataclass(eq=False)
class IOSystem:
    """Plant generator ``P`` coupled to fields through ``(D_j, kernel_j)`` pairs."""

    p: DMatrix
    couplings: list[tuple[DMatrix, MemoryKernel]] = field(default_factory=list)

    def __post_init__(self):
        if not isinstance(self.p, Generator):
            self.p = Generator(self.p.doubled)
        self.couplings = [(d, k) for d, k in self.couplings]
        for j, (d, kern) in enumerate(self.couplings):
            if d.rows != self.p.rows:
                raise ValueError(f"coupling {j}: D has {d.rows} rows, plant has {self.p.rows} modes")
            if d.cols != kern.size:
                raise ValueError(f"coupling {j}: D has {d.cols} columns but the kernel has size {kern.size}")

    @property
    def n(self) -> int:
        return self.p.rows

    @property
    def widths(self) -> list[int]:
        return [d.cols for d, _ in self.couplings]

    @property
    def k(self) -> int:
        return sum(self.widths)

    @property
    def kernels(self) -> list[MemoryKernel]:
        return [kern for _, kern in self.couplings]

    def d_total(self) -> DMatrix:
        """All coupling matrices side by side, ``[D_1 ... D_q]``."""
        if not self.couplings:
            return DMatrix.zeros(self.n, 0)
        return DMatrix.block([[d for d, _ in self.couplings]])

    def m_map(self) -> Resolvent:
        """Block ``M(s)`` whose ``(j, l)`` block is ``D_j.flat() (sI - P)^-1 D_l``."""
        return system_M(self.p, self.d_total())

    def n_map(self, sign: int) -> TransferMap:
        """Block-diagonal ``N_+`` (sign=+1) or ``N_-`` (sign=-1)."""
        kernels = self.kernels
        k = self.k

        def fn(s):
            out = np.zeros((len(s), 2 * k, 2 * k), dtype=complex)
            pos = 0
            for kern in kernels:
                w = 2 * kern.size
                out[:, pos : pos + w, pos : pos + w] = kern.half_laplace(sign, s)
                pos += w
            return out

        return Pointwise(fn, (k, k), "N+" if sign > 0 else "N-")


def io_system_from_bath(p: DMatrix, q: DMatrix, c: DMatrix) -> IOSystem:
    """Eliminate a linear bath ``(Q, C)``: factor ``C = E D.flat()`` and use ``N(t) = E.flat() exp(Qt) E``."""
    e, d, k = column_decompose(c)
    if k == 0:
        return IOSystem(p, [])
    return IOSystem(p, [(d, ExpMode(e, q))])


def _regular_eval(sys: IOSystem, s: np.ndarray) -> np.ndarray:
    """``I - (N_+ + N_-) D.flat() (sI - P + D N_+ D.flat())^-1 D``; finite at the poles of ``M``."""
    d = sys.d_total().doubled
    df = sys.d_total().flat().doubled
    npl = sys.n_map(1)._eval(s)
    nmi = sys.n_map(-1)._eval(s)
    a = s[:, None, None] * np.eye(2 * sys.n) - sys.p.doubled + d @ npl @ df
    inner = checked_inv(a, s)
    return np.eye(2 * sys.k) - (npl + nmi) @ df @ inner @ d


def _ratio_eval(sys: IOSystem, s: np.ndarray) -> np.ndarray:
    """``[I - N_- M][I + N_+ M]^-1``."""
    m = sys.m_map()._eval(s)
    eye = np.eye(2 * sys.k)
    return (eye - sys.n_map(-1)._eval(s) @ m) @ checked_inv(eye + sys.n_map(1)._eval(s) @ m, s)


def _alternate_eval(sys: IOSystem, s: np.ndarray) -> np.ndarray:
    """``I - (N_+ + N_-)[I + M N_+]^-1 M``."""
    m = sys.m_map()._eval(s)
    npl = sys.n_map(1)._eval(s)
    eye = np.eye(2 * sys.k)
    return eye - (npl + sys.n_map(-1)._eval(s)) @ checked_inv(eye + m @ npl, s) @ m


_FORMS = {"regular": _regular_eval, "ratio": _ratio_eval, "alternate": _alternate_eval}


def io_transfer_multi(sys: IOSystem, form: str = "regular") -> TransferMap:
    """Transfer function from the effective inputs to the effective outputs.

    ``form`` selects an algebraically equivalent expression: ``"ratio"`` is
    ``[I - N_- M][I + N_+ M]^-1``, ``"alternate"`` is
    ``I - (N_+ + N_-)[I + M N_+]^-1 M`` and ``"regular"`` (the default) pushes
    the resolvent through so that poles of ``M`` on the imaginary axis do not
    spoil the evaluation.
    """
    if form not in _FORMS:
        raise ValueError(f"unknown form {form!r}; expected one of {sorted(_FORMS)}")
    if sys.k == 0:
        return Constant(DMatrix.zeros(0, 0))
    fn = _FORMS[form]
    return Pointwise(lambda s: fn(sys, s), (sys.k, sys.k), f"io[{form}]")


def io_transfer(sys: IOSystem, form: str = "regular") -> TransferMap:
    if len(sys.couplings) != 1:
        raise ValueError(f"io_transfer needs exactly one coupling, got {len(sys.couplings)}; use io_transfer_multi")
    return io_transfer_multi(sys, form)


def cavity(omega: float, kappa: float, gamma: float | None = None) -> IOSystem:
    """Single-mode cavity ``P = omega i`` coupled through ``D = e`` to a Lorentzian
    bath, or to white noise ``N0 = kappa e`` when ``gamma`` is None."""
    from .tfcore import Lorentzian

    p = DMatrix.from_parts([[1j * omega]])
    kern = MarkovDelta(DMatrix.identity(1) * kappa) if gamma is None else Lorentzian(kappa, gamma)
    return IOSystem(p, [(DMatrix.identity(1), kern)])


def multi_bath_cavity(omega: float, kappas: Sequence[float], gammas: Sequence[float]) -> IOSystem:
    """Single mode coupled with ``D_j = e`` to one Lorentzian bath per ``(kappa, gamma)`` pair."""
    from .tfcore import Lorentzian

    p = DMatrix.from_parts([[1j * omega]])
    return IOSystem(p, [(DMatrix.identity(1), Lorentzian(k, g)) for k, g in zip(kappas, gammas)])


# -- all-pass diagnostics -----------------------------------------------------------


@dataclass
class AllPassReport:
    comm_np_m: float
    comm_nm_m: float
    comm_np_nm: float
    tilde_defect: float
    unitarity_defect: float
    tol: float = 1e-10

    @property
    def conditions_hold(self) -> bool:
        return max(self.comm_np_m, self.comm_nm_m, self.comm_np_nm) < self.tol


def _fro(x: np.ndarray) -> np.ndarray:
    return np.linalg.norm(x, axis=(-2, -1))


def flat_unitarity_defect(g: TransferMap, omegas) -> np.ndarray:
    """``|G(iw).flat() G(iw) - I|`` at each frequency."""
    from .dmatrix import flat_array

    vals = g.evaluate(1j * np.asarray(omegas, dtype=float).reshape(-1))
    return _fro(flat_array(vals) @ vals - np.eye(vals.shape[-1]))


def check_theorem2(sys: IOSystem, s_samples, omegas=None, tol: float = 1e-10) -> AllPassReport:
    """Commutator norms behind the all-pass theorem and the resulting defects.

    Commutators and ``|G~ G - I|`` are taken at ``s_samples``; the flat-unitarity
    defect is taken on ``i * omegas`` (default: the imaginary parts of the samples).
    """
    from .dmatrix import flat_array

    s = np.asarray(s_samples, dtype=complex).reshape(-1)
    omegas = s.imag if omegas is None else np.asarray(omegas, dtype=float).reshape(-1)
    m = sys.m_map().evaluate(s)
    npl = sys.n_map(1).evaluate(s)
    nmi = sys.n_map(-1).evaluate(s)
    g = io_transfer_multi(sys)
    gs = g.evaluate(s)
    gt = flat_array(g.evaluate(-np.conj(s)))
    eye = np.eye(gs.shape[-1])
    return AllPassReport(
        comm_np_m=float(_fro(npl @ m - m @ npl).max()),
        comm_nm_m=float(_fro(nmi @ m - m @ nmi).max()),
        comm_np_nm=float(_fro(npl @ nmi - nmi @ npl).max()),
        tilde_defect=float(_fro(gt @ gs - eye).max()),
        unitarity_defect=float(flat_unitarity_defect(g, omegas).max()),
        tol=tol,
    )


# -- Markovian limit ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SLH:
    """Coefficient matrices of the white-noise model: scattering, coupling, generator."""

    S: DMatrix
    L_matrix: DMatrix
    H_matrix: DMatrix


def markovian_limit(p: DMatrix, d: DMatrix, n0: DMatrix) -> tuple[TransferMap, SLH]:
    """White-noise transfer function ``[I - N0 M / 2][I + N0 M / 2]^-1`` and its SLH data."""
    if not is_flat_hermitian(n0, 1e-10):
        raise ValueError("N0 must be flat-Hermitian")
    sys = IOSystem(p, [(d, MarkovDelta(n0))])
    slh = SLH(S=DMatrix.identity(d.cols), L_matrix=d.flat(), H_matrix=DMatrix(sys.p.doubled))
    return io_transfer(sys), slh


def markov_effective_generator(p: DMatrix, d: DMatrix, n0: DMatrix) -> DMatrix:
    """Drift ``P - D N0 D.flat() / 2`` of the plant under white-noise coupling."""
    return p - (d @ n0 @ d.flat()) * 0.5


# -- direct coherent feedback -----------------------------------------------------


def _feedback_gains(p: DMatrix, q: DMatrix, c: DMatrix) -> tuple[TransferMap, TransferMap]:
    """``G_x^w = -(sI - P)^-1 C.flat()`` and ``G_w^x = (sI - Q)^-1 C``."""
    if c.shape != (q.rows, p.rows):
        raise ValueError(f"C must be {q.rows}x{p.rows}, got {c.shape}")
    gxw = Resolvent(DMatrix.identity(p.rows), p, -c.flat())
    gwx = Resolvent(DMatrix.identity(q.rows), q, c)
    return gxw, gwx


def direct_feedback_closed_loop(p: DMatrix, q: DMatrix, c: DMatrix) -> TransferMap:
    """Map from the free signals ``(x0, w0)`` to the coupled ``(x, w)``.

    The joint drift is ``[[P, -C.flat()], [C, Q]]``.  Returns
    ``[[Lx^-1, Lx^-1 Gxw], [Lw^-1 Gwx, Lw^-1]]`` with ``Lx = I - Gxw Gwx`` and
    ``Lw = I - Gwx Gxw``.
    """
    gxw, gwx = _feedback_gains(p, q, c)
    lx_inv = (identity_map(p.rows) - gxw @ gwx).inv()
    lw_inv = (identity_map(q.rows) - gwx @ gxw).inv()
    return Block([[lx_inv, lx_inv @ gxw], [lw_inv @ gwx, lw_inv]])


def direct_feedback_graph(p: DMatrix, q: DMatrix, c: DMatrix) -> SignalFlowGraph:
    """Two-node graph ``x <-> w`` with the interaction gains."""
    gxw, gwx = _feedback_gains(p, q, c)
    g = SignalFlowGraph()
    g.add_node("x", p.rows)
    g.add_node("w", q.rows)
    g.add_arc("w", "x", gxw)
    g.add_arc("x", "w", gwx)
    return g


@dataclass(eq=False)
class Bath:
    """Linear bath with drift ``Q`` coupled to the plant through ``C`` (``m x n``)."""

    q: DMatrix
    c: DMatrix


def decoherence_spectrum(
    p: DMatrix, baths: Sequence[Bath], feedback: DMatrix | None = None, exact: bool = False
) -> tuple[TransferMap, TransferMap]:
    """Self-energy ``D(s)`` of a plant in contact with baths, and the closed loop ``(sI - P + D)^-1``.

    Without feedback ``D(s) = sum_j C_j.flat() (sI - Q_j)^-1 C_j``.  With a
    coupling ``F`` between two baths (bath 2 driven by ``F w1``, bath 1 by
    ``-F.flat() w2``) each bath's resolvent is dressed by the other:
    ``C_1.flat() [(sI - Q_2) + F.flat() (sI - Q_2)^-1 F]^-1 C_1`` plus the mirrored
    term.  This per-bath form neglects the paths that enter through one bath
    and leave through the other; ``exact=True`` includes them by inverting the
    joint bath drift.
    """
    baths = list(baths)
    n = p.rows
    for j, b in enumerate(baths):
        if b.c.shape != (b.q.rows, n) or b.q.rows != b.q.cols:
            raise ValueError(f"bath {j}: Q {b.q.shape} and C {b.c.shape} do not match a plant of {n} modes")
    if feedback is not None:
        if len(baths) != 2:
            raise ValueError("bath-bath feedback needs exactly two baths")
        m1, m2 = baths[0].q.rows, baths[1].q.rows
        if feedback.shape != (m2, m1):
            raise ValueError(f"feedback F must be {m2}x{m1}, got {feedback.shape}")

    def d_eval(s):
        out = np.zeros((len(s), 2 * n, 2 * n), dtype=complex)
        if feedback is None or not exact:
            for j, b in enumerate(baths):
                a = s[:, None, None] * np.eye(2 * b.q.rows) - b.q.doubled
                if feedback is not None:
                    other = baths[1 - j]
                    a_o = s[:, None, None] * np.eye(2 * other.q.rows) - other.q.doubled
                    f_in = feedback if j == 1 else -feedback.flat()
                    f_out = -feedback.flat() if j == 1 else feedback
                    # loop j -> other -> j: w_other <- f_out w_j,  w_j <- f_in w_other
                    a = a - f_in.doubled @ checked_inv(a_o, s) @ f_out.doubled
                out = out + b.c.flat().doubled @ checked_inv(a, s) @ b.c.doubled
            return out
        q_joint = DMatrix.block([[baths[0].q, -feedback.flat()], [feedback, baths[1].q]])
        c_joint = DMatrix.block([[baths[0].c], [baths[1].c]])
        a = s[:, None, None] * np.eye(2 * q_joint.rows) - q_joint.doubled
        return c_joint.flat().doubled @ checked_inv(a, s) @ c_joint.doubled

    d_map = Pointwise(d_eval, (n, n), "D")

    def cl_eval(s):
        a = s[:, None, None] * np.eye(2 * n) - p.doubled + d_eval(s)
        return checked_inv(a, s)

    return d_map, Pointwise(cl_eval, (n, n), "closed loop")


def two_bath_example(omega0: float, omegas, g1, g2, f=None) -> tuple[Generator, list[Bath], DMatrix | None]:
    """Single-mode plant with two multimode baths sharing mode frequencies ``omegas``.

    ``g1[k]`` and ``g2[k]`` couple the plant to mode ``k`` of each bath; ``f[k]``
    couples mode ``k`` of bath 1 to mode ``k`` of bath 2.
    """
    omegas = np.asarray(omegas, dtype=float).reshape(-1)
    q = DMatrix.from_parts(np.diag(1j * omegas))
    c1 = DMatrix.from_parts(np.asarray(g1, dtype=complex).reshape(-1, 1))
    c2 = DMatrix.from_parts(np.asarray(g2, dtype=complex).reshape(-1, 1))
    p = Generator(DMatrix.from_parts([[1j * omega0]]).doubled)
    fm = None if f is None else DMatrix.from_parts(np.diag(np.asarray(f, dtype=complex).reshape(-1)))
    return p, [Bath(q, c1), Bath(q, c2)], fm


def two_bath_graph(p: DMatrix, baths: Sequence[Bath], feedback: DMatrix | None = None) -> SignalFlowGraph:
    """Graph with nodes ``x``, ``w1``, ``w2`` and the interaction gains between them."""
    g = SignalFlowGraph()
    g.add_node("x", p.rows)
    for j, b in enumerate(baths, start=1):
        gxw, gwx = _feedback_gains(p, b.q, b.c)
        g.add_node(f"w{j}", b.q.rows)
        g.add_arc(f"w{j}", "x", gxw)
        g.add_arc("x", f"w{j}", gwx)
    if feedback is not None:
        q1, q2 = baths[0].q, baths[1].q
        g.add_arc("w1", "w2", Resolvent(DMatrix.identity(q2.rows), q2, feedback))
        g.add_arc("w2", "w1", Resolvent(DMatrix.identity(q1.rows), q1, -feedback.flat()))
    return g


# -- static components -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BeamSplitter:
    """Passive splitter ``(c1, c2) = [[T1, R1], [R2, T2]] (b1, b2)``."""

    t1: DMatrix
    r1: DMatrix
    r2: DMatrix
    t2: DMatrix

    @property
    def total(self) -> DMatrix:
        return DMatrix.block([[self.t1, self.r1], [self.r2, self.t2]])

    def part(self, name: str) -> DMatrix:
        if name not in ("t1", "r1", "r2", "t2"):
            raise KeyError(f"unknown splitter part {name!r}")
        return getattr(self, name)


@dataclass(frozen=True)
class DelayLine:
    """Waveguide delay; per-mode delays give a dispersive line."""

    taus: tuple[float, ...]

    @property
    def size(self) -> int:
        return len(self.taus)

    @property
    def map(self) -> Delay:
        return Delay(self.taus)


def beam_splitter(t1: DMatrix, r1: DMatrix, r2: DMatrix, t2: DMatrix, tol: float = 1e-10) -> BeamSplitter:
    try:
        bs = BeamSplitter(t1, r1, r2, t2)
        total = bs.total
    except ValueError as exc:
        raise NotPassive(f"splitter blocks do not fit together: {exc}") from None
    if not total.is_real():
        raise NotPassive("splitter entries must be D-structured")
    if not is_flat_unitary(total, tol):
        raise NotPassive("splitter matrix is not flat-unitary")
    if not is_unitary(total, tol):
        raise NotPassive("splitter matrix is not unitary")
    return bs


def delay(tau: float, size: int = 1, speeds: Sequence[float] | None = None) -> DelayLine:
    """Delay line of ``size`` modes.

    With ``speeds`` the first argument is the line length ``L`` and mode ``k``
    is delayed by ``L / speeds[k]``.
    """
    if tau < 0:
        raise ValueError("delay must be non-negative")
    if speeds is None:
        return DelayLine(tuple(float(tau) for _ in range(size)))
    speeds = [float(c) for c in speeds]
    if any(c <= 0 for c in speeds):
        raise ValueError("mode speeds must be positive")
    return DelayLine(tuple(float(tau) / c for c in speeds))


def random_passive_splitter(m: int, rng: np.random.Generator) -> BeamSplitter:
    """Splitter whose α-parts form a Haar-random ``2m x 2m`` unitary (no squeezing)."""
    from scipy.stats import unitary_group

    u = unitary_group.rvs(2 * m, random_state=rng)
    total = DMatrix.from_parts(u)
    x = total.doubled
    h = 2 * m
    return beam_splitter(
        DMatrix(x[:h, :h]), DMatrix(x[:h, h:]), DMatrix(x[h:, :h]), DMatrix(x[h:, h:])
    )


# -- cascades and indirect feedback -------------------------------------------------


def series_product(sys1: IOSystem, sys2: IOSystem) -> TransferMap:
    """Cascade in which the output field of ``sys1`` drives ``sys2``: ``G = G_2 G_1``."""
    if len(sys1.couplings) != 1 or len(sys2.couplings) != 1:
        raise ValueError("series product needs single-coupling systems")
    if sys1.k != sys2.k:
        raise ValueError(f"channel widths differ: {sys1.k} vs {sys2.k}")
    if sys1.kernels[0] != sys2.kernels[0]:
        raise ValueError("series product needs both systems to see the same kernel")
    return io_transfer(sys2) @ io_transfer(sys1)


def indirect_feedback_network(cav: IOSystem, splitter: BeamSplitter, tau: float) -> SignalFlowGraph:
    """Cavity output fed back through a delayed splitter port.

    Nodes: ``b1`` (input), ``c2`` (splitter output into the cavity), ``b2``
    (cavity output, returned to the splitter after a delay ``tau``) and ``c1``
    (network output).  Arc gains: ``b1 -> c1`` is ``r1``, ``b1 -> c2`` is
    ``t1``, ``b2 -> c1`` is ``exp(-tau s) t2``, ``b2 -> c2`` is
    ``exp(-tau s) r2`` and ``c2 -> b2`` is the cavity transfer function.
    """
    ga = io_transfer(cav)
    k = ga.shape[0]
    for name in ("t1", "r1", "r2", "t2"):
        if splitter.part(name).shape != (k, k):
            raise ValueError(f"splitter part {name} must be {k}x{k} to match the cavity channel")
    dl = Delay(tau, k)
    g = SignalFlowGraph()
    for node in ("b1", "b2", "c1", "c2"):
        g.add_node(node, k)
    g.add_arc("b1", "c1", Constant(splitter.r1))
    g.add_arc("b1", "c2", Constant(splitter.t1))
    g.add_arc("b2", "c1", dl @ Constant(splitter.t2))
    g.add_arc("b2", "c2", dl @ Constant(splitter.r2))
    g.add_arc("c2", "b2", ga)
    return g


def indirect_feedback_closed_form(cav: IOSystem, splitter: BeamSplitter, tau: float) -> TransferMap:
    """``r1 + t2 (exp(tau s) Ga^-1 - r2)^-1 t1``."""
    ga = io_transfer(cav)
    r1, t1, r2, t2 = (splitter.part(n).doubled for n in ("r1", "t1", "r2", "t2"))

    def fn(s):
        inner = np.exp(tau * s)[:, None, None] * checked_inv(ga._eval(s), s) - r2
        return r1 + t2 @ checked_inv(inner, s) @ t1

    return Pointwise(fn, ga.shape, "indirect feedback")
