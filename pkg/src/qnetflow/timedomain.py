"""Time-domain integration of the integro-differential input-output dynamics.

The plant obeys::

    x'(t) = P x(t) - int_0^t D N(t - r) D.flat() x(r) dr - D w_in(t)
    w_out(t) = w_in(t) + int_0^inf N(t - r) D.flat() x(r) dr

on the doubled complex form.  The output integral runs over the whole past
and future of ``x`` because the kernel is two-sided, so the output is
nonzero slightly before the input arrives.  Integrating these equations and
Fourier transforming the response gives an oracle for the frequency-domain
transfer functions that shares no code with them beyond the kernel samples.

The default ``"rk4"`` method realises the causal half of each kernel with an
auxiliary state (exact for exponential kernels) and takes classical
Runge-Kutta steps; the output convolution uses trapezoid weights.  The
``"trapezoid"`` method is an implicit trapezoidal Volterra scheme with an
explicit history sum, intended for short-horizon cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .errors import InsufficientDecay, UnstableSimulation, Unsupported
from .netlib import IOSystem
from .tfcore import MarkovDelta

BLOWUP = 1e9
INPUTS = ("impulse", "sinusoid", "chirp", "none")


@dataclass
class SimulationConfig:
    dt: float
    T: float
    input: str = "impulse"
    omega: float = 0.0
    omega_lo: float = 0.0
    omega_hi: float = 1.0
    x0: np.ndarray | None = None
    method: str = "rk4"
    memory_rtol: float = 1e-12
    check_horizon: bool = True

    def __post_init__(self):
        if not (self.dt > 0 and self.T > 0):
            raise ValueError("dt and T must be positive")
        if self.input not in INPUTS:
            raise ValueError(f"unknown input {self.input!r}; expected one of {INPUTS}")
        if self.method not in ("rk4", "trapezoid"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.input == "chirp" and not self.omega_lo < self.omega_hi:
            raise ValueError("chirp needs omega_lo < omega_hi")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass
class SimulationResult:
    """Sampled trajectories; every input column is simulated side by side.

    ``x`` has shape ``(len(t), 2n, c)`` and ``w_in``/``w_out`` have shape
    ``(len(t), 2k, c)``.  For driven inputs ``c = 2k`` and column ``j`` is the
    response to the ``j``-th unit input; with ``input="none"`` there is a
    single column.  The grid starts at ``-lead`` so that the anticausal part of
    the output is captured.  For an impulse input ``w_in`` holds zeros and the
    delta itself is accounted for analytically; ``h = w_out - w_in``.
    """

    t: np.ndarray
    x: np.ndarray
    w_in: np.ndarray
    w_out: np.ndarray
    cfg: SimulationConfig
    lead: int = 0

    @property
    def h(self) -> np.ndarray:
        return self.w_out - self.w_in


def _check_system(sys: IOSystem, cfg: SimulationConfig):
    for kern in sys.kernels:
        if isinstance(kern, MarkovDelta):
            raise Unsupported("white-noise kernels have no time samples; use a Lorentzian with a large width")
    if cfg.check_horizon:
        slow = max([kern.timescale() for kern in sys.kernels] + [0.0])
        if cfg.T <= 10.0 * slow:
            raise ValueError(f"horizon T={cfg.T} must exceed 10x the slowest kernel timescale {slow:g}")


def _couplings(sys: IOSystem):
    d = sys.d_total().doubled
    return d, sys.d_total().flat().doubled


def _realizations(sys: IOSystem, side: int):
    """Block-diagonal ``(L, A, R)`` with ``N(side r) = L exp(A r) R`` for ``r >= 0``."""
    parts = [kern.realization(side) for kern in sys.kernels]
    m = sum(a.shape[0] for _, a, _ in parts)
    k2 = 2 * sys.k
    lm = np.zeros((k2, m), dtype=complex)
    am = np.zeros((m, m), dtype=complex)
    rm = np.zeros((m, k2), dtype=complex)
    row = col = 0
    for (l_, a_, r_), kern in zip(parts, sys.kernels):
        w = 2 * kern.size
        q = a_.shape[0]
        lm[row : row + w, col : col + q] = l_
        am[col : col + q, col : col + q] = a_
        rm[col : col + q, row : row + w] = r_
        row += w
        col += q
    return lm, am, rm


def _kernel_samples(sys: IOSystem, dt: float, count: int) -> np.ndarray:
    """``N(j dt)`` for ``j = -count .. count`` (block diagonal over couplings)."""
    k2 = 2 * sys.k
    out = np.zeros((2 * count + 1, k2, k2), dtype=complex)
    for side in (1, -1):
        lm, am, rm = _realizations(sys, side)
        # exp(A j dt) by repeated multiplication with a single exponential
        from scipy.linalg import expm

        step = expm(am * dt)
        cur = np.eye(am.shape[0], dtype=complex)
        for j in range(count + 1):
            out[count + side * j] = lm @ cur @ rm
            cur = step @ cur
    return out


def _memory_steps(sys: IOSystem, cfg: SimulationConfig) -> int:
    length = max(kern.memory_length(cfg.memory_rtol) for kern in sys.kernels)
    if not math.isfinite(length):
        return cfg.steps
    return min(cfg.steps, int(math.ceil(length / cfg.dt)) + 1)


def _input_samples(cfg: SimulationConfig, t: np.ndarray, k2: int) -> np.ndarray:
    """Scalar input waveform ``(len(t),)`` times the identity columns."""
    if cfg.input in ("impulse", "none"):
        f = np.zeros(len(t), dtype=complex)
    elif cfg.input == "sinusoid":
        f = np.where(t >= 0, np.exp(1j * cfg.omega * t), 0.0)
    else:
        f = chirp_waveform(cfg, t)
    return f


def chirp_waveform(cfg: SimulationConfig, t: np.ndarray) -> np.ndarray:
    """Linear complex chirp over the first 80% of the horizon with smooth raised-cosine edges."""
    span = 0.8 * cfg.T
    tt = np.clip(t, 0.0, span)
    phase = cfg.omega_lo * tt + 0.5 * (cfg.omega_hi - cfg.omega_lo) * tt**2 / span
    edge = 0.1 * span
    ramp = np.ones_like(t)
    ramp = np.where(t < edge, 0.5 - 0.5 * np.cos(np.pi * np.clip(t, 0, None) / edge), ramp)
    ramp = np.where(t > span - edge, 0.5 - 0.5 * np.cos(np.pi * np.clip(span - t, 0, None) / edge), ramp)
    ramp = np.where((t < 0) | (t > span), 0.0, ramp)
    return ramp * np.exp(1j * phase)


def _rk4_matrices(a: np.ndarray, b: np.ndarray, h: float):
    """Linear maps of one classical RK4 step of ``y' = a y + b w(t)``.

    Returns ``(Phi, G0, Gh, G1)`` with ``y+ = Phi y + G0 w(t) + Gh w(t + h/2) + G1 w(t + h)``.
    """

    def step(y, w0, wh, w1):
        k1 = a @ y + b @ w0
        k2 = a @ (y + 0.5 * h * k1) + b @ wh
        k3 = a @ (y + 0.5 * h * k2) + b @ wh
        k4 = a @ (y + h * k3) + b @ w1
        return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    ny, nw = a.shape[0], b.shape[1]
    zw = np.zeros((nw, ny))
    phi = step(np.eye(ny), zw, zw, zw)
    iw, zy_w, zw_w = np.eye(nw), np.zeros((ny, nw)), np.zeros((nw, nw))
    g0 = step(zy_w, iw, zw_w, zw_w)
    gh = step(zy_w, zw_w, iw, zw_w)
    g1 = step(zy_w, zw_w, zw_w, iw)
    return phi, g0, gh, g1


def _integrate_rk4(sys, cfg, d, df, y0, wfun):
    lm, am, rm = _realizations(sys, 1)
    n2 = 2 * sys.n
    a = np.block([[sys.p.doubled, -d @ lm], [rm @ df, am]])
    b = np.vstack([-d, np.zeros((am.shape[0], d.shape[1]))])
    h = cfg.dt
    phi, g0, gh, g1 = _rk4_matrices(a, b, h)
    steps = cfg.steps
    y = y0.copy()
    xs = np.empty((steps + 1, n2, y.shape[1]), dtype=complex)
    xs[0] = y[:n2]
    driven = cfg.input in ("sinusoid", "chirp")
    if driven:
        t_half = (np.arange(steps) + 0.5) * h
        w_half = wfun(t_half)
        w_full = wfun(np.arange(steps + 1) * h)
    for i in range(steps):
        y = phi @ y
        if driven:
            y = y + w_full[i] * g0 + w_half[i] * gh + w_full[i + 1] * g1
        xs[i + 1] = y[:n2]
        if i % 1024 == 0 and not np.all(np.abs(y) < BLOWUP):
            raise UnstableSimulation(f"state norm exceeded {BLOWUP:g} at t={(i + 1) * h:g}")
    if not np.all(np.abs(y) < BLOWUP):
        raise UnstableSimulation(f"state norm exceeded {BLOWUP:g}")
    return xs


def _integrate_trapezoid(sys, cfg, d, df, x0, wfun, nk):
    h = cfg.dt
    steps = cfg.steps
    n2 = 2 * sys.n
    mem = nk.shape[0] // 2
    causal = nk[mem:]  # N(j h), j = 0 .. mem
    p = sys.p.doubled
    w_full = wfun(np.arange(steps + 1) * h) if cfg.input in ("sinusoid", "chirp") else None
    cols = x0.shape[1]
    xs = np.zeros((steps + 1, n2, cols), dtype=complex)
    us = np.zeros((steps + 1, df.shape[0], cols), dtype=complex)
    xs[0] = x0
    us[0] = df @ x0
    n0 = causal[0]
    lhs = np.eye(n2) - 0.5 * h * p + 0.25 * h * h * d @ n0 @ df
    lhs_inv = np.linalg.inv(lhs)

    def history(i):
        # h * sum_j wt_j N((i - j) h) u_j over j in [max(0, i - mem), i - 1], trapezoid weight 1/2 at j=0
        lo = max(0, i - mem)
        js = np.arange(lo, i)
        if len(js) == 0:
            return np.zeros_like(us[0])
        wt = np.ones(len(js))
        if lo == 0:
            wt[0] = 0.5
        kern = causal[i - js]
        return h * np.einsum("j,jab,jbc->ac", wt, kern, us[js])

    # the memory integral is empty at t = 0
    f_prev = p @ xs[0]
    if w_full is not None:
        f_prev = f_prev - w_full[0] * d
    for i in range(steps):
        hist = history(i + 1)
        rhs = xs[i] + 0.5 * h * f_prev + 0.5 * h * (-d @ hist)
        if w_full is not None:
            rhs = rhs - 0.5 * h * w_full[i + 1] * d
        x_new = lhs_inv @ rhs
        xs[i + 1] = x_new
        us[i + 1] = df @ x_new
        conv = hist + 0.5 * h * n0 @ us[i + 1]
        f_prev = p @ x_new - d @ conv
        if w_full is not None:
            f_prev = f_prev - w_full[i + 1] * d
        if not np.all(np.abs(x_new) < BLOWUP):
            raise UnstableSimulation(f"state norm exceeded {BLOWUP:g} at t={(i + 1) * h:g}")
    return xs


def simulate_io(sys: IOSystem, cfg: SimulationConfig) -> SimulationResult:
    """Integrate the plant and field response for every unit input column."""
    _check_system(sys, cfg)
    if not sys.couplings:
        raise ValueError("system has no field coupling to drive")
    d, df = _couplings(sys)
    n2, k2 = 2 * sys.n, 2 * sys.k
    h = cfg.dt
    steps = cfg.steps
    mem = _memory_steps(sys, cfg)
    nk = _kernel_samples(sys, h, mem)

    cols = 1 if cfg.input == "none" else k2
    x0 = np.zeros((n2, cols), dtype=complex)
    if cfg.x0 is not None:
        x0 = x0 + np.asarray(cfg.x0, dtype=complex).reshape(n2, -1)
    if cfg.input == "impulse":
        # a unit delta input makes x jump by -D at t = 0
        x0 = x0 - d

    def wfun(times):
        return _input_samples(cfg, np.asarray(times), k2)

    if cfg.method == "rk4":
        lm, am, rm = _realizations(sys, 1)
        y0 = np.vstack([x0, np.zeros((am.shape[0], cols), dtype=complex)])
        xs = _integrate_rk4(sys, cfg, d, df, y0, wfun)
    else:
        xs = _integrate_trapezoid(sys, cfg, d, df, x0, wfun, nk)

    # output: trapezoid-weighted two-sided convolution of N with u = D.flat() x
    u = np.einsum("ab,tbc->tac", df, xs)
    wts = np.ones(steps + 1)
    wts[0] = wts[-1] = 0.5
    u = u * wts[:, None, None]
    conv = np.zeros((steps + 1 + 2 * mem, k2, cols), dtype=complex)
    for a_ in range(k2):
        for b_ in range(k2):
            if not np.any(nk[:, a_, b_]):
                continue
            conv[:, a_, :] += fftconvolve(nk[:, a_, b_][:, None], u[:, b_, :], axes=0)
    conv *= h
    # conv index i corresponds to time (i - mem) h; keep [-mem h, T]
    hout = conv[: steps + 1 + mem]
    t = (np.arange(steps + 1 + mem) - mem) * h
    x_full = np.zeros((len(t), n2, cols), dtype=complex)
    x_full[mem:] = xs
    f = wfun(t)
    w_in = np.zeros((len(t), k2, cols), dtype=complex)
    if cols == k2:
        w_in = f[:, None, None] * np.eye(k2)
    return SimulationResult(t=t, x=x_full, w_in=w_in, w_out=w_in + hout, cfg=cfg, lead=mem)


def _trapz_dft(y: np.ndarray, t: np.ndarray, omegas: np.ndarray) -> np.ndarray:
    """``int y(t) exp(-i w t) dt`` by the trapezoid rule, for each ``w``."""
    dt = t[1] - t[0]
    wts = np.full(len(t), dt)
    wts[0] = wts[-1] = 0.5 * dt
    out = np.empty((len(omegas),) + y.shape[1:], dtype=complex)
    flat = y.reshape(len(t), -1) * wts[:, None]
    for i, w in enumerate(omegas):
        out[i] = (np.exp(-1j * w * t) @ flat).reshape(y.shape[1:])
    return out


def _check_decay(y: np.ndarray, t: np.ndarray):
    energy = np.sum(np.abs(y) ** 2, axis=tuple(range(1, y.ndim)))
    total = energy.sum()
    tail = energy[t >= t[-1] - 0.1 * (t[-1] - t[0])].sum()
    if total > 0 and tail > 0.01 * total:
        raise InsufficientDecay(f"{100 * tail / total:.1f}% of the response energy lies in the last 10% of the horizon")


def empirical_frequency_response(res: SimulationResult, omegas) -> np.ndarray:
    """Estimate ``G(i w)`` (doubled, shape ``(len(w), 2k, 2k)``) from an impulse or chirp run."""
    omegas = np.asarray(omegas, dtype=float).reshape(-1)
    kind = res.cfg.input
    if kind == "impulse":
        _check_decay(res.h, res.t)
        k2 = res.h.shape[1]
        return np.eye(k2) + _trapz_dft(res.h, res.t, omegas)
    if kind == "chirp":
        _check_decay(res.h, res.t)
        f = _input_samples(res.cfg, res.t, res.h.shape[1])
        num = _trapz_dft(res.w_out, res.t, omegas)
        den = _trapz_dft(f, res.t, omegas)
        return num / den[:, None, None]
    raise ValueError(f"frequency response needs an impulse or chirp run, not {kind!r}")


def sinusoid_response(res: SimulationResult, at: float | None = None) -> np.ndarray:
    """Steady-state ratio ``w_out(t) exp(-i w t)`` at ``t = at`` (default mid-horizon)."""
    if res.cfg.input != "sinusoid":
        raise ValueError("sinusoid_response needs a sinusoid run")
    at = 0.5 * res.cfg.T if at is None else at
    i = int(np.argmin(np.abs(res.t - at)))
    return res.w_out[i] * np.exp(-1j * res.cfg.omega * res.t[i])


def write_csv(res: SimulationResult, fh, n: int, k: int) -> None:
    """Impulse-response CSV: ``t``, then the Δ(α, β) parts of ``x`` and ``h`` per entry."""
    import csv

    cols = res.x.shape[2]
    header = ["t"]
    x_entries = [(j, c) for j in range(n) for c in range(cols // 2)]
    h_entries = [(r, c) for r in range(k) for c in range(cols // 2)]
    for j, c in x_entries:
        header += [f"x_{j + 1}_{c + 1}_{p}" for p in ("are", "aim", "bre", "bim")]
    for r, c in h_entries:
        header += [f"h_{r + 1}_{c + 1}_{p}" for p in ("are", "aim", "bre", "bim")]
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(header)
    hh = res.h
    for i, t in enumerate(res.t):
        row = [repr(float(t))]
        for arr, entries in ((res.x, x_entries), (hh, h_entries)):
            for j, c in entries:
                al = arr[i, 2 * j, 2 * c]
                be = arr[i, 2 * j, 2 * c + 1]
                row += [repr(float(al.real)), repr(float(al.imag)), repr(float(be.real)), repr(float(be.imag))]
        writer.writerow(row)
