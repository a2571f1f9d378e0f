from __future__ import annotations

import numpy as np
import pytest
from scipy.integrate import quad

from qnetflow.dmatrix import DMatrix, flat_array
from qnetflow.dring import E, I, J
from qnetflow.errors import SingularAt, Unsupported
from qnetflow.tfcore import (
    Constant,
    Delay,
    ExpMode,
    Lorentzian,
    MarkovDelta,
    generator_from_hamiltonian,
    identity_map,
    resolvent,
    system_M,
)


def test_lorentzian_half_laplace_closed_form():
    kern = Lorentzian(1.0, 2.0)
    s = np.array([0.3 + 1j, 1.0 - 2j])
    npl = kern.npm(1).evaluate(s)
    nmi = kern.npm(-1).evaluate(s)
    assert np.allclose(npl[:, 0, 0], 1.0 / (s + 2.0))
    assert np.allclose(nmi[:, 0, 0], 1.0 / (-s + 2.0))
    assert np.allclose(npl[:, 0, 1], 0)


@pytest.mark.parametrize("s", [0.5 + 0.7j, 0.3 - 3.0j])
def test_half_laplace_by_quadrature(s):
    q = DMatrix.from_entries([[E * -0.8 + I * 1.5]])
    e = DMatrix.from_entries([[E * 0.9 + J * 0.2]])
    kern = ExpMode(e, q)

    def integral(sign):
        def part(t, fn):
            return fn(kern.time(sign * t).doubled[0, 0] * np.exp(-s * sign * t))

        re = quad(part, 0, 200, args=(np.real,), limit=800)[0]
        im = quad(part, 0, 200, args=(np.imag,), limit=800)[0]
        return re + 1j * im

    assert abs(kern.half_laplace(1, np.array([s]))[0, 0, 0] - integral(1)) < 1e-8
    assert abs(kern.half_laplace(-1, np.array([s]))[0, 0, 0] - integral(-1)) < 1e-8


def test_expmode_reproduces_lorentzian():
    kappa, gamma = 1.3, 0.7
    lor = Lorentzian(kappa, gamma)
    exp = ExpMode(DMatrix.identity(1) * np.sqrt(kappa * gamma / 2), DMatrix.identity(1) * -gamma)
    s = np.array([0.1 + 0.2j, 2.0 + 5j, -0.3j + 0.05])
    for sign in (1, -1):
        assert np.allclose(lor.half_laplace(sign, s), exp.half_laplace(sign, s))
    for t in (-1.0, 0.0, 2.5):
        assert lor.time(t).isclose(exp.time(t), atol=1e-12)


def test_kernel_flat_symmetry_in_time():
    q = DMatrix.from_entries([[E * -0.5 + I * 2.0 + J * 0.3]])
    e = DMatrix.from_entries([[E + J * 0.4]])
    kern = ExpMode(e, q)
    for t in (0.3, 1.7):
        assert kern.time(t).flat().isclose(kern.time(-t), atol=1e-12)


def test_markov_delta_halves():
    n0 = DMatrix.identity(2) * 3.0
    kern = MarkovDelta(n0)
    vals = kern.npm(1).evaluate(np.array([1j, 2.0]))
    assert np.allclose(vals, 1.5 * np.eye(4))
    with pytest.raises(Unsupported):
        kern.time(0.0)
    with pytest.raises(ValueError):
        MarkovDelta(DMatrix.from_entries([[I]]))


def test_lorentzian_rejects_bad_parameters():
    with pytest.raises(ValueError):
        Lorentzian(-1.0, 1.0)
    with pytest.raises(ValueError):
        Lorentzian(1.0, 0.0)


def test_resolvent_and_singularity():
    p = DMatrix.from_entries([[I * 2.0]])
    r = resolvent(p)
    assert np.isclose(r.evaluate(1j)[0, 0], 1.0 / (1j - 2j))
    with pytest.raises(SingularAt) as info:
        r.evaluate(np.array([1.0, 2j]))
    assert info.value.s == 2j


def test_delay_values():
    d = Delay([0.5, 1.0])
    v = d.evaluate(1j * np.pi)
    assert np.allclose(np.diag(v), [np.exp(-0.5j * np.pi)] * 2 + [np.exp(-1j * np.pi)] * 2)
    assert d.tilde().evaluate(0.3j).shape == (4, 4)
    assert np.allclose(d.tilde().evaluate(0.3j) @ d.evaluate(0.3j), np.eye(4))


def test_composition_algebra():
    a = Constant(DMatrix.from_entries([[E * 2.0]]))
    b = resolvent(DMatrix.from_entries([[I]]))
    s = np.array([0.5 + 1j])
    assert np.allclose((a @ b).evaluate(s), a.evaluate(s) @ b.evaluate(s))
    assert np.allclose((a + b - a).evaluate(s), b.evaluate(s))
    assert np.allclose((2.0 * b).evaluate(s), 2 * b.evaluate(s))
    assert np.allclose((identity_map(1) + b).inv().evaluate(s) @ (identity_map(1) + b).evaluate(s), np.eye(2))
    with pytest.raises(ValueError):
        identity_map(2) + b


def test_scalar_call_returns_dmatrix():
    b = resolvent(DMatrix.from_entries([[I]]))
    assert isinstance(b(0.5), DMatrix)
    with pytest.raises(TypeError):
        b(np.array([0.5, 1.0]))


def test_m_tilde_is_minus_m(rng):
    p = generator_from_hamiltonian(2, [0.3, 1.1], alpha=np.array([[0, 0.4 + 0.1j], [0, 0]]), beta=np.array([[0.2, 0.3], [0, 0.1]]))
    d = DMatrix.from_parts(rng.normal(size=(2, 1)) + 1j * rng.normal(size=(2, 1)), rng.normal(size=(2, 1)))
    m = system_M(p, d)
    s = rng.normal(size=5) + 1j * rng.normal(size=5)
    assert np.allclose(m.tilde().evaluate(s), -m.evaluate(s), atol=1e-12)
    assert np.allclose(flat_array(m.evaluate(-np.conj(s))), -m.evaluate(s), atol=1e-12)


def test_generator_shape_errors():
    with pytest.raises(ValueError):
        generator_from_hamiltonian(2, [1.0])
