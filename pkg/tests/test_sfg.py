from __future__ import annotations

import numpy as np
import pytest

from qnetflow.dmatrix import DMatrix
from qnetflow.errors import SingularAt
from qnetflow.sfg import (
    SignalFlowGraph,
    enumerate_forward_paths,
    frl_factor,
    gain_direct_solve,
    gain_riegle,
)
from qnetflow.tfcore import Constant, resolvent


def scalar(x: complex) -> Constant:
    return Constant(DMatrix.from_parts([[x]]))


def feedback_loop(g=2.0, h=0.25):
    sfg = SignalFlowGraph()
    for n in ("r", "w", "u", "y"):
        sfg.add_node(n, 1)
    sfg.add_arc("r", "u", scalar(1.0))
    sfg.add_arc("y", "u", scalar(h))
    sfg.add_arc("u", "y", scalar(g))
    sfg.add_arc("w", "y", scalar(1.0))
    return sfg


def random_graph(rng, n_nodes=5, p_arc=0.45):
    g = SignalFlowGraph()
    widths = rng.integers(1, 3, size=n_nodes)
    for j, w in enumerate(widths):
        g.add_node(f"n{j}", int(w))
    for a in range(n_nodes):
        for b in range(n_nodes):
            if a != b and rng.random() < p_arc:
                r, c = int(widths[b]), int(widths[a])
                val = 0.4 * DMatrix.from_parts(
                    rng.normal(size=(r, c)) + 1j * rng.normal(size=(r, c)),
                    0.3 * (rng.normal(size=(r, c)) + 1j * rng.normal(size=(r, c))),
                )
                g.add_arc(f"n{a}", f"n{b}", Constant(val))
    return g


def test_feedback_loop_gain():
    g = feedback_loop()
    s = np.array([0.3j, 1.0])
    for gain in (gain_riegle(g, "r", "y"), gain_direct_solve(g, "r", "y")):
        assert np.allclose(gain.evaluate(s), 4.0 * np.eye(2))
    assert np.allclose(gain_riegle(g, "w", "y").evaluate(s), 2.0 * np.eye(2))


def test_paths_sorted_and_simple():
    g = feedback_loop()
    assert enumerate_forward_paths(g, "r", "y") == [("r", "u", "y")]
    assert enumerate_forward_paths(g, "y", "r") == []


def test_frl_factor_at_loop_node():
    g = feedback_loop()
    f = frl_factor(g, ("r", "u", "y"), "u")
    # with y separated from the graph the node u has no return loop
    assert np.allclose(f.evaluate(1j), np.eye(2))
    f_sink = frl_factor(g, ("r", "u", "y"), "y")
    assert np.allclose(f_sink.evaluate(1j), 2.0 * np.eye(2))


def test_node_and_arc_validation():
    g = SignalFlowGraph()
    g.add_node("a", 1)
    g.add_node("b", 2)
    with pytest.raises(ValueError):
        g.add_node("a", 1)
    with pytest.raises(ValueError):
        g.add_arc("a", "b", scalar(1.0))
    with pytest.raises(KeyError):
        g.add_arc("a", "zz", scalar(1.0))
    with pytest.raises(KeyError):
        gain_riegle(g, "a", "zz")


def test_parallel_arcs_add():
    g = SignalFlowGraph()
    g.add_node("a", 1)
    g.add_node("b", 1)
    g.add_arc("a", "b", scalar(1.0))
    g.add_arc("a", "b", scalar(0.5j))
    assert np.isclose(gain_riegle(g, "a", "b").evaluate(2.0)[0, 0], 1.0 + 0.5j)


def test_self_loop():
    g = SignalFlowGraph()
    g.add_node("a", 1)
    g.add_node("b", 1)
    g.add_arc("a", "b", scalar(1.0))
    g.add_arc("b", "b", scalar(0.5))
    assert np.isclose(gain_riegle(g, "a", "b").evaluate(1.0)[0, 0], 2.0)
    assert np.isclose(gain_direct_solve(g, "a", "b").evaluate(1.0)[0, 0], 2.0)


def test_singular_loop_raises():
    g = SignalFlowGraph()
    g.add_node("a", 1)
    g.add_node("b", 1)
    g.add_arc("a", "b", scalar(1.0))
    g.add_arc("b", "a", scalar(1.0))
    with pytest.raises(SingularAt):
        gain_direct_solve(g, "a", "b").evaluate(1.0)
    with pytest.raises(SingularAt):
        gain_riegle(g, "a", "b").evaluate(1.0)


def test_dynamic_arcs():
    g = SignalFlowGraph()
    g.add_node("u", 1)
    g.add_node("x", 1)
    g.add_arc("u", "x", resolvent(DMatrix.from_parts([[1j]])))
    g.add_arc("x", "x", scalar(-0.5))
    s = np.array([0.4 + 2j])
    # x = (s - i)^-1 u - 0.5 x
    want = 1.0 / (1.5 * (s - 1j))
    assert np.allclose(gain_riegle(g, "u", "x").evaluate(s)[:, 0, 0], want)


@pytest.mark.parametrize("seed", range(8))
def test_riegle_matches_solve_random(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng)
    s = rng.normal(size=6) + 1j * rng.normal(size=6)
    nodes = g.nodes
    src, dst = nodes[0], nodes[-1]
    a = gain_riegle(g, src, dst).evaluate(s)
    b = gain_direct_solve(g, src, dst).evaluate(s)
    assert np.max(np.abs(a - b)) < 1e-9


def test_without_and_split():
    g = feedback_loop()
    h = g.without(["y"])
    assert "y" not in h.nodes and ("u", "y") not in h.arcs
    sp, src, snk = g.split("u")
    assert (src, "y") in sp.arcs and ("y", snk) in sp.arcs
    assert g.sources() == ["r", "w"]
    assert g.sinks() == []
