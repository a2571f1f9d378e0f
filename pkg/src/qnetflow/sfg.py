"""Signal flow graphs with D-matrix arc gains.

A node value is the sum, over its ingoing arcs, of arc gain times origin
value (plus any external injection).  Two ways of computing the gain between
two nodes are provided: a direct linear solve of the balance equations, and
Riegle's matrix gain rule (sum over forward paths, each interrupted by the
forward-return-loop factors of its nodes).
"""

from __future__ import annotations

from typing import Hashable, Iterable, Sequence

import numpy as np

from .dmatrix import COND_LIMIT
from .errors import SingularAt
from .tfcore import Pointwise, TransferMap, as_map


class SignalFlowGraph:
    def __init__(self):
        self._width: dict[Hashable, int] = {}
        self._arcs: dict[tuple[Hashable, Hashable], list[TransferMap]] = {}

    # -- construction -------------------------------------------------
    def add_node(self, name: Hashable, width: int) -> None:
        if name in self._width:
            raise ValueError(f"duplicate node {name!r}")
        if int(width) < 1:
            raise ValueError(f"node {name!r} needs a positive width")
        self._width[name] = int(width)

    def add_arc(self, src: Hashable, dst: Hashable, gain) -> None:
        gain = as_map(gain)
        for n in (src, dst):
            if n not in self._width:
                raise KeyError(f"unknown node {n!r}")
        want = (self._width[dst], self._width[src])
        if gain.shape != want:
            raise ValueError(f"arc {src!r} -> {dst!r}: gain shape {gain.shape} != {want}")
        self._arcs.setdefault((src, dst), []).append(gain)

    # -- queries --------------------------------------------------------
    @property
    def nodes(self) -> list[Hashable]:
        return list(self._width)

    def width(self, name: Hashable) -> int:
        return self._width[name]

    @property
    def arcs(self) -> list[tuple[Hashable, Hashable]]:
        return list(self._arcs)

    def arc_gains(self, src, dst) -> list[TransferMap]:
        return list(self._arcs.get((src, dst), []))

    def successors(self, name) -> list[Hashable]:
        return [d for (s, d) in self._arcs if s == name]

    def predecessors(self, name) -> list[Hashable]:
        return [s for (s, d) in self._arcs if d == name]

    def sources(self) -> list[Hashable]:
        """Nodes without ingoing arcs."""
        return [n for n in self._width if not self.predecessors(n)]

    def sinks(self) -> list[Hashable]:
        """Nodes without outgoing arcs."""
        return [n for n in self._width if not self.successors(n)]

    def without(self, removed: Iterable[Hashable]) -> SignalFlowGraph:
        """Copy with the given nodes and all their incident arcs deleted."""
        removed = set(removed)
        g = SignalFlowGraph()
        for n, w in self._width.items():
            if n not in removed:
                g._width[n] = w
        for (s, d), gains in self._arcs.items():
            if s not in removed and d not in removed:
                g._arcs[(s, d)] = list(gains)
        return g

    def split(self, name: Hashable) -> tuple[SignalFlowGraph, tuple, tuple]:
        """Split ``name`` into a source copy (outgoing arcs) and a sink copy (ingoing arcs)."""
        src, snk = (name, "out"), (name, "in")
        g = SignalFlowGraph()
        for n, w in self._width.items():
            if n == name:
                g._width[src] = w
                g._width[snk] = w
            else:
                g._width[n] = w
        for (s, d), gains in self._arcs.items():
            g._arcs[(src if s == name else s, snk if d == name else d)] = list(gains)
        return g, src, snk

    # -- evaluation -----------------------------------------------------
    def _arc_values(self, s: np.ndarray) -> dict[tuple, np.ndarray]:
        out = {}
        for key, gains in self._arcs.items():
            v = gains[0]._eval(s)
            for gm in gains[1:]:
                v = v + gm._eval(s)
            out[key] = v
        return out


def _solve_block(
    g: SignalFlowGraph, arcs: dict[tuple, np.ndarray], source, sink, s: np.ndarray
) -> np.ndarray:
    """Block ``(sink, source)`` of ``(I - T(s))^-1`` for the nodes of ``g``."""
    nodes = g.nodes
    off, pos = {}, 0
    for n in nodes:
        off[n] = pos
        pos += 2 * g.width(n)
    ns = len(s)
    a = np.broadcast_to(np.eye(pos, dtype=complex), (ns, pos, pos)).copy()
    for (u, v) in g.arcs:
        val = arcs[(u, v)] if (u, v) in arcs else None
        if val is None:
            continue
        ru, rv = off[u], off[v]
        a[:, rv : rv + val.shape[1], ru : ru + val.shape[2]] -= val
    cond = np.linalg.cond(a)
    bad = ~(cond < COND_LIMIT)
    if np.any(bad):
        raise SingularAt(s[np.nonzero(bad)[0][0]], f"loop difference condition number {cond.max():.3g}")
    ws, wk = 2 * g.width(source), 2 * g.width(sink)
    rhs = np.zeros((ns, pos, ws), dtype=complex)
    rhs[:, off[source] : off[source] + ws, :] = np.eye(ws)
    x = np.linalg.solve(a, rhs)
    return x[:, off[sink] : off[sink] + wk, :]


def _check_nodes(g: SignalFlowGraph, *names):
    for n in names:
        if n not in g._width:
            raise KeyError(f"unknown node {n!r}")


def gain_direct_solve(g: SignalFlowGraph, source, sink) -> TransferMap:
    """Gain from an injection at ``source`` to the value of ``sink``."""
    _check_nodes(g, source, sink)

    def fn(s):
        return _solve_block(g, g._arc_values(s), source, sink, s)

    return Pointwise(fn, (g.width(sink), g.width(source)), f"solve {source}->{sink}")


def enumerate_forward_paths(g: SignalFlowGraph, source, sink) -> list[tuple]:
    """All simple paths from ``source`` to ``sink``, sorted by node names."""
    _check_nodes(g, source, sink)
    succ: dict = {}
    for (u, v) in g.arcs:
        if u != v:
            succ.setdefault(u, []).append(v)
    paths: list[tuple] = []

    def walk(path: list, seen: set):
        here = path[-1]
        if here == sink:
            paths.append(tuple(path))
            return
        for nxt in succ.get(here, []):
            if nxt not in seen:
                seen.add(nxt)
                path.append(nxt)
                walk(path, seen)
                path.pop()
                seen.discard(nxt)

    walk([source], {source})
    return sorted(paths, key=lambda p: [str(n) for n in p])


def _frl_eval(g: SignalFlowGraph, arcs: dict, node, removed: frozenset, s: np.ndarray) -> np.ndarray:
    reduced = g.without(removed)
    split, src, snk = reduced.split(node)
    split_arcs = {}
    for (u, v) in split.arcs:
        ou = node if u == src else u
        ov = node if v == snk else v
        split_arcs[(u, v)] = arcs[(ou, ov)]
    loop = _solve_block(split, split_arcs, src, snk, s)
    eye = np.eye(loop.shape[-1])
    diff = eye - loop
    cond = np.linalg.cond(diff)
    bad = ~(cond < COND_LIMIT)
    if np.any(bad):
        raise SingularAt(s[np.nonzero(bad)[0][0]], f"loop difference at {node!r} is singular")
    return np.linalg.inv(diff)


def _downstream(path: Sequence, node) -> frozenset:
    idx = list(path).index(node)
    return frozenset(path[idx + 1 :])


def frl_factor(g: SignalFlowGraph, path: Sequence, node) -> TransferMap:
    """Forward-return-loop factor of ``node`` on ``path``.

    The path nodes downstream of ``node`` are separated from the graph, the
    node is split into a source copy and a sink copy, and the result is the
    inverse of the loop difference ``I - gain(source copy -> sink copy)``.
    """
    if node not in path:
        raise ValueError(f"{node!r} is not on the path")
    _check_nodes(g, *path)
    removed = _downstream(path, node)

    def fn(s):
        return _frl_eval(g, g._arc_values(s), node, removed, s)

    w = g.width(node)
    return Pointwise(fn, (w, w), f"frl {node}")


def _riegle_eval(g: SignalFlowGraph, paths: list[tuple], source, sink, s: np.ndarray) -> np.ndarray:
    arcs = g._arc_values(s)
    cache: dict[tuple, np.ndarray] = {}

    def frl(node, removed):
        key = (node, removed)
        if key not in cache:
            cache[key] = _frl_eval(g, arcs, node, removed, s)
        return cache[key]

    total = np.zeros((len(s), 2 * g.width(sink), 2 * g.width(source)), dtype=complex)
    for path in paths:
        acc = frl(path[0], frozenset(path[1:]))
        for i in range(1, len(path)):
            acc = arcs[(path[i - 1], path[i])] @ acc
            acc = frl(path[i], frozenset(path[i + 1 :])) @ acc
        total = total + acc
    return total


def gain_riegle(g: SignalFlowGraph, source, sink) -> TransferMap:
    """Riegle's matrix gain rule.

    Each forward path ``v0 -> ... -> vL`` contributes
    ``F(vL) g_L F(v_{L-1}) ... g_1 F(v0)``, where ``F(v)`` is the FRL factor of
    ``v`` with the path nodes after ``v`` separated.  ``F`` of a node without
    return loops is the identity.
    """
    paths = enumerate_forward_paths(g, source, sink)

    def fn(s):
        return _riegle_eval(g, paths, source, sink, s)

    return Pointwise(fn, (g.width(sink), g.width(source)), f"riegle {source}->{sink}")
