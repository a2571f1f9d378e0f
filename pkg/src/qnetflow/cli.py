"""Command-line front end.

Exit codes: 0 success, 1 a check failed, 2 the network file could not be
read or parsed, 3 evaluation failed (singular frequency, unstable
simulation), 4 bad command-line flags.
"""

from __future__ import annotations

import argparse
import csv
import sys
from contextlib import contextmanager

import numpy as np

from .dmatrix import classify_modes, flat_array
from .errors import QNetError, SingularAt
from .netdsl import ErrorCode, NetDSLError, build_graph, build_systems, parse_file
from .sfg import gain_direct_solve, gain_riegle

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_SINGULAR, EXIT_FLAGS = 0, 1, 2, 3, 4


class FlagError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise FlagError(message)


def _sweep(args) -> np.ndarray:
    if args.points < 2:
        raise FlagError("--points must be at least 2")
    if not args.wmin < args.wmax:
        raise FlagError("--wmin must be smaller than --wmax")
    if args.scale == "log":
        if args.wmin <= 0:
            raise FlagError("log sweeps need --wmin > 0")
        return np.logspace(np.log10(args.wmin), np.log10(args.wmax), args.points)
    return np.linspace(args.wmin, args.wmax, args.points)


def _load(args):
    try:
        spec = parse_file(args.input)
    except OSError as exc:
        raise NetDSLError(ErrorCode.SYNTAX, f"cannot read {args.input}: {exc.strerror}", None) from None
    return spec


def _endpoints(args, spec):
    src, dst = args.src, args.dst
    if src is None or dst is None:
        if not spec.queries:
            raise NetDSLError(ErrorCode.NO_QUERY, "no query in the file and no --from/--to given", None)
        q = spec.queries[0]
        src = q.src if src is None else src
        dst = q.dst if dst is None else dst
    names = {n.name for n in spec.nodes}
    for n in (src, dst):
        if n not in names:
            raise FlagError(f"unknown node {n!r}")
    return src, dst


@contextmanager
def _output(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            yield fh


def _fmt(x) -> str:
    return repr(float(x))


def _gain_rows(omegas, vals):
    rows_n, cols_n = vals.shape[1] // 2, vals.shape[2] // 2
    header = ["omega"]
    for r in range(rows_n):
        for c in range(cols_n):
            header += [f"g_{r + 1}_{c + 1}_{p}" for p in ("are", "aim", "bre", "bim")]
    rows = []
    for w, g in zip(omegas, vals):
        row = [_fmt(w)]
        for r in range(rows_n):
            for c in range(cols_n):
                al, be = g[2 * r, 2 * c], g[2 * r, 2 * c + 1]
                row += [_fmt(al.real), _fmt(al.imag), _fmt(be.real), _fmt(be.imag)]
        rows.append(row)
    return header, rows


def cmd_gain(args) -> int:
    omegas = _sweep(args)
    spec = _load(args)
    src, dst = _endpoints(args, spec)
    g, _ = build_graph(spec)
    vals = gain_riegle(g, src, dst).evaluate(1j * omegas)
    header, rows = _gain_rows(omegas, vals)
    with _output(args.output) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return EXIT_OK


def cmd_check_unitarity(args) -> int:
    omegas = _sweep(args)
    spec = _load(args)
    src, dst = _endpoints(args, spec)
    g, _ = build_graph(spec)
    vals = gain_riegle(g, src, dst).evaluate(1j * omegas)
    if vals.shape[1] != vals.shape[2]:
        raise FlagError("unitarity needs a square gain (equal source and sink widths)")
    defect = np.linalg.norm(flat_array(vals) @ vals - np.eye(vals.shape[1]), axis=(1, 2))
    i = int(np.argmax(defect))
    ok = bool(defect[i] <= args.tol)
    print(f"max_defect={defect[i]:.6e} omega={omegas[i]:.6g} tol={args.tol:g} {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_classify(args) -> int:
    spec = _load(args)
    systems = {s.name: s for s in spec.systems}
    if not systems:
        raise NetDSLError(ErrorCode.UNRESOLVED, "the file declares no system", None)
    name = args.system or spec.systems[0].name
    if name not in systems:
        raise FlagError(f"unknown system {name!r}")
    modes = classify_modes(systems[name].p)
    print("mode,a,C,medium,squeezing")
    for j, m in enumerate(modes, start=1):
        print(f"{j},{m.a:.12g},{m.C:.12g},{m.labels[0]},{m.labels[1]}")
    return EXIT_OK


def cmd_riegle_vs_solve(args) -> int:
    if args.samples < 1:
        raise FlagError("--samples must be positive")
    spec = _load(args)
    src, dst = _endpoints(args, spec)
    g, _ = build_graph(spec)
    rng = np.random.default_rng(args.seed)
    s = rng.uniform(0.1, 2.0, args.samples) + 1j * rng.uniform(-10.0, 10.0, args.samples)
    a = gain_riegle(g, src, dst).evaluate(s)
    b = gain_direct_solve(g, src, dst).evaluate(s)
    dev = float(np.max(np.abs(a - b))) if a.size else 0.0
    ok = dev <= args.tol
    print(f"max_deviation={dev:.6e} samples={args.samples} seed={args.seed} {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_simulate(args) -> int:
    from .timedomain import SimulationConfig, simulate_io, write_csv

    spec = _load(args)
    systems = build_systems(spec)
    if not systems:
        raise NetDSLError(ErrorCode.UNRESOLVED, "the file declares no system", None)
    name = args.system or spec.systems[0].name
    if name not in systems:
        raise FlagError(f"unknown system {name!r}")
    sysm = systems[name]
    if not sysm.couplings:
        raise FlagError(f"system {name!r} has no field coupling")
    try:
        cfg = SimulationConfig(dt=args.dt, T=args.T, input="impulse")
        res = simulate_io(sysm, cfg)
    except ValueError as exc:
        raise FlagError(str(exc)) from None
    with _output(args.output) as fh:
        write_csv(res, fh, sysm.n, sysm.k)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qnetflow", description="Frequency-domain analysis of linear quantum networks.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def common(sp, nodes=True):
        sp.add_argument("-i", "--input", required=True, help="network file (.qn)")
        sp.add_argument("-o", "--output", default=None, help="output CSV (default: stdout)")
        if nodes:
            sp.add_argument("--from", dest="src", default=None, help="source node (default: first query)")
            sp.add_argument("--to", dest="dst", default=None, help="sink node (default: first query)")

    def sweep(sp):
        sp.add_argument("--wmin", type=float, default=0.1)
        sp.add_argument("--wmax", type=float, default=10.0)
        sp.add_argument("--points", type=int, default=100)
        sp.add_argument("--scale", choices=("log", "linear"), default="log")

    sp = sub.add_parser("gain", help="frequency response of a node-to-node gain")
    common(sp)
    sweep(sp)
    sp.set_defaults(func=cmd_gain)

    sp = sub.add_parser("check-unitarity", help="max flat-unitarity defect over a sweep")
    common(sp)
    sweep(sp)
    sp.add_argument("--tol", type=float, default=1e-9)
    sp.set_defaults(func=cmd_check_unitarity)

    sp = sub.add_parser("classify", help="mode invariants of a system generator")
    common(sp, nodes=False)
    sp.add_argument("--system", default=None)
    sp.set_defaults(func=cmd_classify)

    sp = sub.add_parser("riegle-vs-solve", help="compare the path rule with a direct solve")
    common(sp)
    sp.add_argument("--samples", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--tol", type=float, default=1e-9)
    sp.set_defaults(func=cmd_riegle_vs_solve)

    sp = sub.add_parser("simulate", help="impulse response in the time domain")
    common(sp, nodes=False)
    sp.add_argument("--system", default=None)
    sp.add_argument("--dt", type=float, default=1e-3)
    sp.add_argument("--T", dest="T", type=float, default=200.0)
    sp.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except FlagError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FLAGS
    except NetDSLError as exc:
        print(f"{getattr(args, 'input', '')}:{exc}", file=sys.stderr)
        return EXIT_PARSE
    except SingularAt as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SINGULAR
    except QNetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SINGULAR


def run() -> None:
    sys.exit(main())
