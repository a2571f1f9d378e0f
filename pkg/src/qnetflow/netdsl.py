"""Parser for ``.qn`` network descriptions.

The format is line oriented; ``#`` starts a comment.  Statements::

    system <id> modes <int> P <dmat>
    kernel <id> lorentzian kappa=<float> gamma=<float> [size=<int>]
    kernel <id> markov n0=<dmat>
    kernel <id> expmode E=<dmat> Q=<dmat>
    couple <system-id> <kernel-id> D=<dmat>
    splitter <id> t1=<dmat> r1=<dmat> r2=<dmat> t2=<dmat>
    delay <id> tau=<float>
    node <id> width <int>
    arc <from> -> <to> gain <term> ( * <term> )*
    query gain from <node> to <node>

A term is a D-matrix literal, ``io(<system>)`` (field transfer function of a
coupled system), ``res(<system>)`` (the resolvent ``(sI - P)^-1``),
``delay(<id>)`` or ``sp(<splitter>.<t1|r1|r2|t2>)``.  Products compose like
matrices: the rightmost term acts on the signal first.  Ring literals are
``d(a,b,c,d)`` (basis coefficients) or ``c(re alpha, im alpha, re beta, im beta)``;
matrices are ``[p, q ; r, s]``.

Every error is a :class:`NetDSLError` with a machine-readable
:class:`ErrorCode` and a source span.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .dmatrix import DMatrix, is_flat_hermitian, is_skew_flat_hermitian
from .dring import DNum
from .errors import NotPassive, QNetError
from .netlib import IOSystem, beam_splitter, delay as make_delay, io_transfer_multi
from .sfg import SignalFlowGraph
from .tfcore import Constant, ExpMode, Lorentzian, MarkovDelta, MemoryKernel, TransferMap, resolvent


class ErrorCode(str, enum.Enum):
    SYNTAX = "E_SYNTAX"
    UNKNOWN_STATEMENT = "E_UNKNOWN_STATEMENT"
    UNRESOLVED = "E_UNRESOLVED"
    DUPLICATE = "E_DUPLICATE"
    SHAPE = "E_SHAPE"
    VALUE = "E_VALUE"
    NO_QUERY = "E_NO_QUERY"


@dataclass(frozen=True)
class Span:
    line: int
    col: int
    end_col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


class NetDSLError(QNetError):
    def __init__(self, code: ErrorCode, message: str, span: Span | None):
        self.code = code
        self.message = message
        self.span = span
        where = f"{span}: " if span else ""
        super().__init__(f"{where}{code.value}: {message}")


# -- declarations -------------------------------------------------------------------

_SPAN = dict(compare=False, repr=False, default=None)


@dataclass
class SystemDecl:
    name: str
    modes: int
    p: DMatrix
    span: Span | None = field(**_SPAN)


@dataclass
class KernelDecl:
    name: str
    kind: str  # lorentzian | markov | expmode
    params: dict
    span: Span | None = field(**_SPAN)


@dataclass
class CoupleDecl:
    system: str
    kernel: str
    d: DMatrix
    span: Span | None = field(**_SPAN)


@dataclass
class SplitterDecl:
    name: str
    parts: dict
    span: Span | None = field(**_SPAN)


@dataclass
class DelayDecl:
    name: str
    tau: float
    span: Span | None = field(**_SPAN)


@dataclass
class NodeDecl:
    name: str
    width: int
    span: Span | None = field(**_SPAN)


@dataclass
class Term:
    kind: str  # dmat | io | res | delay | sp
    ref: object  # DMatrix for dmat, name for io/res/delay, (splitter, part) for sp
    span: Span | None = field(**_SPAN)


@dataclass
class ArcDecl:
    src: str
    dst: str
    terms: list[Term]
    span: Span | None = field(**_SPAN)


@dataclass
class QueryDecl:
    src: str
    dst: str
    span: Span | None = field(**_SPAN)


Decl = Union[SystemDecl, KernelDecl, CoupleDecl, SplitterDecl, DelayDecl, NodeDecl, ArcDecl, QueryDecl]


@dataclass
class NetworkSpec:
    decls: list = field(default_factory=list)

    def _of(self, cls):
        return [d for d in self.decls if isinstance(d, cls)]

    @property
    def systems(self) -> list[SystemDecl]:
        return self._of(SystemDecl)

    @property
    def kernels(self) -> list[KernelDecl]:
        return self._of(KernelDecl)

    @property
    def couplings(self) -> list[CoupleDecl]:
        return self._of(CoupleDecl)

    @property
    def splitters(self) -> list[SplitterDecl]:
        return self._of(SplitterDecl)

    @property
    def delays(self) -> list[DelayDecl]:
        return self._of(DelayDecl)

    @property
    def nodes(self) -> list[NodeDecl]:
        return self._of(NodeDecl)

    @property
    def arcs(self) -> list[ArcDecl]:
        return self._of(ArcDecl)

    @property
    def queries(self) -> list[QueryDecl]:
        return self._of(QueryDecl)


# -- lexer ----------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\f\v]+)
  | (?P<arrow>->)
  | (?P<number>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[\[\](),;=*.])
    """,
    re.VERBOSE | re.ASCII,
)


@dataclass
class Token:
    kind: str
    text: str
    span: Span


def _lex(line: str, lineno: int) -> list[Token]:
    out = []
    pos = 0
    while pos < len(line):
        m = _TOKEN_RE.match(line, pos)
        if m is None:
            raise NetDSLError(
                ErrorCode.SYNTAX, f"unexpected character {line[pos]!r}", Span(lineno, pos + 1, pos + 2)
            )
        kind = m.lastgroup
        if kind != "ws":
            out.append(Token(kind, m.group(), Span(lineno, pos + 1, m.end() + 1)))
        pos = m.end()
    return out


class _Cursor:
    def __init__(self, tokens: list[Token], lineno: int, line_len: int):
        self.toks = tokens
        self.i = 0
        self.lineno = lineno
        self.eol = Span(lineno, line_len + 1, line_len + 2)

    def peek(self) -> Token | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def next(self, what: str) -> Token:
        tok = self.peek()
        if tok is None:
            raise NetDSLError(ErrorCode.SYNTAX, f"expected {what}, found end of line", self.eol)
        self.i += 1
        return tok

    def expect(self, text: str) -> Token:
        tok = self.next(repr(text))
        if tok.text != text:
            raise NetDSLError(ErrorCode.SYNTAX, f"expected {text!r}, found {tok.text!r}", tok.span)
        return tok

    def ident(self, what: str = "identifier") -> Token:
        tok = self.next(what)
        if tok.kind != "ident":
            raise NetDSLError(ErrorCode.SYNTAX, f"expected {what}, found {tok.text!r}", tok.span)
        return tok

    def number(self) -> tuple[float, Token]:
        tok = self.next("number")
        if tok.kind != "number":
            raise NetDSLError(ErrorCode.SYNTAX, f"expected a number, found {tok.text!r}", tok.span)
        val = float(tok.text)
        if not math.isfinite(val):
            raise NetDSLError(ErrorCode.VALUE, f"number {tok.text} is out of range", tok.span)
        return val, tok

    def integer(self) -> tuple[int, Token]:
        tok = self.next("integer")
        if tok.kind != "number" or not tok.text.isdigit():
            raise NetDSLError(ErrorCode.SYNTAX, f"expected a non-negative integer, found {tok.text!r}", tok.span)
        return int(tok.text), tok

    def done(self):
        tok = self.peek()
        if tok is not None:
            raise NetDSLError(ErrorCode.SYNTAX, f"unexpected {tok.text!r} at end of statement", tok.span)


def _span_join(a: Span, b: Span) -> Span:
    return Span(a.line, a.col, b.end_col)


# -- literal parsing ------------------------------------------------------------------


def _dnum(cur: _Cursor) -> DNum:
    head = cur.ident("ring literal d(...) or c(...)")
    if head.text not in ("d", "c"):
        raise NetDSLError(ErrorCode.SYNTAX, f"expected d(...) or c(...), found {head.text!r}", head.span)
    cur.expect("(")
    vals = []
    for k in range(4):
        if k:
            cur.expect(",")
        vals.append(cur.number()[0])
    cur.expect(")")
    if head.text == "d":
        return DNum(*vals)
    return DNum.from_complex(complex(vals[0], vals[1]), complex(vals[2], vals[3]))


def _dmat(cur: _Cursor) -> tuple[DMatrix, Span]:
    start = cur.expect("[")
    rows: list[list[DNum]] = [[_dnum(cur)]]
    while True:
        tok = cur.next("',', ';' or ']'")
        if tok.text == ",":
            rows[-1].append(_dnum(cur))
        elif tok.text == ";":
            rows.append([_dnum(cur)])
        elif tok.text == "]":
            span = _span_join(start.span, tok.span)
            break
        else:
            raise NetDSLError(ErrorCode.SYNTAX, f"expected ',', ';' or ']', found {tok.text!r}", tok.span)
    if any(len(r) != len(rows[0]) for r in rows):
        raise NetDSLError(ErrorCode.SHAPE, "matrix rows have different lengths", span)
    return DMatrix.from_entries(rows), span


def _keyed(cur: _Cursor, key: str):
    tok = cur.ident(f"'{key}='")
    if tok.text != key:
        raise NetDSLError(ErrorCode.SYNTAX, f"expected '{key}=', found {tok.text!r}", tok.span)
    cur.expect("=")
    return tok


# -- statements -------------------------------------------------------------------------


def _parse_system(cur, kw):
    name = cur.ident("system name")
    kw_modes = cur.ident("'modes'")
    if kw_modes.text != "modes":
        raise NetDSLError(ErrorCode.SYNTAX, f"expected 'modes', found {kw_modes.text!r}", kw_modes.span)
    modes, _ = cur.integer()
    kw_p = cur.ident("'P'")
    if kw_p.text != "P":
        raise NetDSLError(ErrorCode.SYNTAX, f"expected 'P', found {kw_p.text!r}", kw_p.span)
    p, pspan = _dmat(cur)
    cur.done()
    return SystemDecl(name.text, modes, p, _span_join(kw.span, pspan)), {"name": name.span, "P": pspan}


def _parse_kernel(cur, kw):
    name = cur.ident("kernel name")
    kind = cur.ident("kernel kind")
    spans = {"name": name.span}
    if kind.text == "lorentzian":
        _keyed(cur, "kappa")
        kappa, tk = cur.number()
        _keyed(cur, "gamma")
        gamma, tg = cur.number()
        params = {"kappa": kappa, "gamma": gamma}
        spans.update(kappa=tk.span, gamma=tg.span)
        if cur.peek() is not None:
            _keyed(cur, "size")
            size, ts = cur.integer()
            params["size"] = size
            spans["size"] = ts.span
    elif kind.text == "markov":
        _keyed(cur, "n0")
        n0, sp = _dmat(cur)
        params = {"n0": n0}
        spans["n0"] = sp
    elif kind.text == "expmode":
        _keyed(cur, "E")
        e, se = _dmat(cur)
        _keyed(cur, "Q")
        q, sq = _dmat(cur)
        params = {"E": e, "Q": q}
        spans.update(E=se, Q=sq)
    else:
        raise NetDSLError(
            ErrorCode.SYNTAX, f"unknown kernel kind {kind.text!r} (lorentzian, markov, expmode)", kind.span
        )
    last = cur.toks[cur.i - 1].span
    cur.done()
    return KernelDecl(name.text, kind.text, params, _span_join(kw.span, last)), spans


def _parse_couple(cur, kw):
    sys_tok = cur.ident("system name")
    ker_tok = cur.ident("kernel name")
    _keyed(cur, "D")
    d, sd = _dmat(cur)
    cur.done()
    return CoupleDecl(sys_tok.text, ker_tok.text, d, _span_join(kw.span, sd)), {
        "system": sys_tok.span,
        "kernel": ker_tok.span,
        "D": sd,
    }


def _parse_splitter(cur, kw):
    name = cur.ident("splitter name")
    parts, spans = {}, {"name": name.span}
    for key in ("t1", "r1", "r2", "t2"):
        _keyed(cur, key)
        parts[key], spans[key] = _dmat(cur)
    cur.done()
    return SplitterDecl(name.text, parts, _span_join(kw.span, spans["t2"])), spans


def _parse_delay(cur, kw):
    name = cur.ident("delay name")
    _keyed(cur, "tau")
    tau, tt = cur.number()
    cur.done()
    return DelayDecl(name.text, tau, _span_join(kw.span, tt.span)), {"name": name.span, "tau": tt.span}


def _parse_node(cur, kw):
    name = cur.ident("node name")
    kw_w = cur.ident("'width'")
    if kw_w.text != "width":
        raise NetDSLError(ErrorCode.SYNTAX, f"expected 'width', found {kw_w.text!r}", kw_w.span)
    width, tw = cur.integer()
    cur.done()
    return NodeDecl(name.text, width, _span_join(kw.span, tw.span)), {"name": name.span, "width": tw.span}


_REF_TERMS = ("io", "res", "delay", "sp")


def _parse_term(cur) -> Term:
    tok = cur.peek()
    if tok is None:
        cur.next("gain term")
    if tok.text == "[":
        m, span = _dmat(cur)
        return Term("dmat", m, span)
    head = cur.ident("gain term")
    if head.text not in _REF_TERMS:
        raise NetDSLError(
            ErrorCode.SYNTAX,
            f"unknown gain term {head.text!r} (matrix, io(...), res(...), delay(...), sp(...))",
            head.span,
        )
    cur.expect("(")
    ref = cur.ident("identifier")
    if head.text == "sp":
        cur.expect(".")
        part = cur.ident("splitter part")
        if part.text not in ("t1", "r1", "r2", "t2"):
            raise NetDSLError(ErrorCode.SYNTAX, f"splitter part must be t1, r1, r2 or t2, not {part.text!r}", part.span)
        close = cur.expect(")")
        return Term("sp", (ref.text, part.text), _span_join(head.span, close.span))
    close = cur.expect(")")
    return Term(head.text, ref.text, _span_join(head.span, close.span))


def _parse_arc(cur, kw):
    src = cur.ident("source node")
    cur.expect("->")
    dst = cur.ident("target node")
    g = cur.ident("'gain'")
    if g.text != "gain":
        raise NetDSLError(ErrorCode.SYNTAX, f"expected 'gain', found {g.text!r}", g.span)
    terms = [_parse_term(cur)]
    while cur.peek() is not None:
        cur.expect("*")
        terms.append(_parse_term(cur))
    return ArcDecl(src.text, dst.text, terms, _span_join(kw.span, terms[-1].span)), {
        "src": src.span,
        "dst": dst.span,
    }


def _parse_query(cur, kw):
    for word in ("gain", "from"):
        tok = cur.ident(f"'{word}'")
        if tok.text != word:
            raise NetDSLError(ErrorCode.SYNTAX, f"expected '{word}', found {tok.text!r}", tok.span)
    src = cur.ident("node name")
    tok = cur.ident("'to'")
    if tok.text != "to":
        raise NetDSLError(ErrorCode.SYNTAX, f"expected 'to', found {tok.text!r}", tok.span)
    dst = cur.ident("node name")
    cur.done()
    return QueryDecl(src.text, dst.text, _span_join(kw.span, dst.span)), {"src": src.span, "dst": dst.span}


_STATEMENTS = {
    "system": _parse_system,
    "kernel": _parse_kernel,
    "couple": _parse_couple,
    "splitter": _parse_splitter,
    "delay": _parse_delay,
    "node": _parse_node,
    "arc": _parse_arc,
    "query": _parse_query,
}


# -- semantic checks ------------------------------------------------------------------


def _kernel_size(decl: KernelDecl) -> int:
    if decl.kind == "lorentzian":
        return int(decl.params.get("size", 1))
    if decl.kind == "markov":
        return decl.params["n0"].rows
    return decl.params["E"].cols


def _check(spec: NetworkSpec, spans: dict[int, dict]) -> None:
    tables: dict[str, dict[str, object]] = {k: {} for k in ("system", "kernel", "splitter", "delay", "node")}
    coupled: dict[str, list] = {}

    def declare(kind, decl, key_span):
        if decl.name in tables[kind]:
            raise NetDSLError(ErrorCode.DUPLICATE, f"{kind} {decl.name!r} is already declared", key_span)
        tables[kind][decl.name] = decl

    # names first so that statements may refer forward
    for decl in spec.decls:
        s = spans[id(decl)]
        for kind, cls in (
            ("system", SystemDecl),
            ("kernel", KernelDecl),
            ("splitter", SplitterDecl),
            ("delay", DelayDecl),
            ("node", NodeDecl),
        ):
            if isinstance(decl, cls):
                declare(kind, decl, s["name"])

    def lookup(kind, name, span):
        if name not in tables[kind]:
            raise NetDSLError(ErrorCode.UNRESOLVED, f"unknown {kind} {name!r}", span)
        return tables[kind][name]

    def check_one(decl, s):
        if isinstance(decl, SystemDecl):
            if decl.modes < 1:
                raise NetDSLError(ErrorCode.VALUE, "a system needs at least one mode", decl.span)
            if decl.p.shape != (decl.modes, decl.modes):
                raise NetDSLError(
                    ErrorCode.SHAPE, f"P is {decl.p.rows}x{decl.p.cols} but the system has {decl.modes} modes", s["P"]
                )
            if not is_skew_flat_hermitian(decl.p, 1e-12):
                raise NetDSLError(ErrorCode.VALUE, "P must be skew flat-Hermitian", s["P"])
        elif isinstance(decl, KernelDecl):
            if decl.kind == "lorentzian":
                for key in ("kappa", "gamma"):
                    if not decl.params[key] > 0:
                        raise NetDSLError(ErrorCode.VALUE, f"{key} must be positive", s[key])
                if decl.params.get("size", 1) < 1:
                    raise NetDSLError(ErrorCode.VALUE, "kernel size must be positive", s["size"])
            elif decl.kind == "markov":
                n0 = decl.params["n0"]
                if n0.rows != n0.cols:
                    raise NetDSLError(ErrorCode.SHAPE, "n0 must be square", s["n0"])
                if not is_flat_hermitian(n0, 1e-10):
                    raise NetDSLError(ErrorCode.VALUE, "n0 must be flat-Hermitian", s["n0"])
            else:
                e, q = decl.params["E"], decl.params["Q"]
                if q.rows != q.cols:
                    raise NetDSLError(ErrorCode.SHAPE, "Q must be square", s["Q"])
                if e.rows != q.rows:
                    raise NetDSLError(ErrorCode.SHAPE, f"E has {e.rows} rows but Q is {q.rows}x{q.cols}", s["E"])
        elif isinstance(decl, CoupleDecl):
            sysd = lookup("system", decl.system, s["system"])
            kerd = lookup("kernel", decl.kernel, s["kernel"])
            want = (sysd.modes, _kernel_size(kerd))
            if decl.d.shape != want:
                raise NetDSLError(ErrorCode.SHAPE, f"D must be {want[0]}x{want[1]}, got {decl.d.rows}x{decl.d.cols}", s["D"])
            coupled.setdefault(decl.system, []).append(decl)
        elif isinstance(decl, SplitterDecl):
            try:
                beam_splitter(**decl.parts)
            except NotPassive as exc:
                code = ErrorCode.SHAPE if "fit" in str(exc) else ErrorCode.VALUE
                raise NetDSLError(code, str(exc), decl.span) from None
        elif isinstance(decl, DelayDecl):
            if decl.tau < 0:
                raise NetDSLError(ErrorCode.VALUE, "tau must be non-negative", s["tau"])
        elif isinstance(decl, NodeDecl):
            if decl.width < 1:
                raise NetDSLError(ErrorCode.VALUE, "node width must be positive", s["width"])
        elif isinstance(decl, ArcDecl):
            src = lookup("node", decl.src, s["src"])
            dst = lookup("node", decl.dst, s["dst"])
            _term_shapes(decl, src.width, dst.width, tables, coupled, lookup)
        elif isinstance(decl, QueryDecl):
            lookup("node", decl.src, s["src"])
            lookup("node", decl.dst, s["dst"])

    for decl in spec.decls:
        try:
            check_one(decl, spans[id(decl)])
        except NetDSLError:
            raise
        except (ValueError, ArithmeticError, QNetError, np.linalg.LinAlgError) as exc:
            raise NetDSLError(ErrorCode.VALUE, str(exc), decl.span) from None


def _term_shape(term: Term, tables, coupled, lookup):
    """Shape of a term, or None for a delay whose size follows its neighbours."""
    if term.kind == "dmat":
        return term.ref.shape
    if term.kind == "io":
        lookup("system", term.ref, term.span)
        if term.ref not in coupled:
            raise NetDSLError(ErrorCode.VALUE, f"system {term.ref!r} has no field coupling", term.span)
        k = sum(c.d.cols for c in coupled[term.ref])
        return (k, k)
    if term.kind == "res":
        n = lookup("system", term.ref, term.span).modes
        return (n, n)
    if term.kind == "delay":
        lookup("delay", term.ref, term.span)
        return None
    name, part = term.ref
    return lookup("splitter", name, term.span).parts[part].shape


def _term_shapes(arc: ArcDecl, w_src: int, w_dst: int, tables, coupled, lookup) -> list[tuple[int, int]]:
    """Resolve shapes right to left; a delay takes the width of the signal it acts on."""
    shapes = [_term_shape(t, tables, coupled, lookup) for t in arc.terms]
    cur = w_src
    out = []
    for term, shape in zip(reversed(arc.terms), reversed(shapes)):
        if shape is None:
            shape = (cur, cur)
        elif shape[1] != cur:
            raise NetDSLError(
                ErrorCode.SHAPE,
                f"arc {arc.src} -> {arc.dst}: term expects a width-{shape[1]} signal but receives width {cur}",
                term.span,
            )
        out.append(shape)
        cur = shape[0]
    if cur != w_dst:
        raise NetDSLError(
            ErrorCode.SHAPE,
            f"arc {arc.src} -> {arc.dst}: gain produces width {cur} but node {arc.dst!r} has width {w_dst}",
            arc.span,
        )
    return list(reversed(out))


# -- entry points --------------------------------------------------------------------


def parse_network(text: str) -> NetworkSpec:
    """Parse and validate a network description."""
    spec = NetworkSpec()
    spans: dict[int, dict] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        toks = _lex(line, lineno)
        if not toks:
            continue
        cur = _Cursor(toks, lineno, len(line.rstrip()))
        kw = cur.next("statement")
        if kw.kind != "ident" or kw.text not in _STATEMENTS:
            raise NetDSLError(
                ErrorCode.UNKNOWN_STATEMENT,
                f"unknown statement {kw.text!r}; expected one of {', '.join(_STATEMENTS)}",
                kw.span,
            )
        decl, sp = _STATEMENTS[kw.text](cur, kw)
        spec.decls.append(decl)
        spans[id(decl)] = sp
    _check(spec, spans)
    return spec


def parse_file(path) -> NetworkSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_network(fh.read())


def _fmt(x: float) -> str:
    return repr(float(x))


def _term_text(t: Term) -> str:
    if t.kind == "dmat":
        return t.ref.to_literal()
    if t.kind == "sp":
        return f"sp({t.ref[0]}.{t.ref[1]})"
    return f"{t.kind}({t.ref})"


def serialize(spec: NetworkSpec) -> str:
    lines = []
    for d in spec.decls:
        if isinstance(d, SystemDecl):
            lines.append(f"system {d.name} modes {d.modes} P {d.p.to_literal()}")
        elif isinstance(d, KernelDecl):
            if d.kind == "lorentzian":
                extra = f" size={d.params['size']}" if "size" in d.params else ""
                lines.append(f"kernel {d.name} lorentzian kappa={_fmt(d.params['kappa'])} gamma={_fmt(d.params['gamma'])}{extra}")
            elif d.kind == "markov":
                lines.append(f"kernel {d.name} markov n0={d.params['n0'].to_literal()}")
            else:
                lines.append(f"kernel {d.name} expmode E={d.params['E'].to_literal()} Q={d.params['Q'].to_literal()}")
        elif isinstance(d, CoupleDecl):
            lines.append(f"couple {d.system} {d.kernel} D={d.d.to_literal()}")
        elif isinstance(d, SplitterDecl):
            parts = " ".join(f"{k}={d.parts[k].to_literal()}" for k in ("t1", "r1", "r2", "t2"))
            lines.append(f"splitter {d.name} {parts}")
        elif isinstance(d, DelayDecl):
            lines.append(f"delay {d.name} tau={_fmt(d.tau)}")
        elif isinstance(d, NodeDecl):
            lines.append(f"node {d.name} width {d.width}")
        elif isinstance(d, ArcDecl):
            lines.append(f"arc {d.src} -> {d.dst} gain " + " * ".join(_term_text(t) for t in d.terms))
        elif isinstance(d, QueryDecl):
            lines.append(f"query gain from {d.src} to {d.dst}")
    return "\n".join(lines) + "\n"


# -- assembly ----------------------------------------------------------------------------


def _make_kernel(decl: KernelDecl) -> MemoryKernel:
    if decl.kind == "lorentzian":
        return Lorentzian(decl.params["kappa"], decl.params["gamma"], int(decl.params.get("size", 1)))
    if decl.kind == "markov":
        return MarkovDelta(decl.params["n0"])
    return ExpMode(decl.params["E"], decl.params["Q"])


def build_systems(spec: NetworkSpec) -> dict[str, IOSystem]:
    kernels = {k.name: _make_kernel(k) for k in spec.kernels}
    out = {}
    for sd in spec.systems:
        pairs = [(c.d, kernels[c.kernel]) for c in spec.couplings if c.system == sd.name]
        out[sd.name] = IOSystem(sd.p, pairs)
    return out


def build_graph(spec: NetworkSpec) -> tuple[SignalFlowGraph, dict[str, TransferMap]]:
    """Assemble the signal flow graph; also returns the named component maps."""
    systems = build_systems(spec)
    splitters = {s.name: s.parts for s in spec.splitters}
    delays = {d.name: d.tau for d in spec.delays}
    widths = {n.name: n.width for n in spec.nodes}
    maps: dict[str, TransferMap] = {}
    for name, sys in systems.items():
        if sys.couplings:
            maps[f"io({name})"] = io_transfer_multi(sys)
        maps[f"res({name})"] = resolvent(sys.p)
    g = SignalFlowGraph()
    for n in spec.nodes:
        g.add_node(n.name, n.width)
    for arc in spec.arcs:
        cur = widths[arc.src]
        gain = None
        for term in reversed(arc.terms):
            if term.kind == "dmat":
                tm = Constant(term.ref)
            elif term.kind in ("io", "res"):
                tm = maps[f"{term.kind}({term.ref})"]
            elif term.kind == "delay":
                tm = make_delay(delays[term.ref], size=cur).map
            else:
                tm = Constant(splitters[term.ref[0]][term.ref[1]])
            if tm.shape[1] != cur:
                raise NetDSLError(ErrorCode.SHAPE, f"arc {arc.src} -> {arc.dst}: shape mismatch", term.span)
            gain = tm if gain is None else tm @ gain
            cur = tm.shape[0]
        try:
            g.add_arc(arc.src, arc.dst, gain)
        except ValueError as exc:
            raise NetDSLError(ErrorCode.SHAPE, str(exc), arc.span) from None
    return g, maps
