"""Scalar field expressions over chart coordinates ``x1..xn, y1..yn``.

Grammar (EBNF)::

    expr    = term { ("+" | "-") term } ;
    term    = unary { ("*" | "/") unary } ;
    unary   = ("-" | "+") unary | power ;
    power   = primary [ ("^" | "**") unary ] ;      (* exponent must be constant *)
    primary = number | symbol | func "(" expr ")" | "(" expr ")" ;
    func    = "sqrt" | "exp" | "log" | "sin" | "cos" ;
    symbol  = ("x" | "y") digit { digit } ;          (* index in 1..n *)
    number  = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ]
            | "." digits [ exponent ] ;

``^`` is right associative and binds tighter than unary minus, so ``-y1^2``
is ``-(y1^2)``.  There is deliberately no ``abs`` and no variable exponent:
every admitted expression is smooth where it is defined.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import (
    DerivativeOrderError,
    DomainError,
    ExprSyntaxError,
    IndexOutOfRangeError,
    UnknownSymbolError,
)
from .fields import Field, coordinate_jets
from .jets import MAX_ORDER, Jet

FUNCTIONS = ("sqrt", "exp", "log", "sin", "cos")


# -- syntax tree ------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    kind: str  # "x" or "y"
    index: int  # 1-based


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: float


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Var, Neg, BinOp, Pow, Call]


# -- tokenizer --------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^(),])"
    r")"
)
_SYMBOL = re.compile(r"([xy])(\d+)$")


@dataclass
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(source: str) -> list:
    toks = []
    pos = 0
    while True:
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            rest = source[pos:]
            if rest.strip() == "":
                break
            bad = pos + (len(rest) - len(rest.lstrip()))
            raise ExprSyntaxError(f"unexpected character {source[bad]!r}", bad)
        kind = m.lastgroup
        toks.append(_Tok(kind, m.group(kind), m.start(kind)))
        pos = m.end()
    toks.append(_Tok("eof", "", len(source)))
    return toks


class _Parser:
    def __init__(self, source: str, dimension: int):
        self.toks = _tokenize(source)
        self.k = 0
        self.dimension = dimension

    @property
    def tok(self) -> _Tok:
        return self.toks[self.k]

    def accept(self, *texts):
        t = self.tok
        if t.kind == "op" and t.text in texts:
            self.k += 1
            return t
        return None

    def expect(self, text: str):
        if not self.accept(text):
            self.fail([repr(text)])

    def fail(self, expected):
        t = self.tok
        what = "end of input" if t.kind == "eof" else repr(t.text)
        raise ExprSyntaxError(f"unexpected {what}", t.pos, expected)

    def parse(self) -> Node:
        node = self.expr()
        if self.tok.kind != "eof":
            self.fail(["operator", "end of input"])
        return node

    def expr(self) -> Node:
        node = self.term()
        while True:
            t = self.accept("+", "-")
            if not t:
                return node
            node = BinOp(t.text, node, self.term())

    def term(self) -> Node:
        node = self.unary()
        while True:
            t = self.accept("*", "/")
            if not t:
                return node
            node = BinOp(t.text, node, self.unary())

    def unary(self) -> Node:
        if self.accept("-"):
            return Neg(self.unary())
        if self.accept("+"):
            return self.unary()
        return self.power()

    def power(self) -> Node:
        base = self.primary()
        t = self.accept("^", "**")
        if not t:
            return base
        start = self.tok.pos
        exponent = self.unary()
        if _has_symbols(exponent):
            raise ExprSyntaxError("exponent must be a constant", start, ["constant exponent"])
        value = float(evaluate(exponent, np.zeros(self.dimension), np.zeros(self.dimension)))
        if not math.isfinite(value):
            raise ExprSyntaxError("exponent is not finite", start)
        return Pow(base, value)

    def primary(self) -> Node:
        t = self.tok
        if t.kind == "num":
            self.k += 1
            value = float(t.text)
            if not math.isfinite(value):
                raise ExprSyntaxError("numeric literal overflows", t.pos)
            return Num(value)
        if t.kind == "ident":
            self.k += 1
            if self.tok.kind == "op" and self.tok.text == "(":
                if t.text not in FUNCTIONS:
                    raise UnknownSymbolError(t.text, t.pos)
                self.k += 1
                arg = self.expr()
                self.expect(")")
                return Call(t.text, arg)
            if t.text in FUNCTIONS:
                self.fail(["'('"])
            m = _SYMBOL.match(t.text)
            if not m:
                raise UnknownSymbolError(t.text, t.pos)
            index = int(m.group(2))
            if not 1 <= index <= self.dimension:
                raise IndexOutOfRangeError(t.text, self.dimension, t.pos)
            return Var(m.group(1), index)
        if self.accept("("):
            node = self.expr()
            self.expect(")")
            return node
        self.fail(["number", "symbol", "function", "'('", "'-'"])


def _has_symbols(node: Node) -> bool:
    return bool(symbols(node))


def symbols(node: Node) -> set:
    """Set of ``(kind, index)`` pairs occurring in ``node``."""
    if isinstance(node, Var):
        return {(node.kind, node.index)}
    if isinstance(node, Num):
        return set()
    if isinstance(node, (Neg, Call)):
        return symbols(node.arg)
    if isinstance(node, Pow):
        return symbols(node.base)
    return symbols(node.left) | symbols(node.right)


# -- printing ---------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(node: Node) -> int:
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return 3
    if isinstance(node, Pow):
        return 4
    if isinstance(node, Num) and node.value < 0:
        return 3
    return 5


def _literal(value: float) -> str:
    value = float(value)
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def _num(value: float) -> str:
    text = _literal(value)
    return f"({text})" if value < 0 or text.startswith("-") else text


def to_source(node: Node) -> str:
    """Print ``node`` so that parsing the text gives back the same tree."""
    if isinstance(node, Num):
        return _num(node.value)
    if isinstance(node, Var):
        return f"{node.kind}{node.index}"
    if isinstance(node, Call):
        return f"{node.func}({to_source(node.arg)})"
    if isinstance(node, Neg):
        inner = to_source(node.arg)
        return f"-{inner}" if _prec(node.arg) >= 3 else f"-({inner})"
    if isinstance(node, Pow):
        base = to_source(node.base)
        if _prec(node.base) <= 4:
            base = f"({base})"
        return f"{base}^{_num(node.exponent)}"
    p = _PREC[node.op]
    left = to_source(node.left)
    right = to_source(node.right)
    if _prec(node.left) < p:
        left = f"({left})"
    if _prec(node.right) <= p:
        right = f"({right})"
    return f"{left} {node.op} {right}"


# -- evaluation -------------------------------------------------------------

def _check(bad, what):
    if np.any(bad):
        raise DomainError(f"{what} outside its domain", mask=np.asarray(bad))


def evaluate(node: Node, x, y) -> np.ndarray:
    """Plain numpy evaluation (no derivatives) over batched coordinates."""
    if isinstance(node, Num):
        return np.asarray(node.value, dtype=float)
    if isinstance(node, Var):
        src = x if node.kind == "x" else y
        return np.asarray(src, dtype=float)[..., node.index - 1]
    if isinstance(node, Neg):
        return -evaluate(node.arg, x, y)
    if isinstance(node, BinOp):
        a = evaluate(node.left, x, y)
        b = evaluate(node.right, x, y)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        _check(b == 0, "divisor")
        return a / b
    if isinstance(node, Pow):
        u = evaluate(node.base, x, y)
        e = node.exponent
        if not float(e).is_integer():
            _check(u <= 0, f"power {e!r} of non-positive base")
        elif e < 0:
            _check(u == 0, f"power {e!r} of zero")
        return np.power(u, e)
    u = evaluate(node.arg, x, y)
    if node.func == "sqrt":
        _check(u <= 0, "sqrt argument")
        return np.sqrt(u)
    if node.func == "log":
        _check(u <= 0, "log argument")
        return np.log(u)
    return getattr(np, node.func)(u)


def jet_evaluate(node: Node, xs, ys) -> Jet:
    if isinstance(node, Num):
        ref = xs[0]
        return Jet.constant(np.full(ref.shape, node.value), ref.nvars, ref.order)
    if isinstance(node, Var):
        return (xs if node.kind == "x" else ys)[node.index - 1]
    if isinstance(node, Neg):
        return -jet_evaluate(node.arg, xs, ys)
    if isinstance(node, BinOp):
        a = jet_evaluate(node.left, xs, ys)
        b = jet_evaluate(node.right, xs, ys)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if np.any(b.value == 0):
            raise DomainError("divisor outside its domain", mask=b.value == 0)
        return a / b
    if isinstance(node, Pow):
        return jet_evaluate(node.base, xs, ys).power(node.exponent)
    return getattr(jet_evaluate(node.arg, xs, ys), node.func)()


# -- public field type ------------------------------------------------------

class ScalarFieldExpr(Field):
    """Immutable parsed scalar field; safe to share between threads."""

    shape = ()
    max_order = MAX_ORDER

    def __init__(self, tree: Node, dimension: int, name: str | None = None):
        self.tree = tree
        self.dim = dimension
        self.source = to_source(tree)
        self.name = name or self.source

    def __repr__(self) -> str:
        return f"ScalarFieldExpr({self.source!r}, dimension={self.dim})"

    def __str__(self) -> str:
        return self.source

    def __eq__(self, other) -> bool:
        return isinstance(other, ScalarFieldExpr) and (self.dim, self.tree) == (other.dim, other.tree)

    def __hash__(self) -> int:
        return hash((self.dim, self.tree))

    @property
    def symbols(self) -> set:
        return symbols(self.tree)

    @property
    def depends_on_fiber(self) -> bool:
        return any(kind == "y" for kind, _ in self.symbols)

    def jet(self, x, y, order: int) -> Jet:
        self.check_order(order)
        xs, ys = coordinate_jets(x, y, order)
        out = jet_evaluate(self.tree, xs, ys)
        batch = xs[0].shape
        if out.shape != batch:
            out = Jet(np.broadcast_to(out.c, batch + (out.layout.size,)).copy(), out.layout)
        return out

    def values(self, x, y) -> np.ndarray:
        x = np.asarray(x, float)
        return np.broadcast_to(evaluate(self.tree, x, np.asarray(y, float)), x.shape[:-1])

    def __call__(self, x, y) -> float:
        return float(self.values(np.asarray(x, float), np.asarray(y, float)))


def parse_expression(source: str, dimension: int, name: str | None = None) -> ScalarFieldExpr:
    if not isinstance(dimension, int) or dimension < 1:
        raise ValueError(f"dimension must be a positive integer, got {dimension!r}")
    tree = _Parser(source, dimension).parse()
    return ScalarFieldExpr(tree, dimension, name)


def as_field(value, dimension: int) -> Field:
    """Coerce expression text, numbers or fields into a field."""
    if isinstance(value, Field):
        return value
    if isinstance(value, (int, float)):
        return ScalarFieldExpr(Num(float(value)) if value >= 0 else Neg(Num(-float(value))), dimension)
    return parse_expression(str(value), dimension)


# -- derivatives ------------------------------------------------------------

@dataclass(frozen=True)
class MultiIndex:
    """Derivative orders per base (``x``) and fiber (``y``) coordinate."""

    x: tuple
    y: tuple

    def __post_init__(self):
        if len(self.x) != len(self.y):
            raise ValueError("x and y order tuples must have equal length")
        if any(int(k) != k or k < 0 for k in self.x + self.y):
            raise ValueError("derivative orders must be non-negative integers")
        if self.order > MAX_ORDER:
            raise DerivativeOrderError(
                f"total derivative order {self.order} exceeds the supported maximum {MAX_ORDER}"
            )

    @classmethod
    def of(cls, dimension: int, *coords: str) -> "MultiIndex":
        """``MultiIndex.of(2, "y1", "y2")`` is the mixed second fiber derivative."""
        x = [0] * dimension
        y = [0] * dimension
        for c in coords:
            m = _SYMBOL.match(c)
            if not m or not 1 <= int(m.group(2)) <= dimension:
                raise ValueError(f"bad coordinate {c!r} for dimension {dimension}")
            (x if m.group(1) == "x" else y)[int(m.group(2)) - 1] += 1
        return cls(tuple(x), tuple(y))

    @property
    def order(self) -> int:
        return int(sum(self.x) + sum(self.y))

    @property
    def alpha(self) -> tuple:
        return tuple(self.x) + tuple(self.y)

    def coords(self) -> list:
        """Differentiated chart-variable indices, with repetition."""
        out = []
        for v, k in enumerate(self.alpha):
            out.extend([v] * k)
        return out


def _point_arrays(p):
    return np.asarray(p.x, dtype=float), np.asarray(p.y, dtype=float)


def eval_derivative(field: Field, p, idx: MultiIndex) -> float:
    """Exact partial derivative of a scalar field at a fiber point."""
    if idx.order > MAX_ORDER:
        raise DerivativeOrderError(f"order {idx.order} > {MAX_ORDER}")
    x, y = _point_arrays(p)
    jet = field.jet(x, y, idx.order)
    return float(jet.derivative(idx.alpha))


_FD_STEP = {0: 0.0, 1: 1e-3, 2: 2e-3, 3: 6e-3}


def _plain_values(field: Field, x, y) -> np.ndarray:
    # expression fields take the plain numpy path, independent of the jet code
    return field.values(x, y)


def fd_partial(field: Field, x, y, idx: MultiIndex, h: float | None = None) -> np.ndarray:
    """Batched central-difference estimate with one Richardson step.

    Nested central differences have an even error expansion in ``h``.  Base
    coordinates use step ``h * max(1, |x_v|)``; fiber coordinates use
    ``h * |y|``, the natural scale of functions homogeneous in ``y``.
    Combining steps ``h`` and ``h/2`` as
    ``(4 D(h/2) - D(h)) / 3`` leaves an ``O(h^4)`` truncation error.  Roundoff
    grows like ``eps / h^k`` for order ``k``, hence the larger default steps at
    higher order.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    n = x.shape[-1]
    coords = idx.coords()
    if not coords:
        return _plain_values(field, x, y)
    base = _FD_STEP[len(coords)] if h is None else h
    z = np.concatenate([x, y], axis=-1)
    r = np.linalg.norm(y, axis=-1)

    def nested(step):
        hs = [step * (np.maximum(1.0, np.abs(z[..., v])) if v < n else r) for v in coords]
        total = 0.0
        for signs in np.ndindex(*(2,) * len(coords)):
            zz = z.copy()
            weight = 1.0
            for v, s, hv in zip(coords, signs, hs):
                sign = 1.0 if s == 0 else -1.0
                zz[..., v] += sign * hv
                weight = weight * sign / (2.0 * hv)
            total = total + weight * _plain_values(field, zz[..., :n], zz[..., n:])
        return total

    try:
        return (4.0 * nested(base / 2) - nested(base)) / 3.0
    except DomainError as exc:
        raise DomainError(f"finite-difference stencil left the admissible domain: {exc}",
                          mask=exc.mask) from exc


def finite_difference_oracle(field: Field, p, idx: MultiIndex, h: float | None = None) -> float:
    x, y = _point_arrays(p)
    return float(fd_partial(field, x, y, idx, h))


def all_multi_indices(dimension: int, max_order: int = MAX_ORDER) -> list:
    """Every multi-index of total order ``1..max_order`` over the ``2n`` chart variables."""
    out = []
    for order in range(1, max_order + 1):
        for combo in itertools.combinations_with_replacement(range(2 * dimension), order):
            alpha = [0] * (2 * dimension)
            for v in combo:
                alpha[v] += 1
            out.append(MultiIndex(tuple(alpha[:dimension]), tuple(alpha[dimension:])))
    return out


def ad_fd_discrepancy(field: Field, x, y, max_order: int = MAX_ORDER) -> float:
    """Largest ``|AD - FD| / (1 + |AD|)`` over all multi-indices up to ``max_order``."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    jet = field.jet(x, y, max_order)
    worst = 0.0
    for idx in all_multi_indices(x.shape[-1], max_order):
        ad = jet.derivative(idx.alpha)
        fd = fd_partial(field, x, y, idx)
        worst = max(worst, float(np.max(np.abs(ad - fd) / (1.0 + np.abs(ad)))))
    return worst
