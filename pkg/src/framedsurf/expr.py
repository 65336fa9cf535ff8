"""Scalar expressions in (u, v) with first-order forward-mode derivatives.

Grammar (lowest to highest precedence)::

    expr  := term (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := ('-' | '+') unary | power
    power := atom ('^' unary)?          # right-associative, tighter than unary minus
    atom  := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

so ``-u^2`` is ``-(u^2)`` and ``u^v^2`` is ``u^(v^2)``.  ``**`` is accepted as a
synonym for ``^``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import EvalError, ExprSyntaxError

VARIABLES = ("u", "v")
CONSTANTS = {"pi": math.pi}
FUNCTIONS = {
    "sin": 1, "cos": 1, "tan": 1, "atan2": 2, "sqrt": 1,
    "abs": 1, "exp": 1, "log": 1,
}


# --------------------------------------------------------------------------- jets


class Jet1:
    """Value with its two first partials; components may be numpy arrays.

    Vector-valued jets keep the vector index on the last axis of each
    component, so ``value``, ``du`` and ``dv`` all have shape ``(..., 3)``.
    """

    __slots__ = ("value", "du", "dv")
    __array_priority__ = 100  # make ndarray * Jet1 defer to Jet1.__rmul__

    def __init__(self, value, du=0.0, dv=0.0):
        self.value = value
        self.du = du
        self.dv = dv

    def __repr__(self):
        return f"Jet1(value={self.value!r}, du={self.du!r}, dv={self.dv!r})"

    @staticmethod
    def lift(x) -> "Jet1":
        return x if isinstance(x, Jet1) else Jet1(x, 0.0, 0.0)

    def __add__(self, other):
        o = Jet1.lift(other)
        return Jet1(self.value + o.value, self.du + o.du, self.dv + o.dv)

    __radd__ = __add__

    def __sub__(self, other):
        o = Jet1.lift(other)
        return Jet1(self.value - o.value, self.du - o.du, self.dv - o.dv)

    def __rsub__(self, other):
        return Jet1.lift(other) - self

    def __neg__(self):
        return Jet1(-self.value, -self.du, -self.dv)

    def __mul__(self, other):
        if not isinstance(other, Jet1):
            return Jet1(self.value * other, self.du * other, self.dv * other)
        return Jet1(
            self.value * other.value,
            self.du * other.value + self.value * other.du,
            self.dv * other.value + self.value * other.dv,
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet1):
            return Jet1(self.value / other, self.du / other, self.dv / other)
        q = self.value / other.value
        return Jet1(q, (self.du - q * other.du) / other.value,
                    (self.dv - q * other.dv) / other.value)

    def __rtruediv__(self, other):
        return Jet1.lift(other) / self

    def __pow__(self, p):
        if isinstance(p, Jet1):
            return exp(p * log(self))
        if p == 0:
            return Jet1(np.ones_like(np.asarray(self.value, dtype=float)), 0.0, 0.0)
        d = p * self.value ** (p - 1)
        return Jet1(self.value ** p, d * self.du, d * self.dv)

    def col(self) -> "Jet1":
        """Append a unit axis so a scalar jet broadcasts against vector jets."""
        return Jet1(*(np.asarray(c)[..., None] for c in (self.value, self.du, self.dv)))

    def __getitem__(self, idx) -> "Jet1":
        return Jet1(*(np.broadcast_to(c, np.shape(self.value))[idx]
                      for c in (self.value, self.du, self.dv)))

    def broadcast(self, shape) -> "Jet1":
        return Jet1(*(np.array(np.broadcast_to(c, shape), dtype=float)
                      for c in (self.value, self.du, self.dv)))


def _chain(j: Jet1, value, deriv) -> Jet1:
    return Jet1(value, deriv * j.du, deriv * j.dv)


def sin(j: Jet1) -> Jet1:
    return _chain(j, np.sin(j.value), np.cos(j.value))


def cos(j: Jet1) -> Jet1:
    return _chain(j, np.cos(j.value), -np.sin(j.value))


def tan(j: Jet1) -> Jet1:
    t = np.tan(j.value)
    return _chain(j, t, 1.0 + t * t)


def exp(j: Jet1) -> Jet1:
    e = np.exp(j.value)
    return _chain(j, e, e)


def log(j: Jet1) -> Jet1:
    return _chain(j, np.log(j.value), 1.0 / j.value)


def sqrt(j: Jet1) -> Jet1:
    r = np.sqrt(j.value)
    return _chain(j, r, 0.5 / r)


def fabs(j: Jet1) -> Jet1:
    return _chain(j, np.abs(j.value), np.sign(j.value))


def atan2(y: Jet1, x: Jet1) -> Jet1:
    r2 = x.value * x.value + y.value * y.value
    return Jet1(np.arctan2(y.value, x.value),
                (x.value * y.du - y.value * x.du) / r2,
                (x.value * y.dv - y.value * x.dv) / r2)


def jdot(a: Jet1, b: Jet1) -> Jet1:
    """Dot product of two vector jets (last axis)."""
    return Jet1(np.sum(a.value * b.value, axis=-1),
                np.sum(a.du * b.value + a.value * b.du, axis=-1),
                np.sum(a.dv * b.value + a.value * b.dv, axis=-1))


def jcross(a: Jet1, b: Jet1) -> Jet1:
    return Jet1(np.cross(a.value, b.value),
                np.cross(a.du, b.value) + np.cross(a.value, b.du),
                np.cross(a.dv, b.value) + np.cross(a.value, b.dv))


def jstack(parts) -> Jet1:
    """Stack three scalar jets into one vector jet."""
    shape = np.broadcast_shapes(*(np.shape(c) for p in parts for c in (p.value, p.du, p.dv)))
    parts = [p.broadcast(shape) for p in parts]
    return Jet1(*(np.stack([getattr(p, k) for p in parts], axis=-1)
                  for k in ("value", "du", "dv")))


# ---------------------------------------------------------------------------- AST


class Expr:
    """Base class of expression nodes; supports ``+ - * / ** neg`` for building."""

    __slots__ = ()

    def __add__(self, o):
        return BinOp("+", self, as_expr(o))

    def __radd__(self, o):
        return BinOp("+", as_expr(o), self)

    def __sub__(self, o):
        return BinOp("-", self, as_expr(o))

    def __rsub__(self, o):
        return BinOp("-", as_expr(o), self)

    def __mul__(self, o):
        return BinOp("*", self, as_expr(o))

    def __rmul__(self, o):
        return BinOp("*", as_expr(o), self)

    def __truediv__(self, o):
        return BinOp("/", self, as_expr(o))

    def __rtruediv__(self, o):
        return BinOp("/", as_expr(o), self)

    def __pow__(self, o):
        return BinOp("^", self, as_expr(o))

    def __neg__(self):
        return Neg(self)

    def __str__(self):
        return to_text(self)


@dataclass(frozen=True, eq=True)
class Num(Expr):
    value: float


@dataclass(frozen=True, eq=True)
class Var(Expr):
    name: str


@dataclass(frozen=True, eq=True)
class Const(Expr):
    name: str


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    operand: Expr


@dataclass(frozen=True, eq=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Call(Expr):
    fn: str
    args: tuple


# The dataclass decorator replaces __str__ with nothing but adds __repr__; keep
# the readable text form for str().
for _cls in (Num, Var, Const, Neg, BinOp, Call):
    _cls.__str__ = Expr.__str__

U = Var("u")
V = Var("v")
PI = Const("pi")


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, str):
        return parse(x)
    x = float(x)
    return Neg(Num(-x)) if x < 0 else Num(x)


def call(fn: str, *args) -> Call:
    if FUNCTIONS.get(fn) != len(args):
        raise ValueError(f"{fn} takes {FUNCTIONS.get(fn)} argument(s)")
    return Call(fn, tuple(as_expr(a) for a in args))


def depends_on_uv(e: Expr) -> bool:
    if isinstance(e, Var):
        return True
    if isinstance(e, Neg):
        return depends_on_uv(e.operand)
    if isinstance(e, BinOp):
        return depends_on_uv(e.left) or depends_on_uv(e.right)
    if isinstance(e, Call):
        return any(depends_on_uv(a) for a in e.args)
    return False


# ----------------------------------------------------------------------- printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return 3
    return 5


def _num_text(x: float) -> str:
    if float(x).is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def to_text(e: Expr) -> str:
    """Render with the fewest parentheses that parse back to the same tree."""
    if isinstance(e, Num):
        return _num_text(e.value)
    if isinstance(e, (Var, Const)):
        return e.name
    if isinstance(e, Call):
        return f"{e.fn}({', '.join(to_text(a) for a in e.args)})"
    if isinstance(e, Neg):
        inner = to_text(e.operand)
        return f"-({inner})" if _prec(e.operand) < 3 else f"-{inner}"
    p = _PREC[e.op]
    left, right = to_text(e.left), to_text(e.right)
    if e.op == "^":
        if _prec(e.left) <= p:
            left = f"({left})"
        if _prec(e.right) < 3:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(e.left) < p:
        left = f"({left})"
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left} {e.op} {right}"


# ------------------------------------------------------------------------ parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_]\w*)"
    r"|(?P<op>\*\*|[-+*/^(),]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", text,
                                  _offset(text, pos), "a number, name or operator")
        kind = m.lastgroup
        tok = m.group(kind)
        if tok == "**":
            tok = "^"
        tokens.append((kind, tok, m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


def _offset(text: str, index: int) -> int:
    """1-based byte offset of character ``index``."""
    return len(text[:index].encode("utf-8")) + 1


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, expected: str, message: str | None = None):
        kind, tok, pos = self.peek()
        found = "end of input" if kind == "end" else repr(tok)
        raise ExprSyntaxError(message or f"unexpected {found}", self.text,
                              _offset(self.text, pos), expected)

    def expect(self, op: str):
        if self.peek()[1] != op or self.peek()[0] != "op":
            self.fail(repr(op))
        self.advance()

    def expr(self) -> Expr:
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in ("*", "/"):
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        kind, tok, _ = self.peek()
        if kind == "op" and tok == "-":
            self.advance()
            return Neg(self.unary())
        if kind == "op" and tok == "+":
            self.advance()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        kind, tok, pos = self.peek()
        if kind == "num":
            self.advance()
            return Num(float(tok))
        if kind == "name":
            self.advance()
            if tok in FUNCTIONS:
                self.expect("(")
                args = [self.expr()]
                while self.peek()[1] == ",":
                    self.advance()
                    args.append(self.expr())
                if self.peek()[1] != ")":
                    self.fail("',' or ')'")
                self.advance()
                if len(args) != FUNCTIONS[tok]:
                    raise ExprSyntaxError(
                        f"{tok} takes {FUNCTIONS[tok]} argument(s), got {len(args)}",
                        self.text, _offset(self.text, pos), f"{FUNCTIONS[tok]} argument(s)")
                return Call(tok, tuple(args))
            if tok in VARIABLES:
                return Var(tok)
            if tok in CONSTANTS:
                return Const(tok)
            self.i -= 1
            self.fail("u, v, pi or a function name", f"unknown name {tok!r}")
        if kind == "op" and tok == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        self.fail("a number, name or '('")

    def parse(self) -> Expr:
        node = self.expr()
        if self.peek()[0] != "end":
            self.fail("an operator or end of input")
        return node


def parse(text: str) -> Expr:
    """Parse ``text`` into an expression tree, raising ``ExprSyntaxError``."""
    return _Parser(text).parse()


# --------------------------------------------------------------------- evaluation

Number = Union[float, np.ndarray]


def _require(ok, node, message):
    if not np.all(ok):
        raise EvalError(message, node)


def _pow_const(base, p: float, node, jet: bool):
    bv = base.value if jet else base
    if float(p).is_integer():
        if p < 0:
            _require(bv != 0, node, "zero raised to a negative power")
    else:
        _require(bv >= 0, node, "negative base with non-integer exponent")
        if p < 0:
            _require(bv != 0, node, "zero raised to a negative power")
        elif jet and p < 1:
            _require((bv != 0) | ((base.du == 0) & (base.dv == 0)), node,
                     "derivative of a fractional power at zero")
    if not jet:
        return bv ** p
    if p == 0:
        return Jet1(np.ones_like(np.asarray(bv, dtype=float)), 0.0, 0.0)
    d = p * np.where(bv == 0, 0.0, bv) ** (p - 1) if p < 1 else p * bv ** (p - 1)
    return Jet1(bv ** p, d * base.du, d * base.dv)


_JET_FUNCS = {"sin": sin, "cos": cos, "tan": tan, "exp": exp, "log": log,
              "sqrt": sqrt, "abs": fabs}
_NP_FUNCS = {"sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp,
             "log": np.log, "sqrt": np.sqrt, "abs": np.abs}


def _eval(e: Expr, u, v, jet: bool):
    if isinstance(e, Num):
        return Jet1(e.value) if jet else e.value
    if isinstance(e, Var):
        if jet:
            return Jet1(u, 1.0, 0.0) if e.name == "u" else Jet1(v, 0.0, 1.0)
        return u if e.name == "u" else v
    if isinstance(e, Const):
        c = CONSTANTS[e.name]
        return Jet1(c) if jet else c
    if isinstance(e, Neg):
        return -_eval(e.operand, u, v, jet)
    if isinstance(e, BinOp):
        a = _eval(e.left, u, v, jet)
        if e.op == "^" and not depends_on_uv(e.right):
            p = _eval(e.right, u, v, False)
            return _pow_const(a, float(p), e, jet)
        b = _eval(e.right, u, v, jet)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            _require((b.value if jet else b) != 0, e, "division by zero")
            return a / b
        _require((a.value if jet else a) > 0, e, "variable exponent needs a positive base")
        return exp(b * log(a)) if jet else np.exp(b * np.log(a))
    if isinstance(e, Call):
        args = [_eval(a, u, v, jet) for a in e.args]
        vals = [x.value if jet else x for x in args]
        if e.fn == "atan2":
            _require((vals[0] != 0) | (vals[1] != 0), e, "atan2(0, 0)")
            return atan2(*args) if jet else np.arctan2(*args)
        x = vals[0]
        if e.fn == "sqrt":
            _require(x >= 0, e, "square root of a negative number")
            if jet:
                _require((x > 0) | ((args[0].du == 0) & (args[0].dv == 0)), e,
                         "derivative of sqrt at zero")
                r = np.sqrt(x)
                d = np.where(x > 0, 0.5 / np.where(x > 0, r, 1.0), 0.0)
                return Jet1(r, d * args[0].du, d * args[0].dv)
        elif e.fn == "log":
            _require(x > 0, e, "logarithm of a non-positive number")
        elif e.fn == "tan":
            _require(np.abs(np.cos(x)) > 1e-14, e, "tangent pole")
        return _JET_FUNCS[e.fn](args[0]) if jet else _NP_FUNCS[e.fn](x)
    raise TypeError(f"not an expression node: {e!r}")


def _prepare(u, v):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    u, v = np.broadcast_arrays(u, v)
    return u, v


def evaluate(e: Expr | str, u, v) -> Number:
    """Value of ``e`` at scalar or array arguments (broadcast together)."""
    e = as_expr(e)
    u, v = _prepare(u, v)
    with np.errstate(all="ignore"):
        out = np.broadcast_to(np.asarray(_eval(e, u, v, False), dtype=float), u.shape)
    _require(np.isfinite(out), e, "non-finite value")
    return float(out) if out.ndim == 0 else np.array(out)


def eval_jet(e: Expr | str, u, v) -> Jet1:
    """Value and exact first partials of ``e`` at (u, v)."""
    e = as_expr(e)
    u, v = _prepare(u, v)
    with np.errstate(all="ignore"):
        j = _eval(e, u, v, True).broadcast(u.shape)
    _require(np.isfinite(j.value) & np.isfinite(j.du) & np.isfinite(j.dv), e,
             "non-finite value or derivative")
    if u.ndim == 0:
        return Jet1(float(j.value), float(j.du), float(j.dv))
    return j
