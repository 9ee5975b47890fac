"""Symbolic expressions for Lagrangians, velocity maps and Hamiltonians.

Expressions are immutable, hash-consed trees: two structurally identical
trees are the same object, so ``==`` is structural equality and shared
subtrees are stored once. Variables are

    theta       intrinsic time
    q<i>d<k>    k-th derivative of state component i (``q<i>`` is k = 0)
    u<j>        control component j
    p<i>        costate component i

Evaluation compiles each tree once into straight-line numpy code with
common subexpressions shared, so the same expression can be evaluated on a
single jet or on a whole batch of nodes at once.
"""

from __future__ import annotations

import math
import re
import weakref
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "VarRef",
    "THETA",
    "state",
    "control",
    "costate",
    "Jet",
    "Expr",
    "Const",
    "Var",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "Neg",
    "Pow",
    "Sin",
    "Cos",
    "Exp",
    "Log",
    "Sqrt",
    "ParseError",
    "EvaluationError",
    "parse",
    "to_string",
    "evaluate",
    "compile_expr",
    "partial",
    "total_derivative",
    "total_derivative_n",
    "substitute",
    "variables",
    "max_state_order",
    "const",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "power",
    "sum_exprs",
]


class ParseError(ValueError):
    """Raised for malformed formulas; ``position`` is the character offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class EvaluationError(ArithmeticError):
    """Raised when an expression cannot be evaluated on a jet."""


# ---------------------------------------------------------------------------
# variables and jets


@dataclass(frozen=True, order=True)
class VarRef:
    """A variable slot: ``kind`` is one of theta, q, u, p."""

    kind: str
    index: int = 0
    order: int = 0

    def __post_init__(self):
        if self.kind not in ("theta", "q", "u", "p"):
            raise ValueError(f"unknown variable kind {self.kind!r}")
        if self.index < 0 or self.order < 0:
            raise ValueError("variable index and order must be non-negative")
        if self.kind != "q" and self.order != 0:
            raise ValueError("only state variables carry a derivative order")

    @property
    def name(self) -> str:
        if self.kind == "theta":
            return "theta"
        if self.kind == "q":
            return f"q{self.index}" if self.order == 0 else f"q{self.index}d{self.order}"
        return f"{self.kind}{self.index}"


THETA = VarRef("theta")


def state(i: int, d: int = 0) -> VarRef:
    return VarRef("q", i, d)


def control(j: int) -> VarRef:
    return VarRef("u", j)


def costate(i: int) -> VarRef:
    return VarRef("p", i)


def _floats(x) -> np.ndarray:
    # keep extended precision when the caller asks for it
    x = np.asarray(x)
    return x if x.dtype.kind == "f" else x.astype(float)


class Jet:
    """Point (or batch) evaluation record.

    ``q[i, d]`` holds the d-th derivative of state component i. With a scalar
    ``theta`` the state array has shape ``(n, K+1)``; with an array of M
    nodes it has shape ``(n, K+1, M)`` and every slot is a length-M vector.
    """

    __slots__ = ("theta", "q", "u", "p")

    def __init__(self, theta, q, u=None, p=None):
        self.theta = _floats(theta)
        q = _floats(q)
        if q.ndim == 1:
            q = q[:, None]
        self.q = q
        self.u = None if u is None else _floats(u)
        self.p = None if p is None else _floats(p)

    @property
    def order(self) -> int:
        return self.q.shape[1] - 1

    @property
    def state_dim(self) -> int:
        return self.q.shape[0]

    def __repr__(self):
        return f"Jet(theta={self.theta!r}, q={self.q!r}, u={self.u!r}, p={self.p!r})"


# ---------------------------------------------------------------------------
# expression nodes

_INTERN: "weakref.WeakValueDictionary[tuple, Expr]" = weakref.WeakValueDictionary()


class Expr:
    """Base class of all expression nodes; instances are interned."""

    __slots__ = ("args", "_cache", "__weakref__")
    precedence = 5

    def __new__(cls, *args):
        key = (cls, args)
        node = _INTERN.get(key)
        if node is None:
            node = object.__new__(cls)
            object.__setattr__(node, "args", args)
            object.__setattr__(node, "_cache", {})
            node = _INTERN.setdefault(key, node)
        return node

    def __setattr__(self, name, value):
        raise AttributeError("expressions are immutable")

    def __reduce__(self):
        return (type(self), self.args)

    def __repr__(self):
        inner = ", ".join(repr(a) for a in self.args)
        return f"{type(self).__name__}({inner})"

    def __str__(self):
        return to_string(self)

    # convenience arithmetic; builds simplified trees
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __rtruediv__(self, other):
        return div(_lift(other), self)

    def __pow__(self, other):
        return power(self, _lift(other))

    def __rpow__(self, other):
        return power(_lift(other), self)

    def __neg__(self):
        return neg(self)

    def __call__(self, jet: Jet):
        return evaluate(self, jet)


class Const(Expr):
    __slots__ = ()

    def __new__(cls, value):
        value = float(value)
        if value == 0.0:
            value = 0.0  # fold -0.0
        return super().__new__(cls, value)

    @property
    def value(self) -> float:
        return self.args[0]

    @property
    def precedence(self):
        return 3 if self.value < 0 else 5


class Var(Expr):
    __slots__ = ()

    def __new__(cls, ref: VarRef):
        if not isinstance(ref, VarRef):
            raise TypeError("Var expects a VarRef")
        return super().__new__(cls, ref)

    @property
    def ref(self) -> VarRef:
        return self.args[0]


class Binary(Expr):
    __slots__ = ()
    symbol = "?"

    def __new__(cls, left: Expr, right: Expr):
        return super().__new__(cls, left, right)

    @property
    def left(self) -> Expr:
        return self.args[0]

    @property
    def right(self) -> Expr:
        return self.args[1]


class Add(Binary):
    __slots__ = ()
    symbol = "+"
    precedence = 1


class Sub(Binary):
    __slots__ = ()
    symbol = "-"
    precedence = 1


class Mul(Binary):
    __slots__ = ()
    symbol = "*"
    precedence = 2


class Div(Binary):
    __slots__ = ()
    symbol = "/"
    precedence = 2


class Pow(Binary):
    __slots__ = ()
    symbol = "^"
    precedence = 4


class Unary(Expr):
    __slots__ = ()

    def __new__(cls, arg: Expr):
        return super().__new__(cls, arg)

    @property
    def arg(self) -> Expr:
        return self.args[0]


class Neg(Unary):
    __slots__ = ()
    precedence = 3


class Func(Unary):
    __slots__ = ()
    fname = "?"


class Sin(Func):
    __slots__ = ()
    fname = "sin"


class Cos(Func):
    __slots__ = ()
    fname = "cos"


class Exp(Func):
    __slots__ = ()
    fname = "exp"


class Log(Func):
    __slots__ = ()
    fname = "log"


class Sqrt(Func):
    __slots__ = ()
    fname = "sqrt"


FUNCTIONS = {cls.fname: cls for cls in (Sin, Cos, Exp, Log, Sqrt)}

ZERO = Const(0.0)
ONE = Const(1.0)


def _lift(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, VarRef):
        return Var(x)
    return Const(x)


# ---------------------------------------------------------------------------
# simplifying constructors (value preserving, no canonical form)


def const(value) -> Const:
    return Const(value)


def _is_const(e: Expr, value: float | None = None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


def add(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if isinstance(b, Neg):
        return sub(a, b.arg)
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    if a is b:
        return ZERO
    if isinstance(b, Neg):
        return add(a, b.arg)
    return Sub(a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    if isinstance(a, Mul) and isinstance(a.left, Const):
        return mul(Const(-a.left.value), a.right)
    return Neg(a)


def mul(a: Expr, b: Expr) -> Expr:
    if _is_const(b) and not _is_const(a):
        a, b = b, a
    if isinstance(a, Const):
        if isinstance(b, Const):
            return Const(a.value * b.value)
        if a.value == 0.0:
            return ZERO
        if a.value == 1.0:
            return b
        if a.value == -1.0:
            return neg(b)
        if isinstance(b, Mul) and isinstance(b.left, Const):
            return mul(Const(a.value * b.left.value), b.right)
        if isinstance(b, Neg):
            return mul(Const(-a.value), b.arg)
    if isinstance(a, Neg) and isinstance(b, Neg):
        return mul(a.arg, b.arg)
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is_const(b) and b.value != 0.0:
        if _is_const(a):
            return Const(a.value / b.value)
        if b.value == 1.0:
            return a
        return mul(Const(1.0 / b.value), a)
    if _is_const(a, 0.0):
        return ZERO
    return Div(a, b)


def power(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 0.0):
        return ONE
    if _is_const(b, 1.0):
        return a
    if _is_const(a) and _is_const(b):
        if a.value > 0 or float(b.value).is_integer():
            try:
                return Const(a.value ** b.value)
            except (OverflowError, ZeroDivisionError):
                pass
    return Pow(a, b)


def sum_exprs(terms: Iterable[Expr]) -> Expr:
    """Balanced sum, so long sums stay shallow."""
    terms = [t for t in terms if not _is_const(t, 0.0)]
    if not terms:
        return ZERO
    while len(terms) > 1:
        paired = [add(terms[k], terms[k + 1]) for k in range(0, len(terms) - 1, 2)]
        if len(terms) % 2:
            paired.append(terms[-1])
        terms = paired
    return terms[0]


# ---------------------------------------------------------------------------
# structural queries


def variables(e: Expr) -> frozenset[VarRef]:
    cached = e._cache.get("vars")
    if cached is not None:
        return cached
    if isinstance(e, Var):
        out = frozenset((e.ref,))
    elif isinstance(e, Const):
        out = frozenset()
    else:
        out = frozenset().union(*(variables(c) for c in e.args))
    e._cache["vars"] = out
    return out


def max_state_order(e: Expr) -> int:
    """Highest state derivative order referenced, or -1 if none."""
    orders = [v.order for v in variables(e) if v.kind == "q"]
    return max(orders, default=-1)


# ---------------------------------------------------------------------------
# differentiation


def partial(e: Expr, v: VarRef, _memo: dict | None = None) -> Expr:
    """Exact partial derivative of ``e`` with respect to the slot ``v``."""
    if v not in variables(e):
        return ZERO
    memo = {} if _memo is None else _memo
    hit = memo.get(e)
    if hit is not None:
        return hit
    out = _partial(e, v, memo)
    memo[e] = out
    return out


def _partial(e: Expr, v: VarRef, memo: dict) -> Expr:
    if isinstance(e, Var):
        return ONE if e.ref == v else ZERO
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Neg):
        return neg(partial(e.arg, v, memo))
    if isinstance(e, Add):
        return add(partial(e.left, v, memo), partial(e.right, v, memo))
    if isinstance(e, Sub):
        return sub(partial(e.left, v, memo), partial(e.right, v, memo))
    if isinstance(e, Mul):
        a, b = e.left, e.right
        return add(mul(partial(a, v, memo), b), mul(a, partial(b, v, memo)))
    if isinstance(e, Div):
        a, b = e.left, e.right
        da, db = partial(a, v, memo), partial(b, v, memo)
        if _is_const(db, 0.0):
            return div(da, b)
        return div(sub(mul(da, b), mul(a, db)), power(b, Const(2.0)))
    if isinstance(e, Pow):
        a, b = e.left, e.right
        da, db = partial(a, v, memo), partial(b, v, memo)
        if _is_const(db, 0.0):
            if isinstance(b, Const):
                lowered = power(a, Const(b.value - 1.0))
            else:
                lowered = power(a, sub(b, ONE))
            return mul(mul(b, lowered), da)
        # general case a^b (b' log a + b a'/a)
        return mul(e, add(mul(db, Log(a)), div(mul(b, da), a)))
    a = e.arg
    da = partial(a, v, memo)
    if isinstance(e, Sin):
        return mul(Cos(a), da)
    if isinstance(e, Cos):
        return neg(mul(Sin(a), da))
    if isinstance(e, Exp):
        return mul(e, da)
    if isinstance(e, Log):
        return div(da, a)
    if isinstance(e, Sqrt):
        return div(da, mul(Const(2.0), e))
    raise TypeError(f"cannot differentiate {type(e).__name__}")


def total_derivative(e: Expr) -> Expr:
    """d/dtheta along a state trajectory: raises state orders by one."""
    cached = e._cache.get("D")
    if cached is not None:
        return cached
    slots = sorted(variables(e))
    terms = []
    for ref in slots:
        if ref.kind == "theta":
            terms.append(partial(e, ref))
        elif ref.kind == "q":
            terms.append(mul(partial(e, ref), Var(state(ref.index, ref.order + 1))))
    out = sum_exprs(terms)
    e._cache["D"] = out
    return out


def total_derivative_n(e: Expr, k: int) -> Expr:
    for _ in range(k):
        e = total_derivative(e)
    return e


def substitute(e: Expr, mapping: Mapping[VarRef, Expr], _memo: dict | None = None) -> Expr:
    """Replace variable slots by expressions (no simplification)."""
    memo = {} if _memo is None else _memo
    hit = memo.get(e)
    if hit is not None:
        return hit
    if isinstance(e, Var):
        out = mapping.get(e.ref, e)
    elif isinstance(e, Const):
        out = e
    else:
        out = type(e)(*(substitute(c, mapping, memo) for c in e.args))
    memo[e] = out
    return out


# ---------------------------------------------------------------------------
# printing


def _format_number(x: float) -> str:
    if math.isfinite(x) and x.is_integer() and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def to_string(e: Expr) -> str:
    """Print in the formula grammar; ``parse(to_string(e)) is e``."""
    if isinstance(e, Const):
        if not math.isfinite(e.value):
            raise ValueError("non-finite constants have no formula representation")
        return _format_number(e.value)
    if isinstance(e, Var):
        return e.ref.name
    if isinstance(e, Func):
        return f"{e.fname}({to_string(e.arg)})"
    if isinstance(e, Neg):
        a = e.arg
        # a bare literal after '-' would re-parse as a negative constant
        if isinstance(a, Const) or a.precedence < 3:
            return f"-({to_string(a)})"
        return f"-{to_string(a)}"
    if isinstance(e, Pow):
        left = to_string(e.left)
        if e.left.precedence <= Pow.precedence:
            left = f"({left})"
        right = to_string(e.right)
        if e.right.precedence < 3:
            right = f"({right})"
        return f"{left}^{right}"
    # left-associative binary operators
    p = e.precedence
    left = to_string(e.left)
    if e.left.precedence < p:
        left = f"({left})"
    right = to_string(e.right)
    if e.right.precedence <= p:
        right = f"({right})"
    return f"{left}{e.symbol}{right}"


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)
_STATE = re.compile(r"q(\d+)(?:d(\d+))?$")
_INDEXED = re.compile(r"([up])(\d+)$")


def _tokenize(text: str):
    pos = 0
    tokens = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ParseError(f"unexpected character {text[start]!r}", start)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, state_dim: int | None, control_dim: int | None, max_deriv: int | None):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.state_dim = state_dim
        self.control_dim = control_dim
        self.max_deriv = max_deriv

    def peek(self, offset: int = 0):
        return self.tokens[min(self.i + offset, len(self.tokens) - 1)]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.take()
        if val != value:
            raise ParseError(f"expected {value!r}, found {val or 'end of input'!r}", pos)

    def parse(self) -> Expr:
        e = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {val!r}", pos)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            e = Add(e, rhs) if op == "+" else Sub(e, rhs)
        return e

    def term(self) -> Expr:
        e = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.factor()
            e = Mul(e, rhs) if op == "*" else Div(e, rhs)
        return e

    def factor(self) -> Expr:
        kind, val, pos = self.peek()
        if kind == "op" and val == "-":
            self.take()
            nkind, nval, _ = self.peek()
            if nkind == "num" and self.peek(1)[1] != "^":
                self.take()
                return Const(-float(nval))
            return Neg(self.factor())
        base = self.base()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.take()
            return Pow(base, self.factor())
        return base

    def base(self) -> Expr:
        kind, val, pos = self.take()
        if kind == "num":
            return Const(float(val))
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "ident":
            if val in FUNCTIONS:
                if self.peek()[1] != "(":
                    raise ParseError(f"function {val!r} needs an argument in parentheses", self.peek()[2])
                self.take()
                arg = self.expr()
                self.expect(")")
                return FUNCTIONS[val](arg)
            return Var(self.variable(val, pos))
        raise ParseError(f"unexpected token {val or 'end of input'!r}", pos)

    def variable(self, name: str, pos: int) -> VarRef:
        if name == "theta":
            return THETA
        m = _STATE.match(name)
        if m:
            i, d = int(m.group(1)), int(m.group(2) or 0)
            if self.state_dim is not None and i >= self.state_dim:
                raise ParseError(f"state index {i} out of range for state_dim={self.state_dim}", pos)
            if self.max_deriv is not None and d > self.max_deriv:
                raise ParseError(f"derivative order exceeded: {name} has order {d} > {self.max_deriv}", pos)
            return state(i, d)
        m = _INDEXED.match(name)
        if m:
            kind, j = m.group(1), int(m.group(2))
            if kind == "u":
                if self.control_dim is not None and j >= self.control_dim:
                    raise ParseError(f"control index {j} out of range for control_dim={self.control_dim}", pos)
                return control(j)
            if self.state_dim is not None and j >= self.state_dim:
                raise ParseError(f"costate index {j} out of range for state_dim={self.state_dim}", pos)
            return costate(j)
        raise ParseError(f"unknown variable {name!r}", pos)


def parse(
    text: str,
    state_dim: int | None = None,
    control_dim: int | None = None,
    max_deriv: int | None = None,
) -> Expr:
    """Parse a formula; dimensions of ``None`` are unchecked.

    >>> parse("0.5*q0d1^2")
    Mul(Const(0.5), Pow(Var(VarRef(kind='q', index=0, order=1)), Const(2.0)))
    """
    return _Parser(text, state_dim, control_dim, max_deriv).parse()


# ---------------------------------------------------------------------------
# evaluation

_BINOPS = {Add: "+", Sub: "-", Mul: "*", Div: "/"}
_FUNCS = {Sin: "np.sin", Cos: "np.cos", Exp: "np.exp", Log: "np.log", Sqrt: "np.sqrt"}


def _var_code(ref: VarRef) -> str:
    if ref.kind == "theta":
        return "theta"
    if ref.kind == "q":
        return f"q[{ref.index}, {ref.order}]"
    return f"{ref.kind}[{ref.index}]"


def _codegen(roots: Sequence[Expr]) -> tuple[str, list]:
    names: dict[Expr, str] = {}
    consts: list[float] = []
    lines: list[str] = []

    def visit(e: Expr) -> str:
        name = names.get(e)
        if name is not None:
            return name
        if isinstance(e, Const):
            consts.append(e.value)
            code = f"c[{len(consts) - 1}]"
        elif isinstance(e, Var):
            code = _var_code(e.ref)
        else:
            # iterative post-order would avoid recursion, but trees stay shallow
            kids = [visit(c) for c in e.args]
            if isinstance(e, Pow):
                code = f"np.power({kids[0]}, {kids[1]})"
            elif isinstance(e, Neg):
                code = f"-{kids[0]}"
            elif isinstance(e, Func):
                code = f"{_FUNCS[type(e)]}({kids[0]})"
            else:
                code = f"{kids[0]} {_BINOPS[type(e)]} {kids[1]}"
        if isinstance(e, (Const, Var)):
            names[e] = code
            return code
        name = f"t{len(lines)}"
        lines.append(f"    {name} = {code}")
        names[e] = name
        return name

    outs = [visit(r) for r in roots]
    src = "def _f(theta, q, u, p, c):\n" + "\n".join(lines)
    src += ("\n" if lines else "") + f"    return ({', '.join(outs)},)\n"
    return src, consts


def compile_expr(roots: Expr | Sequence[Expr]) -> Callable[[Jet], tuple]:
    """Compile one or several expressions into a function of a Jet.

    The returned callable gives a tuple of values (scalars or arrays,
    matching the jet) and applies no domain checks; see :func:`evaluate`.
    """
    single = isinstance(roots, Expr)
    roots = [roots] if single else list(roots)
    if single:
        cached = roots[0]._cache.get("fn")
        if cached is not None:
            return cached
    src, consts = _codegen(roots)
    namespace = {"np": np}
    exec(compile(src, "<falva-expr>", "exec"), namespace)
    raw = namespace["_f"]
    c = np.array(consts, dtype=float)

    def fn(jet: Jet):
        return raw(jet.theta, jet.q, jet.u, jet.p, c)

    if single:
        roots[0]._cache["fn"] = fn
    return fn


def _check_slots(e: Expr, jet: Jet):
    for ref in variables(e):
        if ref.kind == "q":
            if ref.index >= jet.q.shape[0] or ref.order >= jet.q.shape[1]:
                raise EvaluationError(f"jet has no slot for {ref.name}")
        elif ref.kind in ("u", "p"):
            vec = jet.u if ref.kind == "u" else jet.p
            if vec is None or ref.index >= len(vec):
                raise EvaluationError(f"jet has no slot for {ref.name}")


def evaluate(e: Expr, jet: Jet):
    """Evaluate ``e`` on ``jet``; domain errors raise EvaluationError.

    Overflow follows IEEE semantics (yields inf).
    """
    _check_slots(e, jet)
    fn = compile_expr(e)
    try:
        with np.errstate(divide="raise", invalid="raise", over="ignore"):
            (value,) = fn(jet)
    except (FloatingPointError, ZeroDivisionError) as exc:
        raise EvaluationError(f"cannot evaluate {to_string(e)}: {exc}") from exc
    if np.ndim(jet.theta) == 0:
        return float(value)
    return np.broadcast_to(value, np.shape(jet.theta)).astype(float)
