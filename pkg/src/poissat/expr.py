"""Tiny expression language for coefficient functions.

Grammar (documented contract, see README):

    expr   := ['-'] term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := base ('^' integer)?
    base   := number | ident | func '(' expr ')' | '(' expr ')'

with func one of sin, cos, exp.  Variables are x1..xn for arity n; the
usual short names (x, y, z, th) are accepted for low arities, and callers
may pass an explicit name table.  Expressions are immutable trees; eval is
vectorized over numpy point batches and derivatives are exact trees, never
finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FUNCS = ("sin", "cos", "exp")


class ExprError(ValueError):
    """Parse failure, carries the 0-based offset in .position."""

    def __init__(self, message, position):
        super().__init__(f"{message} (position {position})")
        self.position = position


class EvalError(ValueError):
    """Non-finite evaluation, carries the offending point in .point."""

    def __init__(self, message, point):
        super().__init__(message)
        self.point = tuple(float(v) for v in np.atleast_1d(point))


class Expression:
    __slots__ = ()

    def __str__(self):
        return _print(self, 0)

    def __call__(self, pts):
        return evaluate(self, pts)


@dataclass(frozen=True, eq=True)
class Num(Expression):
    value: float

    def _ev(self, cols):
        return self.value

    def _diag(self, cols):
        return self.value


@dataclass(frozen=True, eq=True)
class Var(Expression):
    index: int

    def _ev(self, cols):
        return cols[self.index]

    def _diag(self, cols):
        return cols[self.index]


@dataclass(frozen=True, eq=True)
class Add(Expression):
    a: Expression
    b: Expression

    def _ev(self, cols):
        return self.a._ev(cols) + self.b._ev(cols)

    def _diag(self, cols):
        return _check(self.a._diag(cols) + self.b._diag(cols), "addition")


@dataclass(frozen=True, eq=True)
class Sub(Expression):
    a: Expression
    b: Expression

    def _ev(self, cols):
        return self.a._ev(cols) - self.b._ev(cols)

    def _diag(self, cols):
        return _check(self.a._diag(cols) - self.b._diag(cols), "subtraction")


@dataclass(frozen=True, eq=True)
class Mul(Expression):
    a: Expression
    b: Expression

    def _ev(self, cols):
        return self.a._ev(cols) * self.b._ev(cols)

    def _diag(self, cols):
        return _check(self.a._diag(cols) * self.b._diag(cols), "multiplication")


@dataclass(frozen=True, eq=True)
class Div(Expression):
    a: Expression
    b: Expression

    def _ev(self, cols):
        return self.a._ev(cols) / self.b._ev(cols)

    def _diag(self, cols):
        return _check(self.a._diag(cols) / self.b._diag(cols), "division")


@dataclass(frozen=True, eq=True)
class Pow(Expression):
    base: Expression
    exponent: int

    def _ev(self, cols):
        return self.base._ev(cols) ** self.exponent

    def _diag(self, cols):
        return _check(self.base._diag(cols) ** self.exponent, "integer power")


@dataclass(frozen=True, eq=True)
class Neg(Expression):
    a: Expression

    def _ev(self, cols):
        return -self.a._ev(cols)

    def _diag(self, cols):
        return -self.a._diag(cols)


@dataclass(frozen=True, eq=True)
class Call(Expression):
    func: str
    a: Expression

    def _ev(self, cols):
        return getattr(np, self.func)(self.a._ev(cols))

    def _diag(self, cols):
        return _check(getattr(np, self.func)(self.a._diag(cols)), self.func)


def _check(value, label):
    if not np.isfinite(value):
        raise _NonFinite(label)
    return value


class _NonFinite(Exception):
    pass


# Smart constructors.  Constant folding only; this is derivative hygiene,
# not a simplification engine.


def _is_num(e, v=None):
    return isinstance(e, Num) and (v is None or e.value == v)


def add(a, b):
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    if _is_num(a) and _is_num(b):
        return Num(a.value + b.value)
    return Add(a, b)


def sub(a, b):
    if _is_num(b, 0.0):
        return a
    if _is_num(a) and _is_num(b):
        return Num(a.value - b.value)
    if _is_num(a, 0.0):
        return neg(b)
    return Sub(a, b)


def mul(a, b):
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return Num(0.0)
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    if _is_num(a) and _is_num(b):
        return Num(a.value * b.value)
    return Mul(a, b)


def div(a, b):
    if _is_num(a, 0.0):
        return Num(0.0)
    if _is_num(b, 1.0):
        return a
    if _is_num(a) and _is_num(b) and b.value != 0.0:
        return Num(a.value / b.value)
    return Div(a, b)


def pow_(base, k):
    k = int(k)
    if k == 0:
        return Num(1.0)
    if k == 1:
        return base
    if _is_num(base):
        return Num(base.value**k)
    return Pow(base, k)


def neg(a):
    if _is_num(a):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.a
    return Neg(a)


def default_names(arity: int) -> dict:
    """Name table mapping accepted identifiers to variable positions."""
    names = {}
    for i in range(arity):
        names[f"x{i + 1}"] = i
        names[f"u{i + 1}"] = i
    if arity <= 4:
        for pos, alias in enumerate(("x", "y", "z")):
            if pos < arity:
                names[alias] = pos
    if arity == 4:
        for alias in ("th", "theta", "θ"):
            names[alias] = 3
    if arity == 1:
        names["t"] = 0
    if arity <= 2:
        names["u"] = 0
        if arity == 2:
            names["v"] = 1
    return names


# Tokenizer


def _tokens(text):
    out = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in "+-*/^()":
            out.append((c, c, i))
            i += 1
            continue
        if c.isdigit() or c == ".":
            j = i
            seen_dot = False
            while j < n and (text[j].isdigit() or (text[j] == "." and not seen_dot)):
                seen_dot = seen_dot or text[j] == "."
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            tok = text[i:j]
            try:
                float(tok)
            except ValueError:
                raise ExprError(f"malformed number '{tok}'", i) from None
            out.append(("num", tok, i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            out.append(("ident", text[i:j], i))
            i = j
            continue
        raise ExprError(f"unexpected character '{c}'", i)
    out.append(("end", "", n))
    return out


class _Parser:
    def __init__(self, text, arity, names):
        self.text = text
        self.arity = arity
        self.names = names
        self.toks = _tokens(text)
        self.pos = 0

    def peek(self):
        return self.toks[self.pos]

    def take(self, kind=None):
        tok = self.toks[self.pos]
        if kind is not None and tok[0] != kind:
            raise ExprError(f"expected {kind}, found '{tok[1] or 'end of input'}'", tok[2])
        self.pos += 1
        return tok

    def parse(self):
        e = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ExprError(f"trailing input '{tok[1]}'", tok[2])
        return e

    def expr(self):
        negate = False
        if self.peek()[0] == "-":
            self.take()
            negate = True
        e = self.term()
        if negate:
            e = neg(e)
        while self.peek()[0] in ("+", "-"):
            op = self.take()[0]
            rhs = self.term()
            e = add(e, rhs) if op == "+" else sub(e, rhs)
        return e

    def term(self):
        e = self.factor()
        while self.peek()[0] in ("*", "/"):
            op = self.take()[0]
            rhs = self.factor()
            e = mul(e, rhs) if op == "*" else div(e, rhs)
        return e

    def factor(self):
        e = self.base()
        if self.peek()[0] == "^":
            self.take()
            sign = 1
            if self.peek()[0] == "-":
                self.take()
                sign = -1
            tok = self.take("num")
            if "." in tok[1] or "e" in tok[1] or "E" in tok[1]:
                raise ExprError("integer exponent required", tok[2])
            e = pow_(e, sign * int(tok[1]))
        return e

    def base(self):
        kind, text, at = self.peek()
        if kind == "num":
            self.take()
            return Num(float(text))
        if kind == "(":
            self.take()
            e = self.expr()
            self.take(")")
            return e
        if kind == "ident":
            self.take()
            if text in FUNCS:
                self.take("(")
                arg = self.expr()
                self.take(")")
                return Call(text, arg)
            if text in self.names:
                return Var(self.names[text])
            raise ExprError(f"unknown variable '{text}' for arity {self.arity}", at)
        raise ExprError(f"expected a value, found '{text or 'end of input'}'", at)


def parse(text: str, arity: int, names=None) -> Expression:
    """Parse text into an Expression over `arity` variables.

    `names` maps variable names to 0-based slots; a plain sequence of
    names is taken positionally.
    """
    if names is None:
        names = default_names(arity)
    else:
        if not isinstance(names, dict):
            names = {n: i for i, n in enumerate(names)}
        bad = [n for n, i in names.items() if not 0 <= i < arity]
        if bad:
            raise ValueError(f"name table indices out of range: {bad}")
    return _Parser(text, arity, names).parse()


def derive(e: Expression, i: int) -> Expression:
    """Exact partial derivative with respect to variable i (0-based)."""
    if isinstance(e, Num):
        return Num(0.0)
    if isinstance(e, Var):
        return Num(1.0) if e.index == i else Num(0.0)
    if isinstance(e, Add):
        return add(derive(e.a, i), derive(e.b, i))
    if isinstance(e, Sub):
        return sub(derive(e.a, i), derive(e.b, i))
    if isinstance(e, Mul):
        return add(mul(derive(e.a, i), e.b), mul(e.a, derive(e.b, i)))
    if isinstance(e, Div):
        num = sub(mul(derive(e.a, i), e.b), mul(e.a, derive(e.b, i)))
        return div(num, mul(e.b, e.b))
    if isinstance(e, Pow):
        return mul(mul(Num(float(e.exponent)), pow_(e.base, e.exponent - 1)), derive(e.base, i))
    if isinstance(e, Neg):
        return neg(derive(e.a, i))
    if isinstance(e, Call):
        da = derive(e.a, i)
        if e.func == "sin":
            return mul(Call("cos", e.a), da)
        if e.func == "cos":
            return neg(mul(Call("sin", e.a), da))
        return mul(e, da)  # exp
    raise TypeError(f"not an Expression: {e!r}")


def evaluate(e: Expression, pts):
    """Evaluate at one point (1d array) or a batch (m, arity).

    Raises EvalError on any non-finite result, naming the failing
    operation and the offending point.
    """
    pts = np.asarray(pts, dtype=float)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    m = pts.shape[0]
    cols = tuple(np.ascontiguousarray(pts[:, i]) for i in range(pts.shape[1]))
    with np.errstate(all="ignore"):
        out = np.broadcast_to(np.asarray(e._ev(cols), dtype=float), (m,))
    bad = ~np.isfinite(out)
    if bad.any():
        k = int(np.argmax(bad))
        point = pts[k]
        scalar_cols = tuple(np.float64(v) for v in point)
        label = "evaluation"
        try:
            with np.errstate(all="ignore"):
                e._diag(scalar_cols)
        except _NonFinite as nf:
            label = str(nf)
        raise EvalError(
            f"non-finite result from {label} at point {tuple(float(v) for v in point)}",
            point,
        )
    if single:
        return float(out[0])
    return np.array(out, dtype=float)


# Printing.  Parenthesization reproduces the exact tree on re-parse, so a
# round trip is bitwise faithful.

_LEVEL = {Add: 1, Sub: 1, Mul: 2, Div: 2, Pow: 3, Neg: 1}


def _print(e, parent_level, right=False):
    if isinstance(e, Num):
        v = e.value
        if v == int(v) and abs(v) < 1e16:
            s = str(int(v))
        else:
            s = repr(v)
        if v < 0 and parent_level > 0:
            return f"({s})"
        return s
    if isinstance(e, Var):
        return f"x{e.index + 1}"
    if isinstance(e, Call):
        return f"{e.func}({_print(e.a, 0)})"
    level = _LEVEL[type(e)]
    if isinstance(e, Neg):
        s = "-" + _print(e.a, 2)
    elif isinstance(e, Pow):
        # exponentiation does not chain in the grammar, so any compound
        # base must be parenthesized
        s = f"{_print(e.base, 4)}^{e.exponent}"
    else:
        op = {Add: " + ", Sub: " - ", Mul: "*", Div: "/"}[type(e)]
        s = _print(e.a, level) + op + _print(e.b, level, right=True)
    if level < parent_level or (level == parent_level and right):
        return f"({s})"
    return s
