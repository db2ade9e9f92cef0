"""A small expression language for smooth test maps.

Grammar::

    map   := "(" expr ("," expr)* ")"
    expr  := infix over + - * ^ with unary minus, numbers, x<i>,
             and sin/cos/exp applied to one parenthesised argument

Precedence, loosest first: ``+ -``, ``*``, unary ``-``, ``^`` (right
associative, nonnegative integer exponent). There is no division, so
every expression is a globally smooth function.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}


class ParseError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.message = message
        self.line = line
        self.column = column


# ---------------------------------------------------------------- AST


class Expr:
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __sub__(self, other):
        return sub(self, other)


@dataclass(frozen=True)
class Const(Expr):
    value: Fraction

    def __str__(self):
        v = self.value
        return str(v.numerator) if v.denominator == 1 else f"{float(v)!r}"


@dataclass(frozen=True)
class Var(Expr):
    index: int

    def __str__(self):
        return f"x{self.index}"


@dataclass(frozen=True)
class BinOp(Expr):
    op: str  # "+", "-", "*"
    left: Expr
    right: Expr

    def __str__(self):
        if self.op == "*":
            return f"{_wrap(self.left, 2)}*{_wrap(self.right, 2, right=True)}"
        return f"{_wrap(self.left, 1)} {self.op} {_wrap(self.right, 1, right=self.op == '-')}"


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr

    def __str__(self):
        return f"-{_wrap(self.arg, 3)}"


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int

    def __str__(self):
        return f"{_wrap(self.base, 4, right=True)}^{self.exponent}"


@dataclass(frozen=True)
class Call(Expr):
    name: str
    arg: Expr

    def __str__(self):
        return f"{self.name}({self.arg})"


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return 2 if e.op == "*" else 1
    if isinstance(e, Neg):
        return 3
    if isinstance(e, Const) and e.value < 0:
        return 3
    if isinstance(e, Pow):
        return 4
    return 5


def _wrap(e: Expr, outer: int, right: bool = False) -> str:
    p = _prec(e)
    if p < outer or (right and p == outer and outer in (1, 4)):
        return f"({e})"
    return str(e)


# ------------------------------------------------------- smart constructors

ZERO = Const(Fraction(0))
ONE = Const(Fraction(1))


def const(v) -> Const:
    return Const(Fraction(v))


def _is(e: Expr, v) -> bool:
    return isinstance(e, Const) and e.value == v


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    if isinstance(b, Neg):
        return BinOp("-", a, b.arg)
    return BinOp("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if _is(b, 0):
        return a
    if _is(a, 0):
        return neg(b)
    if isinstance(b, Neg):
        return BinOp("+", a, b.arg)
    return BinOp("-", a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if _is(a, 0) or _is(b, 0):
        return ZERO
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    if _is(a, -1):
        return neg(b)
    if _is(b, -1):
        return neg(a)
    if isinstance(b, Const):
        a, b = b, a
    # gather constant factors on the left: c1*(c2*e) -> (c1*c2)*e
    if isinstance(a, Const) and isinstance(b, BinOp) and b.op == "*" and isinstance(b.left, Const):
        return mul(Const(a.value * b.left.value), b.right)
    if isinstance(b, BinOp) and b.op == "*" and not isinstance(a, BinOp):
        # keep products left-associated so they print as a*b*c
        return BinOp("*", mul(a, b.left), b.right)
    return BinOp("*", a, b)


def power(a: Expr, k: int) -> Expr:
    if k == 0:
        return ONE
    if k == 1:
        return a
    if isinstance(a, Const):
        return Const(a.value**k)
    return Pow(a, k)


# ------------------------------------------------------------- lexer


_TOKEN = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<nl>\n)|(?P<num>\d+(?:\.\d*)?|\.\d+)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*^(),])"
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    column: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind != "ws":
            tokens.append(Token(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# ------------------------------------------------------------ parser

_INFIX = {"+": (10, 11), "-": (10, 11), "*": (20, 21), "^": (41, 40)}
_PREFIX_MINUS = 30


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.i = 0

    def peek(self) -> Token:
        return self.tokens[self.i]

    def next(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, message: str, tok: Token | None = None):
        tok = tok or self.peek()
        if tok.kind == "eof" and self.i > 0:
            # point at the token that was left dangling
            last = self.tokens[self.i - 1]
            raise ParseError(f"{message} after {last.text!r}", last.line, last.column)
        raise ParseError(message, tok.line, tok.column)

    def expect(self, text: str) -> Token:
        tok = self.peek()
        if tok.text != text:
            what = "end of input" if tok.kind == "eof" else repr(tok.text)
            self.fail(f"expected {text!r}, found {what}")
        return self.next()

    def parse_map(self) -> list[Expr]:
        self.expect("(")
        exprs = [self.expr(0)]
        while self.peek().text == ",":
            self.next()
            exprs.append(self.expr(0))
        self.expect(")")
        if self.peek().kind != "eof":
            self.fail(f"unexpected trailing input {self.peek().text!r}")
        return exprs

    def expr(self, min_bp: int) -> Expr:
        lhs = self.prefix()
        while True:
            tok = self.peek()
            if tok.kind != "op" or tok.text not in _INFIX:
                return lhs
            lbp, rbp = _INFIX[tok.text]
            if lbp < min_bp:
                return lhs
            self.next()
            if tok.text == "^":
                lhs = Pow(lhs, self.exponent())
                continue
            rhs = self.expr(rbp)
            lhs = BinOp(tok.text, lhs, rhs)

    def exponent(self) -> int:
        tok = self.peek()
        if tok.kind == "eof":
            self.fail("expected exponent")
        if tok.kind != "num" or not tok.text.isdigit():
            self.fail("exponent must be a nonnegative integer literal", tok)
        self.next()
        return int(tok.text)

    def prefix(self) -> Expr:
        tok = self.next()
        if tok.kind == "num":
            return Const(Fraction(tok.text))
        if tok.kind == "name":
            m = re.fullmatch(r"x(\d+)", tok.text)
            if m:
                return Var(int(m.group(1)))
            if tok.text not in FUNCTIONS:
                raise ParseError(f"unknown identifier {tok.text!r}", tok.line, tok.column)
            open_tok = self.peek()
            if open_tok.text != "(":
                self.fail(f"function {tok.text!r} needs a parenthesised argument")
            self.next()
            arg = self.expr(0)
            if self.peek().text == ",":
                t = self.peek()
                raise ParseError(f"{tok.text} takes exactly one argument", t.line, t.column)
            self.expect(")")
            return Call(tok.text, arg)
        if tok.text == "-":
            return Neg(self.expr(_PREFIX_MINUS))
        if tok.text == "(":
            inner = self.expr(0)
            self.expect(")")
            return inner
        self.i -= 1
        if tok.kind == "eof":
            self.fail("expected expression")
        self.fail(f"unexpected {tok.text!r}", tok)


def parse_exprs(text: str) -> list[Expr]:
    return _Parser(text).parse_map()


def parse_expr(text: str) -> Expr:
    return parse_exprs(f"({text})")[0]


# -------------------------------------------------- analysis & transforms


def max_var(e: Expr) -> int:
    if isinstance(e, Var):
        return e.index
    if isinstance(e, Const):
        return -1
    if isinstance(e, BinOp):
        return max(max_var(e.left), max_var(e.right))
    if isinstance(e, (Neg, Call)):
        return max_var(e.arg)
    if isinstance(e, Pow):
        return max_var(e.base)
    raise TypeError(e)


def simplify(e: Expr) -> Expr:
    if isinstance(e, (Const, Var)):
        return e
    if isinstance(e, BinOp):
        a, b = simplify(e.left), simplify(e.right)
        return {"+": add, "-": sub, "*": mul}[e.op](a, b)
    if isinstance(e, Neg):
        return neg(simplify(e.arg))
    if isinstance(e, Pow):
        return power(simplify(e.base), e.exponent)
    if isinstance(e, Call):
        arg = simplify(e.arg)
        if isinstance(arg, Const) and arg.value == 0:
            return {"sin": ZERO, "cos": ONE, "exp": ONE}[e.name]
        return Call(e.name, arg)
    raise TypeError(e)


def differentiate(e: Expr, var: int) -> Expr:
    """Symbolic partial derivative with respect to x<var>."""
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.index == var else ZERO
    if isinstance(e, BinOp):
        da, db = differentiate(e.left, var), differentiate(e.right, var)
        if e.op == "+":
            return add(da, db)
        if e.op == "-":
            return sub(da, db)
        return add(mul(da, e.right), mul(e.left, db))
    if isinstance(e, Neg):
        return neg(differentiate(e.arg, var))
    if isinstance(e, Pow):
        db = differentiate(e.base, var)
        if _is(db, 0):
            return ZERO
        return mul(mul(const(e.exponent), power(e.base, e.exponent - 1)), db)
    if isinstance(e, Call):
        du = differentiate(e.arg, var)
        if _is(du, 0):
            return ZERO
        if e.name == "sin":
            outer = Call("cos", e.arg)
        elif e.name == "cos":
            outer = neg(Call("sin", e.arg))
        else:
            outer = e
        return mul(outer, du)
    raise TypeError(e)


def evaluate(e: Expr, x: np.ndarray) -> np.ndarray:
    """Evaluate on points ``x`` of shape (N, n); returns shape (N,)."""
    if isinstance(e, Const):
        return np.full(x.shape[0], float(e.value))
    if isinstance(e, Var):
        return x[:, e.index].astype(float, copy=True)
    if isinstance(e, BinOp):
        a, b = evaluate(e.left, x), evaluate(e.right, x)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        return a * b
    if isinstance(e, Neg):
        return -evaluate(e.arg, x)
    if isinstance(e, Pow):
        return evaluate(e.base, x) ** e.exponent
    if isinstance(e, Call):
        return FUNCTIONS[e.name](evaluate(e.arg, x))
    raise TypeError(e)


def polynomial_degree(e: Expr) -> int | None:
    """Total degree if ``e`` is a polynomial, else None."""
    if isinstance(e, Const):
        return 0
    if isinstance(e, Var):
        return 1
    if isinstance(e, BinOp):
        a, b = polynomial_degree(e.left), polynomial_degree(e.right)
        if a is None or b is None:
            return None
        return a + b if e.op == "*" else max(a, b)
    if isinstance(e, Neg):
        return polynomial_degree(e.arg)
    if isinstance(e, Pow):
        a = polynomial_degree(e.base)
        return None if a is None else a * e.exponent
    return None
