"""A small expression language for coefficient and forcing fields.

Grammar (``^`` binds tighter than unary minus, as in ordinary notation)::

    expr  := term (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := ('-' | '+') unary | power
    power := atom ('^' unary)?
    atom  := number | 'x' | 'y' | 'pi' | func '(' expr (',' expr)* ')' | '(' expr ')'

So ``-x^2`` is ``-(x^2)`` and ``2^-1`` is ``0.5``; ``^`` is right-associative.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ConfigurationError


class ExprError(ConfigurationError):
    """Malformed expression; ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


Expr = Union[Num, Var, Neg, BinOp, Call]

FUNCTIONS = {
    "sin": (np.sin, 1),
    "cos": (np.cos, 1),
    "exp": (np.exp, 1),
    "abs": (np.abs, 1),
    "sqrt": (np.sqrt, 1),
    "tanh": (np.tanh, 1),
    "min": (None, 2),
    "max": (None, 2),
}
VARIABLES = ("x", "y")
CONSTANTS = {"pi": np.pi}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^(),]))"
)


def tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    data = text.encode()
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            offset = len(text[:pos].encode()) + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExprError(f"unexpected character {text[pos:].lstrip()[0]!r}", offset)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), len(text[:start].encode())))
        pos = m.end()
    tokens.append(("end", "", len(data)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, offset = self.advance()
        if text != value or kind != "op":
            raise ExprError(f"expected {value!r}, found {text or 'end of input'!r}", offset)

    def parse(self) -> Expr:
        node = self.expr()
        kind, text, offset = self.peek()
        if kind != "end":
            raise ExprError(f"unexpected {text!r}", offset)
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return Neg(self.unary())
        if kind == "op" and text == "+":
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
        kind, text, offset = self.advance()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if text in FUNCTIONS:
                return self.call(text, offset)
            if text in VARIABLES:
                return Var(text)
            if text in CONSTANTS:
                return Var(text)
            raise ExprError(f"unknown identifier {text!r}", offset)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise ExprError(f"unexpected {text or 'end of input'!r}", offset)

    def call(self, name: str, offset: int) -> Call:
        self.expect("(")
        args = [self.expr()]
        while self.peek()[0] == "op" and self.peek()[1] == ",":
            self.advance()
            args.append(self.expr())
        self.expect(")")
        arity = FUNCTIONS[name][1]
        if (arity == 1 and len(args) != 1) or (arity == 2 and len(args) < 2):
            need = "1 argument" if arity == 1 else "at least 2 arguments"
            raise ExprError(f"{name} takes {need}, got {len(args)}", offset)
        return Call(name, tuple(args))


def parse_expr(text: str) -> Expr:
    if not text or not text.strip():
        raise ExprError("empty expression", 0)
    return _Parser(text).parse()


def to_string(node: Expr) -> str:
    """Fully parenthesised text that parses back to the same tree."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_string(node.operand)})"
    if isinstance(node, BinOp):
        return f"({to_string(node.left)} {node.op} {to_string(node.right)})"
    return f"{node.name}({', '.join(to_string(a) for a in node.args)})"


def variables(node: Expr) -> set:
    if isinstance(node, Var):
        return {node.name} if node.name in VARIABLES else set()
    if isinstance(node, Neg):
        return variables(node.operand)
    if isinstance(node, BinOp):
        return variables(node.left) | variables(node.right)
    if isinstance(node, Call):
        return set().union(*(variables(a) for a in node.args))
    return set()


def evaluate(node: Expr, x, y=None):
    """Vectorised evaluation; ``y`` is required only if the expression uses it."""
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        if node.name in CONSTANTS:
            return CONSTANTS[node.name]
        if node.name == "x":
            return x
        if y is None:
            raise ConfigurationError("expression uses y on a one-dimensional grid")
        return y
    if isinstance(node, Neg):
        return -evaluate(node.operand, x, y)
    if isinstance(node, BinOp):
        a, b = evaluate(node.left, x, y), evaluate(node.right, x, y)
        with np.errstate(all="ignore"):
            if node.op == "+":
                return a + b
            if node.op == "-":
                return a - b
            if node.op == "*":
                return a * b
            if node.op == "/":
                return np.divide(a, b)
            return np.power(np.asarray(a, dtype=float), b)
    fn, _ = FUNCTIONS[node.name]
    args = [evaluate(a, x, y) for a in node.args]
    if node.name == "min":
        return np.minimum.reduce(np.broadcast_arrays(*args))
    if node.name == "max":
        return np.maximum.reduce(np.broadcast_arrays(*args))
    with np.errstate(all="ignore"):
        return fn(args[0])


def as_function(text: str):
    """Compile ``text`` into ``fn(*coords)`` suitable for grid sampling."""
    tree = parse_expr(text)

    def fn(*coords):
        return evaluate(tree, coords[0], coords[1] if len(coords) > 1 else None)

    fn.expr = tree
    fn.source = text
    return fn
