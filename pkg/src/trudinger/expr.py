"""A small expression language for boundary data.

Grammar: numbers, variables ``x1..xn`` and ``t``, binary ``+ - * / ^``
(``^`` right-associative and binding tighter than unary minus), unary
``-``, parentheses and the functions ``sin cos exp log sqrt abs min max``.
Parsing is a Pratt loop over a regex tokenizer; evaluation is vectorized.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import DataError, ExpressionError

FUNCTIONS = {"sin": 1, "cos": 1, "exp": 1, "log": 1, "sqrt": 1, "abs": 1, "min": -2, "max": -2}
BINARY = {"+": (10, "left"), "-": (10, "left"), "*": (20, "left"), "/": (20, "left"), "^": (40, "right")}
UNARY_BP = 30
ATOM_BP = 100

_TOKEN = re.compile(r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
                    r"|(?P<op>[-+*/^(),]))")
_VAR = re.compile(r"x([1-9][0-9]*)$|t$")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class Bin:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    name: str
    args: Tuple


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    offset: int


def _byte_offset(text, i):
    return len(text[:i].encode("utf-8"))


def tokenize(text: str):
    out, i = [], 0
    while i < len(text):
        if text[i:].strip() == "":
            break
        m = _TOKEN.match(text, i)
        if not m:
            j = i
            while text[j].isspace():
                j += 1
            raise ExpressionError(f"unexpected character {text[j]!r}", _byte_offset(text, j))
        kind = m.lastgroup
        out.append(Token(kind, m.group(kind), _byte_offset(text, m.start(kind))))
        i = m.end()
    out.append(Token("end", "", _byte_offset(text, len(text))))
    return out


class _Parser:
    def __init__(self, text):
        self.toks = tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text):
        tok = self.take()
        if tok.text != text:
            raise ExpressionError(f"expected {text!r}, found {tok.text or 'end of input'!r}", tok.offset)
        return tok

    def expression(self, rbp=0):
        left = self.prefix()
        while True:
            tok = self.peek()
            if tok.kind != "op" or tok.text not in BINARY:
                break
            bp, assoc = BINARY[tok.text]
            if bp <= rbp:
                break
            self.take()
            right = self.expression(bp - 1 if assoc == "right" else bp)
            left = Bin(tok.text, left, right)
        return left

    def prefix(self):
        tok = self.take()
        if tok.kind == "num":
            return Num(float(tok.text))
        if tok.kind == "name":
            if tok.text in FUNCTIONS:
                return self.call(tok)
            if _VAR.match(tok.text):
                return Var(tok.text)
            raise ExpressionError(f"unknown identifier {tok.text!r}", tok.offset)
        if tok.text == "-":
            return Neg(self.expression(UNARY_BP))
        if tok.text == "(":
            inner = self.expression()
            self.expect(")")
            return inner
        raise ExpressionError(f"unexpected {tok.text or 'end of input'!r}", tok.offset)

    def call(self, name_tok):
        self.expect("(")
        args = [self.expression()]
        while self.peek().text == ",":
            self.take()
            args.append(self.expression())
        close = self.expect(")")
        arity = FUNCTIONS[name_tok.text]
        if (arity > 0 and len(args) != arity) or (arity < 0 and len(args) < -arity):
            raise ExpressionError(f"wrong number of arguments to {name_tok.text}", close.offset)
        return Call(name_tok.text, tuple(args))


def parse_tree(text: str):
    if not text or not text.strip():
        raise ExpressionError("empty expression", 0)
    p = _Parser(text)
    tree = p.expression()
    tok = p.peek()
    if tok.kind != "end":
        raise ExpressionError(f"unexpected {tok.text!r}", tok.offset)
    return tree


def _prec(node):
    if isinstance(node, Bin):
        return BINARY[node.op][0]
    if isinstance(node, Neg):
        return UNARY_BP
    return ATOM_BP


def to_text(node) -> str:
    """Print with the fewest parentheses that re-parse to the same tree."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.name}({', '.join(to_text(a) for a in node.args)})"
    if isinstance(node, Neg):
        inner = to_text(node.operand)
        return "-" + (f"({inner})" if _prec(node.operand) < UNARY_BP else inner)
    bp, assoc = BINARY[node.op]
    lp, rp = _prec(node.left), _prec(node.right)
    left, right = to_text(node.left), to_text(node.right)
    if lp < bp or (assoc == "right" and lp <= bp):
        left = f"({left})"
    if rp < bp or (assoc == "left" and rp <= bp):
        right = f"({right})"
    return f"{left}{node.op}{right}"


def variables(node) -> set:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Num):
        return set()
    if isinstance(node, Neg):
        return variables(node.operand)
    if isinstance(node, Bin):
        return variables(node.left) | variables(node.right)
    return set().union(*(variables(a) for a in node.args))


def _checked(name, arr, bad):
    if np.any(bad):
        raise DataError(f"{name} argument outside its domain")
    return arr


def _eval(node, env):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Neg):
        return -_eval(node.operand, env)
    if isinstance(node, Bin):
        a, b = _eval(node.left, env), _eval(node.right, env)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            _checked("division", b, np.asarray(b) == 0)
            return a / b
        with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
            out = np.power(np.asarray(a, dtype=float), b)
        return _checked("power", out, ~np.isfinite(out) & np.isfinite(a) & np.isfinite(b))
    args = [np.asarray(_eval(a, env), dtype=float) for a in node.args]
    name = node.name
    if name == "log":
        return np.log(_checked("log", args[0], args[0] <= 0))
    if name == "sqrt":
        return np.sqrt(_checked("sqrt", args[0], args[0] < 0))
    if name == "min":
        return np.minimum.reduce(np.broadcast_arrays(*args))
    if name == "max":
        return np.maximum.reduce(np.broadcast_arrays(*args))
    return {"sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs}[name](args[0])


class DataExpression:
    """Parsed expression; call with ``(N, n)`` points and ``(N,)`` times."""

    def __init__(self, text: str, n: int = None):
        self.source = text
        self.tree = parse_tree(text)
        self.names = variables(self.tree)
        if n is not None:
            for v in self.names:
                if v != "t" and int(v[1:]) > n:
                    raise ExpressionError(f"variable {v} exceeds the dimension n={n}")

    def __repr__(self):
        return f"DataExpression({self.source!r})"

    def text(self) -> str:
        return to_text(self.tree)

    def evaluate(self, **env):
        return _eval(self.tree, env)

    def __call__(self, x, t=None):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        env = {f"x{k + 1}": x[:, k] for k in range(x.shape[1])}
        for v in self.names:
            if v != "t" and v not in env:
                raise ExpressionError(f"variable {v} exceeds the point dimension {x.shape[1]}")
        env["t"] = np.zeros(len(x)) if t is None else np.broadcast_to(np.asarray(t, dtype=float), (len(x),))
        out = np.broadcast_to(np.asarray(_eval(self.tree, env), dtype=float), (len(x),))
        return np.array(out)


def parse_expression(text: str, n: int = None) -> DataExpression:
    return DataExpression(text, n)
