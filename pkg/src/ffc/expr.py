"""A small expression language over named real variables.

Grammar (whitespace is insignificant)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("-" | "+") unary | power
    power  := atom ("^" unary)?
    atom   := NUMBER | IDENT | FUNC "(" expr ")" | "(" expr ")"
    NUMBER := digits ["." digits] [("e" | "E") ["+" | "-"] digits]   (or "." digits ...)
    IDENT  := [a-zA-Z_][a-zA-Z0-9_]*

so ``^`` binds tighter than unary minus (``-x^2 == -(x^2)``) and is
right-associative; ``+ - * /`` are left-associative.  ``FUNC`` is one of
sin cos tan exp log sqrt abs sinh cosh tanh.  ``pi`` is a constant unless it
is declared as a variable.

Evaluation is generic over the value type: plain floats, or :class:`~ffc.jet.Jet`
objects for forward-mode derivatives.  ``abs`` is differentiated with
``sign(0) = +1``, so derivatives at ``abs``'s kink are one-sided.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import ParseError
from .jet import Jet, Jet2

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "sinh", "cosh", "tanh")
BINARY_OPS = ("+", "-", "*", "/", "^")

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[a-zA-Z_][a-zA-Z0-9_]*)"
    r"|(?P<op>[-+*/^()])"
    r")"
)


@dataclass(frozen=True)
class Literal:
    value: float


@dataclass(frozen=True)
class Variable:
    index: int


@dataclass(frozen=True)
class Unary:
    op: str  # "neg" or a FUNCTIONS name
    arg: "Node"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Node"
    right: "Node"


Node = Union[Literal, Variable, Unary, Binary]


@dataclass(frozen=True)
class Expression:
    root: Node
    variables: tuple

    def __str__(self):
        return to_string(self)

    def __call__(self, *values):
        return evaluate(self, values)

    def uses(self):
        """Indices of the variables that occur in the expression."""
        found = set()
        stack = [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, Variable):
                found.add(node.index)
            elif isinstance(node, Unary):
                stack.append(node.arg)
            elif isinstance(node, Binary):
                stack.extend((node.left, node.right))
        return found


# parsing ------------------------------------------------------------------


def _tokenize(text):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos:].isspace():
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos or m.lastgroup is None:
            start = pos
            while start < n and text[start].isspace():
                start += 1
            raise ParseError(f"unexpected character {text[start]!r}", _byte_offset(text, start))
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


def _byte_offset(text, index):
    return len(text[:index].encode("utf-8"))


class _Parser:
    def __init__(self, text, variables):
        self.text = text
        self.variables = list(variables)
        self.lookup = {name: i for i, name in enumerate(self.variables)}
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message, tok):
        raise ParseError(message, _byte_offset(self.text, tok[2]))

    def expect(self, value):
        tok = self.advance()
        if tok[1] != value or tok[0] != "op":
            what = "end of input" if tok[0] == "end" else repr(tok[1])
            self.error(f"expected {value!r}, found {what}", tok)

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            self.error(f"unexpected token {tok[1]!r}", tok)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.advance()[1]
            node = Binary(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.advance()[1]
            node = Binary(op, node, self.unary())
        return node

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "-":
            self.advance()
            return Unary("neg", self.unary())
        if tok[0] == "op" and tok[1] == "+":
            self.advance()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.advance()
            return Binary("^", base, self.unary())
        return base

    def atom(self):
        tok = self.advance()
        kind, text, _ = tok
        if kind == "num":
            return Literal(float(text))
        if kind == "ident":
            if text in self.lookup:
                return Variable(self.lookup[text])
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Unary(text, arg)
            if text == "pi":
                return Literal(math.pi)
            self.error(f"unknown identifier {text!r}", tok)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "end":
            self.error("unexpected end of input", tok)
        self.error(f"unexpected token {text!r}", tok)


def parse(text: str, variables: Sequence[str]) -> Expression:
    """Parse ``text`` into an :class:`Expression` over the ordered ``variables``."""
    names = tuple(variables)
    if len(set(names)) != len(names):
        raise ValueError("variable names must be distinct")
    for name in names:
        if not re.fullmatch(r"[a-zA-Z_][a-zA-Z0-9_]*", name) or name in FUNCTIONS:
            raise ValueError(f"invalid variable name {name!r}")
    if not text or text.isspace():
        raise ParseError("empty expression", 0)
    return Expression(_Parser(text, names).parse(), names)


# printing -----------------------------------------------------------------


def to_string(e: Expression) -> str:
    """Fully parenthesised text that parses back to an equivalent expression."""

    def emit(node):
        if isinstance(node, Literal):
            return f"({node.value!r})" if node.value < 0 else repr(node.value)
        if isinstance(node, Variable):
            return e.variables[node.index]
        if isinstance(node, Unary):
            if node.op == "neg":
                return f"(-{emit(node.arg)})"
            return f"{node.op}({emit(node.arg)})"
        return f"({emit(node.left)} {node.op} {emit(node.right)})"

    return emit(e.root)


# evaluation ---------------------------------------------------------------


class _Flag:
    __slots__ = ("raised",)

    def __init__(self):
        self.raised = False


def _float_unary(op, v, flag):
    try:
        if op == "neg":
            return -v
        if op == "log":
            if v <= 0.0:
                flag.raised = True
                return math.nan
            return math.log(v)
        if op == "sqrt":
            if v < 0.0:
                flag.raised = True
                return math.nan
            return math.sqrt(v)
        if op == "abs":
            return abs(v)
        if op == "exp":
            return math.exp(v)
        return getattr(math, op)(v)
    except OverflowError:
        flag.raised = True
        return math.inf
    except ValueError:
        flag.raised = True
        return math.nan


def _float_binary(op, a, b, flag):
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if b == 0.0:
            flag.raised = True
            return math.nan
        return a / b
    try:
        return math.pow(a, b)
    except (ValueError, ZeroDivisionError):
        flag.raised = True
        return math.nan
    except OverflowError:
        flag.raised = True
        return math.inf


def _jet_unary(op, v):
    if op == "neg":
        return -v
    return getattr(v, op)()


def _jet_binary(op, a, b):
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        return a / b
    return a**b


def _eval(node, values, flag):
    if isinstance(node, Literal):
        return node.value
    if isinstance(node, Variable):
        return values[node.index]
    if isinstance(node, Unary):
        v = _eval(node.arg, values, flag)
        if isinstance(v, Jet):
            return _jet_unary(node.op, v)
        return _float_unary(node.op, float(v), flag)
    a = _eval(node.left, values, flag)
    b = _eval(node.right, values, flag)
    if isinstance(a, Jet) or isinstance(b, Jet):
        if node.op == "^" and isinstance(a, Jet) and not isinstance(b, Jet):
            return a.powc(float(b))
        return _jet_binary(node.op, a, b)
    return _float_binary(node.op, float(a), float(b), flag)


def _check_arity(e, values):
    if len(values) != len(e.variables):
        raise ValueError(f"expected {len(e.variables)} values, got {len(values)}")


def evaluate(e: Expression, values):
    """Evaluate ``e``; values may be floats or Jets (composition).  Domain errors give NaN."""
    _check_arity(e, values)
    return _eval(e.root, values, _Flag())


def eval_flagged(e: Expression, values) -> tuple:
    """Float evaluation returning ``(value, domain_error)``."""
    _check_arity(e, values)
    flag = _Flag()
    value = float(_eval(e.root, [float(v) for v in values], flag))
    if not math.isfinite(value):
        flag.raised = True
    return value, flag.raised


def eval_float(e: Expression, values) -> float:
    return eval_flagged(e, values)[0]


def eval_jet(e: Expression, values, seeds: Sequence[int], order: int):
    """Evaluate with the variables in ``seeds`` promoted to jet variables of the given order.

    Returns a :class:`Jet` over ``len(seeds)`` variables (constant expressions are
    promoted too, so the result is always a Jet).
    """
    _check_arity(e, values)
    m = len(seeds)
    vals = [float(v) for v in values]
    for k, idx in enumerate(seeds):
        if not 0 <= idx < len(vals):
            raise ValueError(f"seed index {idx} out of range")
        vals[idx] = Jet.variable(vals[idx], k, m, order)
    out = _eval(e.root, vals, _Flag())
    if not isinstance(out, Jet):
        out = Jet.constant(float(out), m, order)
    return out


def eval_jet2(e: Expression, values, seeds: Sequence[int]) -> Jet2:
    """Value, gradient and Hessian with respect to the seeded variables."""
    return Jet2.from_jet(eval_jet(e, values, seeds, 2), len(seeds))


def eval_many(exprs, values) -> np.ndarray:
    return np.array([eval_float(e, values) for e in exprs])
