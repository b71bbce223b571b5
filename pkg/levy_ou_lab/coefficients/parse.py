"""Parser and evaluator for the coefficient expression language

Coefficients A(t), B(t), f(t) (and the scalar lambda/mu/sigma of the stable examples) are written as small
arithmetic expressions of the time variable `t`:

    expression := term (("+" | "-") term)*
    term       := unary (("*" | "/") unary)*
    unary      := "-" unary | primary
    primary    := NUMBER | "t" | FUNCTION "(" expression ")" | "(" expression ")"

FUNCTION is one of sin, cos, exp, abs. Binary operators are left associative and unary minus binds tighter
than * and /. Expressions evaluate elementwise on numpy arrays of times, so a whole quadrature grid can be
evaluated in one call.
"""

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional

import numpy as np

from .exceptions import CoefficientEvalError, CoefficientSyntaxError

FunctionTable = Dict[str, Callable[[np.ndarray], np.ndarray]]

FUNCTIONS: FunctionTable = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs}

TIME_VARIABLE = "t"

# Binary operator groups in increasing binding power. Everything is left associative.
_BINARY_OPERATORS = [["+", "-"], ["*", "/"]]
_BINARY_PRECEDENCE = {
    operator: precedence
    for precedence, group in enumerate(_BINARY_OPERATORS)
    for operator in group
}

_TOKEN_PATTERN = re.compile(
    r"""
    (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
    |(?P<name>[A-Za-z_]\w*)
    |(?P<operator>[-+*/])
    |(?P<open>\()
    |(?P<close>\))
    |(?P<space>\s+)
    """,
    re.VERBOSE,
)


class Node:
    """ Base class for expression tree nodes """


@dataclass(frozen=True)
class Number(Node):
    value: float


@dataclass(frozen=True)
class Variable(Node):
    pass


@dataclass(frozen=True)
class Negate(Node):
    operand: Node


@dataclass(frozen=True)
class BinaryOp(Node):
    operator: str
    left: Node
    right: Node


@dataclass(frozen=True)
class Call(Node):
    function: str
    argument: Node


@dataclass(frozen=True)
class CoeffExpr:
    """ A parsed coefficient expression. Equality is structural (the source text is not compared). """

    tree: Node
    source: str = field(default="", compare=False)

    def __call__(self, t):
        return eval_expr(self, t)

    def __str__(self):
        return format_expr(self)


class _Token(NamedTuple):
    kind: str
    text: str
    index: int


def _byte_offset(source: str, index: int) -> int:
    return len(source[:index].encode("utf8"))


def _tokenize(source: str) -> List[_Token]:
    tokens = []
    index = 0
    while index < len(source):
        match = _TOKEN_PATTERN.match(source, index)
        if match is None:
            raise CoefficientSyntaxError(
                f"unexpected character {source[index]!r}",
                source,
                _byte_offset(source, index),
            )
        kind = str(match.lastgroup)
        if kind != "space":
            tokens.append(_Token(kind, match.group(), index))
        index = match.end()
    return tokens


class _Parser:
    """ Precedence climbing over a token list. `position` indexes the next unread token. """

    def __init__(self, source: str):
        self.source = source
        self.tokens = _tokenize(source)
        self.position = 0

    def _error(
        self, message: str, token: Optional[_Token] = None
    ) -> CoefficientSyntaxError:
        index = token.index if token is not None else len(self.source)
        offset = _byte_offset(self.source, index)
        return CoefficientSyntaxError(message, self.source, offset)

    def _peek(self) -> Optional[_Token]:
        return self.tokens[self.position] if self.position < len(self.tokens) else None

    def _advance(self) -> _Token:
        token = self._peek()
        if token is None:
            raise self._error("unexpected end of expression")
        self.position += 1
        return token

    def parse(self) -> Node:
        if not self.tokens:
            raise self._error("empty expression")
        tree = self._expression(0)
        leftover = self._peek()
        if leftover is not None:
            if leftover.kind == "close":
                raise self._error("unbalanced ')'", leftover)
            raise self._error(f"unexpected {leftover.text!r}", leftover)
        return tree

    def _expression(self, min_precedence: int) -> Node:
        left = self._unary()
        while True:
            token = self._peek()
            if token is None or token.kind != "operator":
                return left
            precedence = _BINARY_PRECEDENCE[token.text]
            if precedence < min_precedence:
                return left
            self._advance()
            # Left associativity: the right operand may only contain tighter-binding operators
            right = self._expression(precedence + 1)
            left = BinaryOp(token.text, left, right)

    def _unary(self) -> Node:
        token = self._peek()
        if token is not None and token.text == "-":
            self._advance()
            return Negate(self._unary())
        return self._primary()

    def _primary(self) -> Node:
        token = self._peek()
        if token is None:
            raise self._error("dangling operator: expected an operand")
        self._advance()

        if token.kind == "number":
            value = float(token.text)
            if not math.isfinite(value):
                raise self._error(f"number {token.text!r} is not finite", token)
            return Number(value)

        if token.kind == "open":
            inner = self._expression(0)
            closing = self._peek()
            if closing is None or closing.kind != "close":
                raise self._error("unbalanced '(': expected ')'", closing or token)
            self._advance()
            return inner

        if token.kind == "name":
            if token.text == TIME_VARIABLE:
                return Variable()
            if token.text in FUNCTIONS:
                opening = self._peek()
                if opening is None or opening.kind != "open":
                    message = f"expected '(' after {token.text!r}"
                    raise self._error(message, opening or token)
                self._advance()
                argument = self._expression(0)
                closing = self._peek()
                if closing is None or closing.kind != "close":
                    raise self._error("unbalanced '(': expected ')'", closing or token)
                self._advance()
                return Call(token.text, argument)
            raise self._error(f"unknown identifier {token.text!r}", token)

        if token.kind == "operator":
            raise self._error(f"dangling operator {token.text!r}", token)
        raise self._error(f"unexpected {token.text!r}", token)


def parse_expr(source: str) -> CoeffExpr:
    """ Parse a coefficient expression

    Args:
        source: expression text, e.g. "2 + sin(t)"

    Returns:
        CoeffExpr wrapping the expression tree

    Raises:
        CoefficientSyntaxError (with a byte offset) on unbalanced parentheses, unknown identifiers,
        dangling operators or unexpected characters
    """
    return CoeffExpr(_Parser(source).parse(), source)


def constant_expr(value: float) -> CoeffExpr:
    """ Expression for a constant. Negative constants are represented as negated literals, as the parser would. """
    number = Number(abs(float(value)))
    return CoeffExpr(Negate(number) if value < 0 else number, repr(float(value)))


def _format(node: Node) -> str:
    if isinstance(node, Number):
        return repr(node.value)
    if isinstance(node, Variable):
        return TIME_VARIABLE
    if isinstance(node, Negate):
        return f"-{_format(node.operand)}"
    if isinstance(node, BinaryOp):
        return f"({_format(node.left)} {node.operator} {_format(node.right)})"
    if isinstance(node, Call):
        return f"{node.function}({_format(node.argument)})"
    raise TypeError(f"Unknown expression node {node!r}")


def format_expr(expr: CoeffExpr) -> str:
    """ Render an expression so that parse_expr(format_expr(e)) == e """
    return _format(expr.tree)


def _evaluate(node: Node, t: np.ndarray) -> np.ndarray:
    if isinstance(node, Number):
        return np.full(t.shape, node.value)
    if isinstance(node, Variable):
        return t
    if isinstance(node, Negate):
        return -_evaluate(node.operand, t)
    if isinstance(node, Call):
        return FUNCTIONS[node.function](_evaluate(node.argument, t))
    if isinstance(node, BinaryOp):
        left = _evaluate(node.left, t)
        right = _evaluate(node.right, t)
        if node.operator == "+":
            return left + right
        if node.operator == "-":
            return left - right
        if node.operator == "*":
            return left * right
        if np.any(right == 0):
            zero_at = np.atleast_1d(t)[np.atleast_1d(right == 0)][0]
            raise CoefficientEvalError(
                f"division by zero in {_format(node)} at t={zero_at!r}"
            )
        return left / right
    raise TypeError(f"Unknown expression node {node!r}")


def eval_expr(expr: CoeffExpr, t):
    """ Evaluate an expression at a time or an array of times

    Args:
        expr: parsed expression
        t: finite float or numpy array of finite floats

    Returns:
        float for scalar t, otherwise a numpy array shaped like t

    Raises:
        CoefficientEvalError on non-finite t, division by zero or a non-finite result
    """
    times = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(times)):
        raise CoefficientEvalError(f"time must be finite, got {t!r}")

    with np.errstate(all="ignore"):
        values = _evaluate(expr.tree, times)

    if not np.all(np.isfinite(values)):
        raise CoefficientEvalError(
            f"{format_expr(expr)} is not finite for t in [{times.min()}, {times.max()}]"
        )

    return float(values) if times.ndim == 0 else values
