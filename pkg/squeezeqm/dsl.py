"""A small infix language for coordinate expressions ``x(s1, s2)``.

Expressions are parsed by a Pratt parser into an immutable tree and evaluated over
second-order jets, so every surface read from a job config comes with exact first
and second partial derivatives.

>>> serialize(parse('-s1^2 + 2*R'))
'((-(s1 ^ 2.0)) + (2.0 * R))'
>>> eval_jet2(parse('s1*s1'), 3.0, 0.0, {}).d1
6.0
"""
import logging
import math
import re
from dataclasses import dataclass
from typing import AbstractSet, Dict, FrozenSet, Iterator, List, Mapping, Optional, Tuple, Union

import numpy as np

from squeezeqm.jet import BINARY_FUNCTIONS, PI, UNARY_FUNCTIONS, Jet2, JetDomainError, Real, power

_logger = logging.getLogger(__name__)

SURFACE_VARIABLES = frozenset(('s1', 's2'))


class ExpressionError(ValueError):
    """An expression could not be parsed or evaluated"""


class ExpressionSyntaxError(ExpressionError):
    def __init__(self, offset: int, expected: str, found: str):
        super().__init__(f'syntax error at byte {offset}: expected {expected}, found {found}')
        self.offset = offset
        self.expected = expected
        self.found = found


class UnknownFunctionError(ExpressionError):
    def __init__(self, name: str, offset: int):
        super().__init__(f'unknown function {name!r} at byte {offset}')
        self.name = name
        self.offset = offset


class ArityError(ExpressionError):
    def __init__(self, name: str, expected: int, found: int):
        super().__init__(f'{name} takes {expected} argument(s), {found} given')
        self.name = name
        self.expected = expected
        self.found = found


class UndeclaredSymbolError(ExpressionError):
    def __init__(self, symbols: AbstractSet[str]):
        super().__init__(f'undeclared symbol(s): {", ".join(sorted(symbols))}')
        self.symbols = frozenset(symbols)


class UnboundParameterError(ExpressionError):
    def __init__(self, names: AbstractSet[str]):
        super().__init__(f'unbound parameter(s): {", ".join(sorted(names))}')
        self.names = frozenset(names)


class ExpressionDomainError(ExpressionError):
    def __init__(self, subexpression: str, reason: str):
        super().__init__(f'domain error in {subexpression}: {reason}')
        self.subexpression = subexpression
        self.reason = reason


Env = Mapping[str, Jet2]


@dataclass(frozen=True)
class Number:
    value: float

    def jet(self, env: Env) -> Jet2:
        return Jet2(self.value)


@dataclass(frozen=True)
class Variable:
    name: str

    def jet(self, env: Env) -> Jet2:
        return env[self.name]


@dataclass(frozen=True)
class Pi:
    def jet(self, env: Env) -> Jet2:
        return Jet2(PI)


@dataclass(frozen=True)
class Negate:
    operand: 'Expr'

    def jet(self, env: Env) -> Jet2:
        return -self.operand.jet(env)


@dataclass(frozen=True)
class BinaryOp:
    op: str
    left: 'Expr'
    right: 'Expr'

    def jet(self, env: Env) -> Jet2:
        left, right = self.left.jet(env), self.right.jet(env)
        try:
            if self.op == '+':
                return left + right
            if self.op == '-':
                return left - right
            if self.op == '*':
                return left * right
            if self.op == '/':
                return left / right
            return power(left, right)
        except JetDomainError as e:
            raise ExpressionDomainError(serialize(self), str(e)) from e


@dataclass(frozen=True)
class Call:
    function: str
    args: Tuple['Expr', ...]

    def jet(self, env: Env) -> Jet2:
        args = [arg.jet(env) for arg in self.args]
        try:
            if self.function in BINARY_FUNCTIONS:
                return BINARY_FUNCTIONS[self.function](*args)
            return UNARY_FUNCTIONS[self.function](*args)
        except JetDomainError as e:
            raise ExpressionDomainError(serialize(self), str(e)) from e


Expr = Union[Number, Variable, Pi, Negate, BinaryOp, Call]

# Pratt binding powers
_INFIX_POWER = {'+': 10, '-': 10, '*': 20, '/': 20, '^': 40}
_PREFIX_POWER = 30

_TOKEN_FORMAT = re.compile(
    r'\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)'
    r'|(?P<name>[A-Za-z_][A-Za-z_0-9]*)'
    r'|(?P<op>[-+*/^(),]))'
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    offset: int


def _tokenize(text: str) -> List[_Token]:
    tokens = []
    position = 0
    while True:
        match = _TOKEN_FORMAT.match(text, position)
        if not match:
            remainder = text[position:]
            if remainder.strip():
                offset = len(text[:position + len(remainder) - len(remainder.lstrip())].encode())
                raise ExpressionSyntaxError(offset, 'a number, name or operator', repr(remainder.lstrip()[0]))
            tokens.append(_Token('end', '', len(text.encode())))
            return tokens
        kind = match.lastgroup or 'end'
        tokens.append(_Token(kind, match.group(kind), len(text[:match.start(kind)].encode())))
        position = match.end()


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.index = 0

    @property
    def token(self) -> _Token:
        return self.tokens[self.index]

    def advance(self) -> _Token:
        token = self.token
        self.index += 1
        return token

    def expect(self, text: str) -> _Token:
        if self.token.text != text or self.token.kind == 'end':
            raise ExpressionSyntaxError(self.token.offset, repr(text), self._describe(self.token))
        return self.advance()

    @staticmethod
    def _describe(token: _Token) -> str:
        return 'end of input' if token.kind == 'end' else repr(token.text)

    def _infix_power(self) -> int:
        return _INFIX_POWER.get(self.token.text, 0) if self.token.kind == 'op' else 0

    def expression(self, rbp: int = 0) -> Expr:
        left = self.prefix(self.advance())
        while rbp < self._infix_power():
            left = self.infix(self.advance(), left)
        return left

    def prefix(self, token: _Token) -> Expr:
        if token.kind == 'number':
            value = float(token.text)
            if not math.isfinite(value):
                raise ExpressionSyntaxError(token.offset, 'a finite number', repr(token.text))
            return Number(value)
        if token.kind == 'name':
            return self.name(token)
        if token.text == '-':
            return Negate(self.expression(_PREFIX_POWER))
        if token.text == '+':
            return self.expression(_PREFIX_POWER)
        if token.text == '(':
            inner = self.expression()
            self.expect(')')
            return inner
        raise ExpressionSyntaxError(token.offset, 'an operand', self._describe(token))

    def infix(self, token: _Token, left: Expr) -> Expr:
        power_ = _INFIX_POWER[token.text]
        # '^' is right-associative
        right = self.expression(power_ - 1 if token.text == '^' else power_)
        return BinaryOp(token.text, left, right)

    def name(self, token: _Token) -> Expr:
        if self.token.text != '(' or self.token.kind != 'op':
            if token.text in UNARY_FUNCTIONS or token.text in BINARY_FUNCTIONS:
                raise ExpressionSyntaxError(self.token.offset, "'('", self._describe(self.token))
            return Pi() if token.text == 'pi' else Variable(token.text)
        if token.text not in UNARY_FUNCTIONS and token.text not in BINARY_FUNCTIONS:
            raise UnknownFunctionError(token.text, token.offset)
        self.advance()
        args = [self.expression()]
        while self.token.text == ',' and self.token.kind == 'op':
            self.advance()
            args.append(self.expression())
        self.expect(')')
        arity = 2 if token.text in BINARY_FUNCTIONS else 1
        if len(args) != arity:
            raise ArityError(token.text, arity, len(args))
        return Call(token.text, tuple(args))


def parse(text: str) -> Expr:
    """Parse an infix expression over ``s1``, ``s2``, parameters and ``pi``."""
    parser = _Parser(text)
    tree = parser.expression()
    if parser.token.kind != 'end':
        raise ExpressionSyntaxError(parser.token.offset, 'an operator or end of input',
                                    parser._describe(parser.token))
    return tree


def serialize(node: Expr) -> str:
    """Fully parenthesized text that parses back to an identical tree."""
    if isinstance(node, Number):
        return repr(float(node.value))
    if isinstance(node, Variable):
        return node.name
    if isinstance(node, Pi):
        return 'pi'
    if isinstance(node, Negate):
        return f'(-{serialize(node.operand)})'
    if isinstance(node, BinaryOp):
        return f'({serialize(node.left)} {node.op} {serialize(node.right)})'
    return f'{node.function}({", ".join(serialize(arg) for arg in node.args)})'


def _walk(node: Expr) -> Iterator[Expr]:
    yield node
    if isinstance(node, Negate):
        yield from _walk(node.operand)
    elif isinstance(node, BinaryOp):
        yield from _walk(node.left)
        yield from _walk(node.right)
    elif isinstance(node, Call):
        for arg in node.args:
            yield from _walk(arg)


def symbols(node: Expr) -> FrozenSet[str]:
    return frozenset(n.name for n in _walk(node) if isinstance(n, Variable))


def validate_symbols(node: Expr, declared: AbstractSet[str]) -> None:
    undeclared = symbols(node) - SURFACE_VARIABLES - set(declared)
    if undeclared:
        raise UndeclaredSymbolError(undeclared)


def eval_jet2(
    node: Expr, s1: Real, s2: Real, params: Optional[Mapping[str, float]] = None
) -> Jet2:
    """Evaluate ``node`` at ``(s1, s2)``, seeding ``s1`` and ``s2`` as independent jet
    variables. Array arguments evaluate a whole grid at once."""
    params = params or {}
    unbound = symbols(node) - SURFACE_VARIABLES - set(params)
    if unbound:
        raise UnboundParameterError(unbound)
    s1, s2 = np.broadcast_arrays(np.asarray(s1, dtype=float), np.asarray(s2, dtype=float))
    if s1.ndim == 0:
        s1, s2 = float(s1), float(s2)
    env: Dict[str, Jet2] = {name: Jet2(float(value)) for name, value in params.items()}
    env['s1'] = Jet2.variable(s1, 1)
    env['s2'] = Jet2.variable(s2, 2)
    with np.errstate(over='raise', invalid='raise', divide='raise'):
        try:
            return node.jet(env)
        except FloatingPointError as e:
            raise ExpressionDomainError(serialize(node), str(e)) from e
