"""Second-order jets in two variables.

A :class:`Jet2` carries a value together with its first and second partial
derivatives in ``(s1, s2)``. Arithmetic on jets is truncated second-order Taylor
algebra, so evaluating an expression on seeded jets yields exact derivatives.
Slots may be floats or numpy arrays of a common shape; every operation is
elementwise.

>>> x = Jet2.variable(3.0, 1)
>>> (x * x).d11
2.0
"""
import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

Real = Union[float, np.ndarray]


class JetDomainError(ValueError):
    """A function was applied outside its differentiable domain"""
    def __init__(self, function: str, *args):
        super().__init__(*args or (f'{function}: argument outside of domain', ))
        self.function = function


@dataclass(frozen=True)
class Jet2:
    v: Real
    d1: Real = 0.0
    d2: Real = 0.0
    d11: Real = 0.0
    d12: Real = 0.0
    d22: Real = 0.0

    @classmethod
    def constant(cls, value: Real) -> 'Jet2':
        return cls(value)

    @classmethod
    def variable(cls, value: Real, index: int) -> 'Jet2':
        """Seed ``s1`` (index 1) or ``s2`` (index 2) at ``value``."""
        if index == 1:
            return cls(value, d1=1.0)
        if index == 2:
            return cls(value, d2=1.0)
        raise ValueError(f'jet variable index must be 1 or 2, not {index}')

    def is_constant(self) -> bool:
        return all(
            not np.any(slot) for slot in (self.d1, self.d2, self.d11, self.d12, self.d22)
        )

    def compose(self, f: Real, df: Real, ddf: Real) -> 'Jet2':
        """Chain rule for a scalar function with value ``f`` and derivatives ``df``, ``ddf``
        evaluated at ``self.v``."""
        return Jet2(
            f,
            df * self.d1,
            df * self.d2,
            ddf * self.d1 * self.d1 + df * self.d11,
            ddf * self.d1 * self.d2 + df * self.d12,
            ddf * self.d2 * self.d2 + df * self.d22,
        )

    def __add__(self, other) -> 'Jet2':
        other = _lift(other)
        return Jet2(
            self.v + other.v, self.d1 + other.d1, self.d2 + other.d2, self.d11 + other.d11,
            self.d12 + other.d12, self.d22 + other.d22
        )

    __radd__ = __add__

    def __neg__(self) -> 'Jet2':
        return Jet2(-self.v, -self.d1, -self.d2, -self.d11, -self.d12, -self.d22)

    def __sub__(self, other) -> 'Jet2':
        return self + (-_lift(other))

    def __rsub__(self, other) -> 'Jet2':
        return _lift(other) + (-self)

    def __mul__(self, other) -> 'Jet2':
        g = _lift(other)
        return Jet2(
            self.v * g.v,
            self.d1 * g.v + self.v * g.d1,
            self.d2 * g.v + self.v * g.d2,
            self.d11 * g.v + 2.0 * self.d1 * g.d1 + self.v * g.d11,
            self.d12 * g.v + self.d1 * g.d2 + self.d2 * g.d1 + self.v * g.d12,
            self.d22 * g.v + 2.0 * self.d2 * g.d2 + self.v * g.d22,
        )

    __rmul__ = __mul__

    def reciprocal(self) -> 'Jet2':
        if np.any(self.v == 0):
            raise JetDomainError('/', 'division by zero')
        inverse = 1.0 / self.v
        return self.compose(inverse, -inverse * inverse, 2.0 * inverse * inverse * inverse)

    def __truediv__(self, other) -> 'Jet2':
        return self * _lift(other).reciprocal()

    def __rtruediv__(self, other) -> 'Jet2':
        return _lift(other) * self.reciprocal()

    def __pow__(self, exponent: int) -> 'Jet2':
        return integer_power(self, exponent)


def _lift(value) -> Jet2:
    return value if isinstance(value, Jet2) else Jet2(value)


def integer_power(base: Jet2, exponent: int) -> Jet2:
    """Repeated multiplication by squaring; negative exponents invert the base first."""
    if exponent < 0:
        base, exponent = base.reciprocal(), -exponent
    result = Jet2(np.ones_like(base.v) if isinstance(base.v, np.ndarray) else 1.0)
    while exponent:
        if exponent & 1:
            result = result * base
        exponent >>= 1
        if exponent:
            base = base * base
    return result


def sin(a: Jet2) -> Jet2:
    s, c = np.sin(a.v), np.cos(a.v)
    return a.compose(s, c, -s)


def cos(a: Jet2) -> Jet2:
    s, c = np.sin(a.v), np.cos(a.v)
    return a.compose(c, -s, -c)


def tan(a: Jet2) -> Jet2:
    c = np.cos(a.v)
    if np.any(np.abs(c) < 1e-300):
        raise JetDomainError('tan')
    t = np.tan(a.v)
    sec2 = 1.0 + t * t
    return a.compose(t, sec2, 2.0 * t * sec2)


def sinh(a: Jet2) -> Jet2:
    s, c = np.sinh(a.v), np.cosh(a.v)
    return a.compose(s, c, s)


def cosh(a: Jet2) -> Jet2:
    s, c = np.sinh(a.v), np.cosh(a.v)
    return a.compose(c, s, c)


def tanh(a: Jet2) -> Jet2:
    t = np.tanh(a.v)
    sech2 = 1.0 - t * t
    return a.compose(t, sech2, -2.0 * t * sech2)


def exp(a: Jet2) -> Jet2:
    e = np.exp(a.v)
    return a.compose(e, e, e)


def log(a: Jet2) -> Jet2:
    if np.any(a.v <= 0):
        raise JetDomainError('log', 'log of non-positive argument')
    inverse = 1.0 / a.v
    return a.compose(np.log(a.v), inverse, -inverse * inverse)


def sqrt(a: Jet2) -> Jet2:
    # sqrt(0) has an unbounded derivative, so zero is excluded along with negatives
    if np.any(a.v <= 0):
        raise JetDomainError('sqrt', 'sqrt of non-positive argument')
    r = np.sqrt(a.v)
    return a.compose(r, 0.5 / r, -0.25 / (r * a.v))


def fabs(a: Jet2) -> Jet2:
    # the kink at zero has no second-order jet
    if np.any(a.v == 0):
        raise JetDomainError('abs', 'abs at zero')
    sign = np.sign(a.v)
    return a.compose(np.abs(a.v), sign, 0.0 * sign)


def atan2(y: Jet2, x: Jet2) -> Jet2:
    r2 = x.v * x.v + y.v * y.v
    if np.any(r2 == 0):
        raise JetDomainError('atan2', 'atan2 at the origin')
    r4 = r2 * r2
    fy, fx = x.v / r2, -y.v / r2
    fyy, fxx = -2.0 * x.v * y.v / r4, 2.0 * x.v * y.v / r4
    fxy = (y.v * y.v - x.v * x.v) / r4

    def second(i: str, j: str, ij: str) -> Real:
        return (
            fyy * getattr(y, i) * getattr(y, j) + fxx * getattr(x, i) * getattr(x, j) +
            fxy * (getattr(y, i) * getattr(x, j) + getattr(y, j) * getattr(x, i)) +
            fy * getattr(y, ij) + fx * getattr(x, ij)
        )

    return Jet2(
        np.arctan2(y.v, x.v),
        fy * y.d1 + fx * x.d1,
        fy * y.d2 + fx * x.d2,
        second('d1', 'd1', 'd11'),
        second('d1', 'd2', 'd12'),
        second('d2', 'd2', 'd22'),
    )


def power(base: Jet2, exponent: Jet2) -> Jet2:
    """``base ^ exponent``; integral constant exponents multiply, everything else needs a
    positive base."""
    if exponent.is_constant():
        values = np.unique(np.asarray(exponent.v, dtype=float))
        if values.size == 1 and abs(values[0] - round(values[0])) < 1e-12:
            return integer_power(base, int(round(values[0])))
    if np.any(base.v <= 0):
        raise JetDomainError('^', 'non-integer power of non-positive base')
    return exp(exponent * log(base))


UNARY_FUNCTIONS: 'dict[str, Callable[[Jet2], Jet2]]' = {
    'sin': sin,
    'cos': cos,
    'tan': tan,
    'sinh': sinh,
    'cosh': cosh,
    'tanh': tanh,
    'exp': exp,
    'log': log,
    'sqrt': sqrt,
    'abs': fabs,
}

BINARY_FUNCTIONS: 'dict[str, Callable[[Jet2, Jet2], Jet2]]' = {
    'atan2': atan2,
}

PI = math.pi
