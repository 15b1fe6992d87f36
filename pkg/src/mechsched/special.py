"""Exponential integral E1(x) = int_x^inf exp(-r) / r dr for real x > 0."""

from __future__ import annotations

import math

EULER_GAMMA = 0.57721566490153286060651209

_SERIES_CUTOFF = 1.0
_EPS = 1e-17
_MAX_ITER = 500
_TINY = 1e-300


def _series(x: float) -> float:
    # E1(x) = -gamma - ln x - sum_{k>=1} (-x)^k / (k * k!)
    total = 0.0
    term = 1.0
    for k in range(1, _MAX_ITER):
        term *= -x / k
        contrib = term / k
        total += contrib
        if abs(contrib) < _EPS * abs(total):
            break
    return -EULER_GAMMA - math.log(x) - total


def _scaled_continued_fraction(x: float) -> float:
    # modified Lentz on exp(x) E1(x) = 1/(x+1- 1/(x+3- 4/(x+5- ...)))
    b = x + 1.0
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        a = -float(i * i)
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"E1 continued fraction did not converge at x={x!r}")


def _check(x: float) -> float:
    x = float(x)
    if not x > 0 or math.isinf(x):
        raise ValueError(f"E1 is defined here for finite x > 0, got {x!r}")
    return x


def exp_integral_e1(x: float) -> float:
    """E1(x): power series for x <= 1, continued fraction above."""
    x = _check(x)
    if x <= _SERIES_CUTOFF:
        return _series(x)
    return math.exp(-x) * _scaled_continued_fraction(x)


def scaled_e1(x: float) -> float:
    """exp(x) * E1(x), finite for large x where E1 alone underflows."""
    x = _check(x)
    if x <= _SERIES_CUTOFF:
        return math.exp(x) * _series(x)
    return _scaled_continued_fraction(x)


def as_sandwich(x: float) -> tuple[float, float]:
    """Abramowitz-Stegun bounds: 0.5 e^-x ln(1 + 2/x) < E1(x) < e^-x ln(1 + 1/x)."""
    x = _check(x)
    ex = math.exp(-x)
    return 0.5 * ex * math.log1p(2.0 / x), ex * math.log1p(1.0 / x)
