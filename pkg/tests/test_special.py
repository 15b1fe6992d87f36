import math

import numpy as np
import pytest

from mechsched.special import EULER_GAMMA, as_sandwich, exp_integral_e1, scaled_e1

from oracles import e1_quadrature

GRID = np.logspace(-2, math.log10(50), 50)

# reference values from the quadrature oracle
E1_VALUES = {0.5: 0.5597735947761608, 1.0: 0.21938393439552029, 2.0: 0.04890051070806112}


@pytest.mark.parametrize("x, expected", E1_VALUES.items())
def test_known_values(x, expected):
    assert e1_quadrature(x) == pytest.approx(expected, rel=1e-13)
    assert exp_integral_e1(x) == pytest.approx(expected, rel=1e-13)


@pytest.mark.parametrize("x", GRID)
def test_matches_oracle(x):
    assert abs(exp_integral_e1(x) - e1_quadrature(x)) <= 1e-10


@pytest.mark.parametrize("x", GRID)
def test_sandwich(x):
    lo, hi = as_sandwich(x)
    assert lo < exp_integral_e1(x) < hi


def test_small_x_asymptote():
    x = 1e-8
    assert exp_integral_e1(x) == pytest.approx(-EULER_GAMMA - math.log(x) + x, rel=1e-14)


def test_decreasing():
    v = [exp_integral_e1(x) for x in GRID]
    assert all(a > b for a, b in zip(v, v[1:]))


def test_series_and_fraction_meet():
    # the branch switch sits at 1; the two sides must join smoothly
    below, above = exp_integral_e1(1 - 1e-12), exp_integral_e1(1 + 1e-12)
    assert abs(below - above) < 1e-11


@pytest.mark.parametrize("x", [0.01, 1.0, 7.5, 50.0])
def test_scaled_consistent(x):
    assert scaled_e1(x) == pytest.approx(math.exp(x) * exp_integral_e1(x), rel=1e-13)


def test_scaled_large_x():
    # e^x E1(x) ~ 1/x - 1/x^2 + 2/x^3 for large x, where E1 itself underflows
    x = 1e5
    assert scaled_e1(x) == pytest.approx(1 / x - 1 / x**2 + 2 / x**3, rel=1e-12)
    assert exp_integral_e1(800.0) == 0.0 or exp_integral_e1(800.0) < 1e-300


@pytest.mark.parametrize("bad", [0.0, -1.0, math.inf, math.nan])
def test_rejects(bad):
    with pytest.raises(ValueError):
        exp_integral_e1(bad)


def test_oracle_against_mpmath():
    mpmath = pytest.importorskip("mpmath")
    for x in GRID[::7]:
        assert e1_quadrature(x) == pytest.approx(float(mpmath.e1(x)), abs=1e-14)
