import numpy as np
import pytest
from fractions import Fraction

from hypothesis import given, settings, strategies as st

from krylovlab.precision import (
    NATIVE, EXTENDED, DDArray, dd, dd_dot, dd_norm, dd_solve, dd_sqrt,
    dd_sum, extended_arithmetic, promote, two_prod, two_sum, sfloat,
)

finite = st.floats(allow_nan=False, allow_infinity=False,
                   min_value=-1e150, max_value=1e150)


@given(finite, finite)
def test_two_sum_error_free(a, b):
    s, e = two_sum(a, b)
    # s + e reproduces a + b exactly in rational arithmetic
    assert Fraction(s) + Fraction(e) == Fraction(a) + Fraction(b)


moderate = st.floats(allow_nan=False, allow_infinity=False,
                     min_value=-1e100, max_value=1e100).filter(
                         lambda v: v == 0.0 or abs(v) > 1e-100)


@given(moderate, moderate)
def test_two_prod_error_free(a, b):
    # away from over/underflow the rounding error of a*b is itself a float
    p, e = two_prod(a, b)
    assert Fraction(p) + Fraction(e) == Fraction(a) * Fraction(b)


def test_dd_add_exact_small_rationals():
    x = dd(np.array([0.1, 0.2, 0.3]))
    y = dd(np.array([0.4, 0.5, 0.6]))
    z = x + y
    for i in range(3):
        want = Fraction(float(x.hi[i])) + Fraction(float(y.hi[i]))
        got = Fraction(float(z.hi[i])) + Fraction(float(z.lo[i]))
        assert got == want


def test_dd_dot_beats_native_on_cancellation():
    # sum of many terms that cancel to a tiny residue
    rng = np.random.default_rng(7)
    x = rng.standard_normal(200) * 1e8
    x = np.concatenate([x, -x, np.array([1e-6])])
    y = np.ones_like(x)
    exact = sum(Fraction(v) for v in x)
    got = dd_dot(dd(x), dd(y))
    assert abs(float(Fraction(float(got.hi[()] if got.hi.ndim == 0 else got.hi))
                     - exact)) <= 1e-18


def test_dd_sum_matches_fractions():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(64)
    s = dd_sum(dd(x))
    want = sum(Fraction(v) for v in x)
    assert Fraction(sfloat(s)) == Fraction(float(want))  # hi part correctly rounded-ish
    assert abs(float(Fraction(float(np.asarray(s.hi).item()))
                     + Fraction(float(np.asarray(s.lo).item())) - want)) < 1e-28


def test_dd_sqrt():
    s = dd_sqrt(dd(2.0))
    v = Fraction(float(np.asarray(s.hi).item())) + Fraction(float(np.asarray(s.lo).item()))
    assert abs(v * v - 2) < Fraction(1, 10 ** 30)


def test_dd_solve_small_system():
    A = np.array([[4.0, 1.0], [1.0, 3.0]])
    b = np.array([1.0, 2.0])
    x = dd_solve(dd(A), dd(b))
    xn = x.to_native()
    assert np.allclose(A @ xn, b, rtol=0, atol=1e-15)


def test_dd_norm_scale():
    x = dd(np.array([3.0, 4.0]))
    assert sfloat(dd_norm(x)) == pytest.approx(5.0, rel=1e-30)


def test_extended_arithmetic_ops():
    a, b = 0.1, 0.3
    for op in ("+", "-", "*", "/"):
        out = extended_arithmetic(a, b, op)
        assert isinstance(out, DDArray)
    with pytest.raises(ValueError):
        extended_arithmetic(a, b, "**")


def test_promote_and_modes():
    x = np.arange(4.0)
    assert promote(x, NATIVE) is x or np.shares_memory(promote(x, NATIVE), x)
    xe = promote(x, EXTENDED)
    assert isinstance(xe, DDArray)
    assert np.array_equal(xe.to_native(), x)
    assert EXTENDED.is_extended and not NATIVE.is_extended


def test_ddarray_elementwise_roundtrip():
    x = dd(np.array([1.0, 2.0, 4.0]))
    y = (x * x - x) / x
    assert np.allclose(y.to_native(), np.array([0.0, 1.0, 3.0]), atol=0)
