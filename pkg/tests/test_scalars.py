from __future__ import annotations

import math
import random
from decimal import Decimal, getcontext
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lqdim.scalars import (
    FieldMismatchError,
    NotCanonicalizableError,
    Quadratic,
    canonical_key,
    floor_scalar,
    golden,
    parse_scalar,
    quadratic,
    scalar_from_json,
    scalar_to_json,
    sign,
    to_float,
)

rationals = st.fractions(max_denominator=10**6).filter(lambda q: abs(q) < 10**6)
quads5 = st.builds(lambda a, b: quadratic(a, b, 5), rationals, rationals)


def test_rational_sum():
    assert Fraction(1, 3) + Fraction(1, 6) == Fraction(1, 2)


def test_golden_minimal_polynomial():
    g = golden()
    assert g * g + g == 1
    assert isinstance(g * g + g, (Fraction, Quadratic))
    assert canonical_key(g * g + g) == canonical_key(Fraction(1))


def test_sign_by_rationalization():
    assert sign(Fraction(3, 2) - Quadratic(0, 1, 2)) == 1
    assert sign(Quadratic(Fraction(7, 5), -1, 2)) == -1  # 49/25 < 2
    assert sign(Quadratic(0, 0, 3)) == 0


def test_mixed_fields_rejected():
    with pytest.raises(FieldMismatchError):
        Quadratic(0, 1, 2) + Quadratic(0, 1, 3)


def test_float_demotes():
    x = golden() + 0.5
    assert isinstance(x, float)
    assert math.isclose(x, (math.sqrt(5) - 1) / 2 + 0.5)


def test_division():
    g = golden()
    assert g / g == 1
    assert g * (1 / g) == 1
    assert 1 / g == g + 1  # 1/lambda = 1 + lambda for the golden conjugate


def test_canonical_key_examples():
    assert canonical_key(Fraction(2, 4)) == canonical_key(Fraction(1, 2))
    assert canonical_key(Quadratic(1, 0, 5)) == canonical_key(Fraction(1))
    with pytest.raises(NotCanonicalizableError):
        canonical_key(0.5)


def test_to_float_examples():
    v, e = to_float(Fraction(1, 3))
    assert v == 1 / 3 and e <= 4 * math.ulp(v)
    v, e = to_float(golden())
    assert abs(v - 0.6180339887498949) <= 4 * math.ulp(v) and e <= 4 * math.ulp(v)
    assert to_float(Fraction(1)) == (1.0, 0.0)


@settings(max_examples=200, deadline=None)
@given(quads5, quads5, quads5)
def test_field_axioms_exact(a, b, c):
    assert a + b == b + a
    assert a * b == b * a
    assert (a + b) + c == a + (b + c)
    assert (a * b) * c == a * (b * c)
    assert a * (b + c) == a * b + a * c


@settings(max_examples=200, deadline=None)
@given(quads5, quads5)
def test_key_equality_iff_value_equality(a, b):
    assert (canonical_key(a) == canonical_key(b)) == (sign(a - b) == 0)
    # engineered collision through the minimal polynomial
    g = golden()
    assert canonical_key(a * (g + g * g)) == canonical_key(a)


@settings(max_examples=200, deadline=None)
@given(quads5)
def test_sign_matches_float_when_far_from_zero(x):
    v = float(x)
    if abs(v) > 1e-6:
        assert sign(x) == (1 if v > 0 else -1)


@settings(max_examples=100, deadline=None)
@given(quads5)
def test_floor_is_exact(x):
    k = floor_scalar(x)
    assert sign(x - k) >= 0 and sign(x - (k + 1)) < 0


def test_to_float_bound_on_random_rationals():
    rng = random.Random(20240611)
    for _ in range(1000):
        den = rng.randint(1, 2**40)
        num = rng.randint(-(2**50), 2**50)
        q = Fraction(num, den)
        v, e = to_float(q)
        assert abs(Fraction(v) - q) <= Fraction(e)
        assert e <= 4 * math.ulp(v)


def test_to_float_bound_on_quadratics_high_precision():
    getcontext().prec = 80
    rng = random.Random(7)
    for _ in range(300):
        a = Fraction(rng.randint(-999, 999), rng.randint(1, 999))
        b = Fraction(rng.randint(-999, 999) or 1, rng.randint(1, 999))
        d = rng.choice([2, 3, 5, 6, 7, 10, 11, 13])
        x = Quadratic(a, b, d)
        exact = Decimal(a.numerator) / Decimal(a.denominator) + \
            Decimal(b.numerator) / Decimal(b.denominator) * Decimal(d).sqrt()
        v, e = to_float(x)
        assert abs(Decimal(v) - exact) <= Decimal(e) + Decimal(10) ** -70
        assert e <= 4 * math.ulp(v)


@pytest.mark.parametrize("text,expected", [
    ("2/3", Fraction(2, 3)),
    ("-3", Fraction(-3)),
    ("golden", golden()),
    ("sqrt2", Quadratic(0, 1, 2)),
    ("sqrt(2)", Quadratic(0, 1, 2)),
    ("1/2+3/4*sqrt(5)", Quadratic(Fraction(1, 2), Fraction(3, 4), 5)),
    ("-1/2-sqrt(3)", Quadratic(Fraction(-1, 2), -1, 3)),
    ("0.75", 0.75),
])
def test_parse_scalar(text, expected):
    got = parse_scalar(text)
    assert got == expected and type(got) is type(expected)


@pytest.mark.parametrize("x", [Fraction(-3, 7), golden(), 0.75, Fraction(10**30 + 1, 3)])
def test_json_round_trip(x):
    enc = scalar_to_json(x)
    assert scalar_from_json(enc) == x
    if isinstance(x, Fraction):
        assert enc == {"type": "rational", "num": str(x.numerator), "den": str(x.denominator)}
