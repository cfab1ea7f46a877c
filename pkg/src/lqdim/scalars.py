"""Exact scalar kernel: rationals, real quadratic numbers a + b*sqrt(d), floats.

Rationals are plain :class:`fractions.Fraction` values; real quadratic
numbers use :class:`Quadratic`; anything else is a Python ``float`` and is
treated as approximate.  Arithmetic between a Fraction and a Quadratic
promotes to the quadratic field, and any contact with a float demotes the
result to float.
"""

from __future__ import annotations

import math
from fractions import Fraction
from numbers import Rational
from typing import Union

__all__ = [
    "Quadratic",
    "Scalar",
    "FieldMismatchError",
    "NotCanonicalizableError",
    "quadratic",
    "golden",
    "as_scalar",
    "parse_scalar",
    "is_exact",
    "sign",
    "floor_scalar",
    "canonical_key",
    "to_float",
    "scalar_to_json",
    "scalar_from_json",
]


class FieldMismatchError(ValueError):
    """Raised when combining quadratic numbers from different fields."""


class NotCanonicalizableError(TypeError):
    """Raised when an exact canonical key is requested for a float."""


def _squarefree(d: int) -> bool:
    if d < 2:
        return False
    k = 2
    while k * k <= d:
        if d % (k * k) == 0:
            return False
        k += 1
    return True


class Quadratic:
    """The real number ``a + b*sqrt(d)`` with rational ``a, b`` and square-free ``d``.

    Instances are immutable and hash/compare equal to the corresponding
    Fraction when ``b == 0``.  Use :func:`quadratic` to get automatic
    demotion to Fraction.
    """

    __slots__ = ("a", "b", "d")

    def __init__(self, a, b, d: int):
        d = int(d)
        if not _squarefree(d):
            raise ValueError(f"d={d} is not a square-free integer > 1")
        object.__setattr__(self, "a", Fraction(a))
        object.__setattr__(self, "b", Fraction(b))
        object.__setattr__(self, "d", d)

    def __setattr__(self, name, value):
        raise AttributeError("Quadratic is immutable")

    def __reduce__(self):
        return (Quadratic, (self.a, self.b, self.d))

    def __repr__(self) -> str:
        return f"Quadratic({self.a}, {self.b}, {self.d})"

    def __str__(self) -> str:
        if self.b == 0:
            return str(self.a)
        return f"{self.a}{'+' if self.b > 0 else '-'}{abs(self.b)}*sqrt({self.d})"

    # -- coercion helpers -------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, Quadratic):
            if other.d != self.d:
                if other.b == 0:
                    return other.a, Fraction(0)
                if self.b == 0:
                    # self is really rational; let the other field win
                    return None
                raise FieldMismatchError(f"sqrt({self.d}) vs sqrt({other.d})")
            return other.a, other.b
        if isinstance(other, (int, Rational)):
            return Fraction(other), Fraction(0)
        return NotImplemented

    def __float__(self) -> float:
        return to_float(self)[0]

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, float):
            return float(self) + other
        c = self._coerce(other)
        if c is NotImplemented:
            return NotImplemented
        if c is None:
            return other + self.a
        return quadratic(self.a + c[0], self.b + c[1], self.d)

    __radd__ = __add__

    def __neg__(self):
        return Quadratic(-self.a, -self.b, self.d)

    def __pos__(self):
        return self

    def __sub__(self, other):
        if isinstance(other, float):
            return float(self) - other
        c = self._coerce(other)
        if c is NotImplemented:
            return NotImplemented
        if c is None:
            return self.a - other
        return quadratic(self.a - c[0], self.b - c[1], self.d)

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __mul__(self, other):
        if isinstance(other, float):
            return float(self) * other
        c = self._coerce(other)
        if c is NotImplemented:
            return NotImplemented
        if c is None:
            return other * self.a
        a, b = c
        return quadratic(self.a * a + self.b * b * self.d, self.a * b + self.b * a, self.d)

    __rmul__ = __mul__

    def conjugate(self) -> "Quadratic":
        return Quadratic(self.a, -self.b, self.d)

    def norm(self) -> Fraction:
        return self.a * self.a - self.b * self.b * self.d

    def __truediv__(self, other):
        if isinstance(other, float):
            return float(self) / other
        if isinstance(other, (int, Rational)):
            if other == 0:
                raise ZeroDivisionError
            return quadratic(self.a / other, self.b / other, self.d)
        if isinstance(other, Quadratic):
            return self * other.reciprocal()
        return NotImplemented

    def __rtruediv__(self, other):
        if isinstance(other, float):
            return other / float(self)
        return self.reciprocal() * other

    def reciprocal(self):
        n = self.norm()
        if n == 0:
            raise ZeroDivisionError("division by zero quadratic")
        return quadratic(self.a / n, -self.b / n, self.d)

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            return NotImplemented
        result: Scalar = Fraction(1)
        base: Scalar = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def __abs__(self):
        return -self if sign(self) < 0 else self

    # -- comparison --------------------------------------------------------

    def __eq__(self, other):
        if isinstance(other, Quadratic):
            if self.b == 0 and other.b == 0:
                return self.a == other.a
            return self.d == other.d and self.a == other.a and self.b == other.b
        if isinstance(other, (int, Rational)):
            return self.b == 0 and self.a == other
        if isinstance(other, float):
            return self.b == 0 and self.a == other
        return NotImplemented

    def __hash__(self):
        if self.b == 0:
            return hash(self.a)
        return hash((self.a, self.b, self.d))

    def _cmp(self, other) -> int:
        if isinstance(other, float):
            return (float(self) > other) - (float(self) < other)
        diff = self - other
        return sign(diff)

    def __lt__(self, other):
        return self._cmp(other) < 0

    def __le__(self, other):
        return self._cmp(other) <= 0

    def __gt__(self, other):
        return self._cmp(other) > 0

    def __ge__(self, other):
        return self._cmp(other) >= 0


Scalar = Union[Fraction, Quadratic, float]


def quadratic(a, b, d: int) -> Scalar:
    """Build ``a + b*sqrt(d)``, demoting to Fraction when ``b == 0``."""
    b = Fraction(b)
    if b == 0:
        return Fraction(a)
    return Quadratic(a, b, d)


def golden() -> Quadratic:
    """The golden ratio conjugate (sqrt(5) - 1)/2, root of x^2 + x - 1."""
    return Quadratic(Fraction(-1, 2), Fraction(1, 2), 5)


def is_exact(x) -> bool:
    return isinstance(x, (Fraction, Quadratic, int))


def as_scalar(x) -> Scalar:
    """Normalize ints to Fraction and degenerate quadratics to Fraction."""
    if isinstance(x, bool):
        raise TypeError("bool is not a scalar")
    if isinstance(x, Quadratic):
        return x.a if x.b == 0 else x
    if isinstance(x, (int, Rational)):
        return Fraction(x)
    if isinstance(x, float):
        return x
    if isinstance(x, str):
        return parse_scalar(x)
    raise TypeError(f"cannot interpret {x!r} as a scalar")


def parse_scalar(text: str) -> Scalar:
    """Parse CLI-style scalar strings.

    Accepted forms: ``"3"``, ``"-2/7"``, ``"golden"``, ``"sqrt2"``,
    ``"sqrt(2)"``, ``"a+b*sqrt(d)"`` with rational a, b, and decimal floats
    like ``"0.75"`` (kept as float, hence approximate).
    """
    s = text.strip().replace(" ", "")
    if s == "golden":
        return golden()
    if "sqrt" in s:
        head, _, tail = s.partition("sqrt")
        d = int(tail.strip("()"))
        a = Fraction(0)
        coef = head
        if head.endswith("*"):
            coef = head[:-1]
        # split "a+b*" / "a-b*" / "b*" / "" / "-"
        b_txt = coef
        for i in range(len(coef) - 1, 0, -1):
            if coef[i] in "+-" and coef[i - 1] not in "/eE":
                a = Fraction(coef[:i])
                b_txt = coef[i:]
                break
        if b_txt in ("", "+"):
            b = Fraction(1)
        elif b_txt == "-":
            b = Fraction(-1)
        else:
            b = Fraction(b_txt)
        return quadratic(a, b, d)
    if any(c in s for c in ".eE") and "/" not in s:
        return float(s)
    return Fraction(s)


def sign(x) -> int:
    """Exact sign; quadratic values are decided by rationalized comparison."""
    if isinstance(x, Quadratic):
        a, b = x.a, x.b
        sa = (a > 0) - (a < 0)
        sb = (b > 0) - (b < 0)
        if sb == 0:
            return sa
        if sa == 0 or sa == sb:
            return sb
        # opposite signs: compare a^2 with b^2 d
        lhs = a * a
        rhs = b * b * x.d
        if lhs > rhs:
            return sa
        return sb  # equality impossible for square-free d > 1 and b != 0
    return (x > 0) - (x < 0)


def floor_scalar(x) -> int:
    """Exact floor for Fraction/Quadratic, plain floor for floats."""
    if isinstance(x, Fraction):
        return x.numerator // x.denominator
    if isinstance(x, int):
        return x
    if isinstance(x, Quadratic):
        k = math.floor(to_float(x)[0])
        while sign(x - k) < 0:
            k -= 1
        while sign(x - (k + 1)) >= 0:
            k += 1
        return k
    return math.floor(x)


def canonical_key(x) -> bytes:
    """Byte key with ``key(a) == key(b)`` iff ``a == b`` for exact scalars."""
    if isinstance(x, float):
        raise NotCanonicalizableError("float scalars have no exact canonical key")
    if isinstance(x, Quadratic) and x.b != 0:
        return (
            f"K{x.d}:{x.a.numerator}/{x.a.denominator}:{x.b.numerator}/{x.b.denominator}"
        ).encode()
    q = Fraction(x.a if isinstance(x, Quadratic) else x)
    return f"Q{q.numerator}/{q.denominator}".encode()


def _ulp(v: float) -> float:
    return math.ulp(v) if v != 0 else math.ulp(0.0)


def to_float(x) -> tuple[float, float]:
    """Return ``(value, error_bound)`` with ``|value - x| <= error_bound``."""
    if isinstance(x, float):
        return x, 0.0
    if isinstance(x, (int, Fraction)):
        q = Fraction(x)
        v = float(q)  # correctly rounded
        return v, (0.0 if Fraction(v) == q else _ulp(v) / 2)
    if isinstance(x, Quadratic):
        if x.b == 0:
            return to_float(x.a)
        # x = (A + B*sqrt(d)) / C with integers
        C = x.a.denominator * x.b.denominator // math.gcd(x.a.denominator, x.b.denominator)
        A = x.a.numerator * (C // x.a.denominator)
        B = x.b.numerator * (C // x.b.denominator)
        k = 64
        while True:
            root = math.isqrt(B * B * x.d << (2 * k))  # floor(|B| sqrt(d) 2^k)
            approx = Fraction((A << k) + (root if B > 0 else -root), C << k)
            slack = Fraction(1, C << k)
            if approx != 0 and slack <= abs(approx) / (1 << 60):
                break
            k += 64
        v = float(approx)
        err = abs(Fraction(v) - approx) + slack
        bound = float(err)
        if Fraction(bound) < err:
            bound = math.nextafter(bound, math.inf)
        return v, bound
    raise TypeError(f"not a scalar: {x!r}")


def _rational_to_json(q: Fraction) -> dict:
    q = Fraction(q)
    return {"type": "rational", "num": str(q.numerator), "den": str(q.denominator)}


def scalar_to_json(x) -> dict:
    if isinstance(x, float):
        return {"type": "float", "value": x}
    if isinstance(x, Quadratic) and x.b != 0:
        return {"type": "quadratic", "a": _rational_to_json(x.a), "b": _rational_to_json(x.b), "d": x.d}
    return _rational_to_json(x.a if isinstance(x, Quadratic) else x)


def scalar_from_json(obj) -> Scalar:
    if isinstance(obj, str):
        return parse_scalar(obj)
    if isinstance(obj, bool):
        raise ValueError("bool is not a scalar")
    if isinstance(obj, int):
        return Fraction(obj)
    if isinstance(obj, float):
        return obj
    kind = obj.get("type")
    if kind == "rational":
        return Fraction(int(obj["num"]), int(obj["den"]))
    if kind == "quadratic":
        return quadratic(scalar_from_json(obj["a"]), scalar_from_json(obj["b"]), int(obj["d"]))
    if kind == "float":
        return float(obj["value"])
    raise ValueError(f"unknown scalar encoding: {obj!r}")
