"""Exact coefficient rings.

Two base modes are supported:

* POINT: the base is a single point, coefficients are exact rationals
  (``gmpy2.mpq``; :class:`fractions.Fraction` inputs are accepted and mix freely).
* CHART: the base is a coordinate chart of dimension ``n``, coefficients are
  polynomials in ``x1..xn`` with rational coefficients (:class:`Poly`).

Everything downstream only uses ``+``, ``-``, ``*``, truthiness and ``==`` on
coefficients, so both kinds can flow through the same code.
"""
from __future__ import annotations

from fractions import Fraction
from typing import Dict, Iterable, Tuple, Union

from gmpy2 import mpq

Exps = Tuple[int, ...]
Rational = type(mpq())
RATIONAL_TYPES = (int, Fraction, Rational)


class CoefficientError(ValueError):
    """Raised when coefficients of incompatible modes are combined."""


def _frac(c) -> Rational:
    if isinstance(c, Rational):
        return c
    if isinstance(c, str):
        return parse_rational(c)
    if isinstance(c, Fraction):
        return mpq(c.numerator, c.denominator)
    if isinstance(c, int):
        return mpq(c)
    raise CoefficientError(f"not an exact rational: {c!r}")


def rational(c) -> Rational:
    """Coerce ``int``, ``Fraction``, ``"p/q"`` or ``mpq`` to the rational scalar type."""
    return _frac(c)


class Poly:
    """Sparse polynomial in ``n`` chart coordinates with exact rational coefficients.

    ``terms`` maps exponent tuples of width ``n`` to nonzero rationals.
    Instances are treated as immutable.
    """

    __slots__ = ("n", "terms")

    def __init__(self, n: int, terms: Dict[Exps, Rational] | None = None):
        self.n = n
        if terms is None:
            self.terms = {}
        else:
            self.terms = {e: c for e, c in terms.items() if c}

    # constructors ---------------------------------------------------------
    @classmethod
    def const(cls, n: int, c) -> "Poly":
        c = _frac(c)
        return cls(n, {(0,) * n: c} if c else {})

    @classmethod
    def var(cls, n: int, axis: int, power: int = 1) -> "Poly":
        e = [0] * n
        e[axis] = power
        return cls(n, {tuple(e): mpq(1)})

    # arithmetic -------------------------------------------------------------
    def _coerce(self, other) -> "Poly":
        if isinstance(other, Poly):
            if other.n != self.n:
                raise CoefficientError(f"chart dimension mismatch: {self.n} vs {other.n}")
            return other
        if isinstance(other, RATIONAL_TYPES):
            return Poly.const(self.n, other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self.terms)
        for e, c in other.terms.items():
            v = out.get(e, 0) + c
            if v:
                out[e] = v
            else:
                out.pop(e, None)
        return Poly(self.n, out)

    __radd__ = __add__

    def __neg__(self):
        return Poly(self.n, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, RATIONAL_TYPES):
            if not other:
                return Poly(self.n)
            return Poly(self.n, {e: c * other for e, c in self.terms.items()})
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out: Dict[Exps, Rational] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                v = out.get(e, 0) + c1 * c2
                if v:
                    out[e] = v
                else:
                    out.pop(e, None)
        return Poly(self.n, out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, RATIONAL_TYPES):
            return self * (mpq(1) / _frac(other))
        return NotImplemented

    def __pow__(self, k: int):
        out = Poly.const(self.n, 1)
        for _ in range(k):
            out = out * self
        return out

    def __bool__(self):
        return bool(self.terms)

    def __eq__(self, other):
        if isinstance(other, Poly):
            return self.n == other.n and self.terms == other.terms
        if isinstance(other, RATIONAL_TYPES):
            return self.terms == Poly.const(self.n, other).terms
        return NotImplemented

    def __hash__(self):
        return hash((self.n, frozenset(self.terms.items())))

    # calculus -----------------------------------------------------------------
    def partial(self, axis: int) -> "Poly":
        out = {}
        for e, c in self.terms.items():
            if e[axis]:
                e2 = list(e)
                e2[axis] -= 1
                out[tuple(e2)] = c * e[axis]
        return Poly(self.n, out)

    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=-1)

    def evaluate(self, point: Iterable) -> Rational:
        pt = [_frac(p) for p in point]
        total = mpq(0)
        for e, c in self.terms.items():
            v = c
            for p, k in zip(pt, e):
                if k:
                    v *= p ** k
            total += v
        return total

    def substitute_shift(self, point) -> "Poly":
        """Return ``x -> x + point`` applied to this polynomial."""
        out = Poly(self.n)
        shifted = [Poly.var(self.n, i) + _frac(p) for i, p in enumerate(point)]
        for e, c in self.terms.items():
            term = Poly.const(self.n, c)
            for i, k in enumerate(e):
                if k:
                    term = term * shifted[i] ** k
            out = out + term
        return out

    def __repr__(self):
        if not self.terms:
            return "0"
        parts = []
        for e in sorted(self.terms):
            mon = "*".join(f"x{i + 1}^{k}" if k > 1 else f"x{i + 1}" for i, k in enumerate(e) if k)
            c = self.terms[e]
            parts.append(f"{c}*{mon}" if mon else f"{c}")
        return " + ".join(parts)


Coefficient = Union[Rational, Poly]


def zero(n: int | None) -> Coefficient:
    """Zero coefficient for a POINT base (``n is None``) or a chart of dimension ``n``."""
    return mpq(0) if n is None else Poly(n)


def one(n: int | None) -> Coefficient:
    return mpq(1) if n is None else Poly.const(n, 1)


def lift(c, n: int | None) -> Coefficient:
    """Interpret a scalar (or Poly) as a coefficient of the given mode."""
    if isinstance(c, Poly):
        if n is None or c.n != n:
            raise CoefficientError("polynomial coefficient does not match base mode")
        return c
    c = _frac(c)
    return c if n is None else Poly.const(n, c)


def mode_of(c) -> int | None:
    return c.n if isinstance(c, Poly) else None


def _check_same_mode(a, b):
    if mode_of(a) != mode_of(b):
        raise CoefficientError(f"coefficient mode mismatch: {mode_of(a)} vs {mode_of(b)}")


def coeff_add(a: Coefficient, b: Coefficient) -> Coefficient:
    _check_same_mode(a, b)
    return a + b


def coeff_mul(a: Coefficient, b: Coefficient) -> Coefficient:
    _check_same_mode(a, b)
    return a * b


def coeff_partial(a: Coefficient, axis: int) -> Coefficient:
    """Exact partial derivative along chart axis ``axis`` (0-based)."""
    if not isinstance(a, Poly):
        raise CoefficientError("partial derivatives need a CHART coefficient")
    if not 0 <= axis < a.n:
        raise CoefficientError(f"axis {axis} out of range for chart dimension {a.n}")
    return a.partial(axis)


def evaluate(c: Coefficient, point) -> Rational:
    if isinstance(c, Poly):
        return c.evaluate(point)
    return c


# serialization ---------------------------------------------------------------------

def parse_rational(s) -> Rational:
    if isinstance(s, (Rational, Fraction, int)):
        return _frac(s)
    text = str(s).strip()
    try:
        if "/" in text:
            p, q = text.split("/")
            return mpq(int(p), int(q))
        return mpq(int(text))
    except (ValueError, ZeroDivisionError) as exc:
        raise CoefficientError(f"not a rational string: {s!r}") from exc


def rational_to_str(c) -> str:
    c = Fraction(c)
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def coeff_to_json(c: Coefficient):
    """Fractions become ``"p/q"`` strings, polynomials association lists ``[[exps], "p/q"]``."""
    if isinstance(c, Poly):
        return [[list(e), rational_to_str(v)] for e, v in sorted(c.terms.items())]
    return rational_to_str(c)


def coeff_from_json(obj, n: int | None) -> Coefficient:
    """Inverse of :func:`coeff_to_json`; scalars are lifted into CHART mode when ``n`` is set.

    In CHART mode an inline expression such as ``"x*y + 1/2"`` is accepted too.
    """
    if isinstance(obj, list):
        if n is None:
            raise CoefficientError("polynomial given for a POINT-mode coefficient")
        terms = {}
        for exps, val in obj:
            if len(exps) != n:
                raise CoefficientError(f"multi-index {exps} has wrong width for chart dimension {n}")
            e = tuple(int(k) for k in exps)
            terms[e] = terms.get(e, mpq(0)) + parse_rational(val)
        return Poly(n, terms)
    if isinstance(obj, str) and n is not None and any(ch.isalpha() for ch in obj):
        return parse_poly(obj, n)
    return lift(parse_rational(obj), n)


def parse_poly(expr: str, n: int) -> Poly:
    """Parse an inline polynomial such as ``"2*x + 1/3"`` or ``"x1*x2 - x2^2"``.

    Variables are ``x1..xn``; for ``n <= 3`` the names ``x, y, z`` are accepted as well.
    """
    import sympy

    names = [f"x{i + 1}" for i in range(n)]
    syms = list(sympy.symbols(names)) if n else []
    local = dict(zip(names, syms))
    for alias, s in zip("xyz", syms):
        if n <= 3:
            local[alias] = s
    e = sympy.sympify(expr.replace("^", "**"), locals=local, rational=True)
    if not syms:
        return Poly(0, {(): parse_rational(str(sympy.Rational(e)))}) if e != 0 else Poly(0)
    p = sympy.Poly(sympy.expand(e), *syms)
    terms = {}
    for mon, c in p.terms():
        c = sympy.Rational(c)
        terms[tuple(int(k) for k in mon)] = mpq(int(c.p), int(c.q))
    return Poly(n, terms)
