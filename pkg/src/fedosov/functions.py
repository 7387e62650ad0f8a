"""Truncated function algebra of the Fedosov manifold ``L[1] + B``.

A :class:`FormalFunction` is a finite sum of monomials ``c * xi^I * eta^J`` where

* ``I`` is a strictly increasing tuple of L-coframe indices.  Indices ``0..r-1``
  are the B-type generators ``xi^i``; indices ``r..r+r'-1`` are the A-type
  generators (``zeta``).  These are odd.
* ``J`` is a multi-index of width ``r`` over the even fiber coordinates ``eta``.
* ``c`` is an exact coefficient (see :mod:`fedosov.coefficients`).

Monomials with ``|J| > N`` are dropped, ``N`` being the truncation order.
"""
from __future__ import annotations

from dataclasses import dataclass
from gmpy2 import mpq
from functools import lru_cache
from itertools import combinations
from math import factorial, prod
from typing import Dict, Iterator, Tuple

from .coefficients import Coefficient, Poly, coeff_from_json, coeff_to_json, lift, zero

Ext = Tuple[int, ...]
Sym = Tuple[int, ...]
Key = Tuple[Ext, Sym]

INF = float("inf")


class StructureError(ValueError):
    """Operands live on different frames or truncation orders."""


@dataclass(frozen=True)
class Shape:
    """Frame data shared by every object on one Fedosov manifold.

    ``rank_b`` = r, ``rank_a`` = r', ``chart_dim`` = n or ``None`` for a point base.
    """

    rank_b: int
    rank_a: int
    chart_dim: int | None = None

    @property
    def rank_l(self) -> int:
        return self.rank_b + self.rank_a

    def is_b(self, u: int) -> bool:
        return u < self.rank_b

    def zero(self) -> Coefficient:
        return zero(self.chart_dim)

    def coeff(self, c) -> Coefficient:
        return lift(c, self.chart_dim)


@lru_cache(maxsize=None)
def merge_ext(i1: Ext, i2: Ext):
    """Wedge two sorted index tuples.  Returns ``(sign, merged)`` or ``None`` if they overlap."""
    if not i1:
        return 1, i2
    if not i2:
        return 1, i1
    s2 = set(i2)
    if not s2.isdisjoint(i1):
        return None
    inv = 0
    for a in i1:
        for b in i2:
            if a > b:
                inv += 1
    return (-1 if inv & 1 else 1), tuple(sorted(i1 + i2))


def add_sym(j1: Sym, j2: Sym) -> Sym:
    return tuple(a + b for a, b in zip(j1, j2))


def jfact(j: Sym) -> int:
    return prod(factorial(k) for k in j)


def sym_monomials(r: int, degree: int) -> Iterator[Sym]:
    """All multi-indices of width ``r`` and total degree ``degree`` (lexicographically descending)."""
    if r == 0:
        if degree == 0:
            yield ()
        return
    for first in range(degree, -1, -1):
        for rest in sym_monomials(r - 1, degree - first):
            yield (first,) + rest


def sym_upto(r: int, n_max: int) -> Iterator[Sym]:
    for d in range(n_max + 1):
        yield from sym_monomials(r, d)


def ext_subsets(m: int) -> Iterator[Ext]:
    for p in range(m + 1):
        yield from combinations(range(m), p)


def _accumulate(out: Dict, key, c):
    v = out.get(key)
    v = c if v is None else v + c
    if v:
        out[key] = v
    else:
        out.pop(key, None)


class FormalFunction:
    """Element of ``Gamma(Lambda L^v (x) S^{<=N} B^v)``; immutable by convention."""

    __slots__ = ("shape", "order", "terms")

    def __init__(self, shape: Shape, order: int, terms: Dict[Key, Coefficient] | None = None):
        self.shape = shape
        self.order = order
        if terms is None:
            self.terms = {}
        else:
            self.terms = {k: c for k, c in terms.items() if c and sum(k[1]) <= order}

    @classmethod
    def _raw(cls, shape, order, terms):
        f = cls.__new__(cls)
        f.shape = shape
        f.order = order
        f.terms = terms
        return f

    # constructors -----------------------------------------------------------------
    @classmethod
    def zero(cls, shape: Shape, order: int) -> "FormalFunction":
        return cls._raw(shape, order, {})

    @classmethod
    def constant(cls, shape: Shape, order: int, c=1) -> "FormalFunction":
        return cls.monomial(shape, order, (), None, c)

    @classmethod
    def monomial(cls, shape: Shape, order: int, ext: Ext = (), sym: Sym | None = None, c=1):
        if sym is None:
            sym = (0,) * shape.rank_b
        sym = tuple(sym)
        if len(sym) != shape.rank_b:
            raise StructureError(f"multi-index {sym} has width {len(sym)}, expected {shape.rank_b}")
        ext = tuple(ext)
        sign = 1
        if list(ext) != sorted(set(ext)):
            if len(set(ext)) != len(ext):
                return cls.zero(shape, order)
            res = (1, ())
            for u in ext:
                res2 = merge_ext(res[1], (u,))
                res = (res[0] * res2[0], res2[1])
            sign, ext = res
        c = shape.coeff(c) * sign
        return cls(shape, order, {(ext, sym): c})

    @classmethod
    def xi(cls, shape: Shape, order: int, u: int) -> "FormalFunction":
        return cls.monomial(shape, order, (u,))

    @classmethod
    def eta(cls, shape: Shape, order: int, j: int) -> "FormalFunction":
        sym = [0] * shape.rank_b
        sym[j] = 1
        return cls.monomial(shape, order, (), tuple(sym))

    # structure ----------------------------------------------------------------------
    def _check(self, other: "FormalFunction"):
        if not isinstance(other, FormalFunction):
            raise StructureError(f"expected FormalFunction, got {type(other).__name__}")
        if other.shape != self.shape:
            raise StructureError(f"frame mismatch: {self.shape} vs {other.shape}")
        if other.order != self.order:
            raise StructureError(f"truncation order mismatch: {self.order} vs {other.order}")

    def is_zero(self) -> bool:
        return not self.terms

    def __bool__(self):
        return bool(self.terms)

    def __eq__(self, other):
        if not isinstance(other, FormalFunction):
            return NotImplemented
        return self.shape == other.shape and self.order == other.order and self.terms == other.terms

    def __hash__(self):
        return hash((self.shape, self.order, frozenset(self.terms)))

    def form_degrees(self) -> set:
        return {len(i) for i, _ in self.terms}

    def sym_degrees(self) -> set:
        return {sum(j) for _, j in self.terms}

    def with_order(self, order: int) -> "FormalFunction":
        return FormalFunction(self.shape, order, self.terms)

    # linear structure ---------------------------------------------------------------
    def __add__(self, other):
        self._check(other)
        out = dict(self.terms)
        for k, c in other.terms.items():
            _accumulate(out, k, c)
        return FormalFunction._raw(self.shape, self.order, out)

    def __neg__(self):
        return FormalFunction._raw(self.shape, self.order, {k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c) -> "FormalFunction":
        if isinstance(c, int):
            c = mpq(c)
        if not c:
            return FormalFunction.zero(self.shape, self.order)
        return FormalFunction(self.shape, self.order, {k: v * c for k, v in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, FormalFunction):
            return ff_mul(self, other)
        return self.scale(other)

    def __rmul__(self, other):
        return self.scale(other)

    def map_coefficients(self, fn) -> "FormalFunction":
        return FormalFunction(self.shape, self.order, {k: fn(c) for k, c in self.terms.items()})

    def project(self, max_sym: int | None = None, form_degree: int | None = None) -> "FormalFunction":
        """Keep only terms with ``|J| <= max_sym`` (and the given form degree, if set)."""
        terms = {
            k: c
            for k, c in self.terms.items()
            if (max_sym is None or sum(k[1]) <= max_sym) and (form_degree is None or len(k[0]) == form_degree)
        }
        return FormalFunction._raw(self.shape, self.order, terms)

    def homogeneous(self, sym_degree: int) -> "FormalFunction":
        return FormalFunction._raw(
            self.shape, self.order, {k: c for k, c in self.terms.items() if sum(k[1]) == sym_degree}
        )

    # display / serialization ------------------------------------------------------------
    def __repr__(self):
        if not self.terms:
            return "0"
        parts = []
        for (i, j), c in sorted(self.terms.items()):
            gens = [("xi%d" % u if self.shape.is_b(u) else "zeta%d" % (u - self.shape.rank_b)) for u in i]
            gens += [f"eta{a}^{k}" if k > 1 else f"eta{a}" for a, k in enumerate(j) if k]
            parts.append(f"({c})" + ("*" + "*".join(gens) if gens else ""))
        return " + ".join(parts)

    def to_records(self) -> list:
        return [
            {"xi": list(i), "eta": list(j), "coeff": coeff_to_json(c)}
            for (i, j), c in sorted(self.terms.items())
        ]

    @classmethod
    def from_records(cls, shape: Shape, order: int, records) -> "FormalFunction":
        out = cls.zero(shape, order)
        for rec in records:
            out = out + cls.monomial(
                shape, order, tuple(rec["xi"]), tuple(rec["eta"]), coeff_from_json(rec["coeff"], shape.chart_dim)
            )
        return out


def ff_mul(f: FormalFunction, g: FormalFunction) -> FormalFunction:
    """Graded-commutative product with Koszul signs; symmetric degree above ``N`` is discarded."""
    f._check(g)
    n_max = f.order
    out: Dict[Key, Coefficient] = {}
    for (i1, j1), c1 in f.terms.items():
        d1 = sum(j1)
        for (i2, j2), c2 in g.terms.items():
            if d1 + sum(j2) > n_max:
                continue
            m = merge_ext(i1, i2)
            if m is None:
                continue
            sign, i = m
            c = c1 * c2
            _accumulate(out, (i, add_sym(j1, j2)), c if sign > 0 else -c)
    return FormalFunction._raw(f.shape, n_max, out)


def filtration_order(f: FormalFunction):
    """Minimal symmetric degree among the nonzero terms; ``inf`` for zero."""
    if not f.terms:
        return INF
    return min(sum(j) for _, j in f.terms)


def i_adic_distance(f: FormalFunction, g: FormalFunction) -> float:
    k = filtration_order(f - g)
    return 0.0 if k == INF else 1.0 / (k + 1)


class PolySection:
    """Element of ``Gamma(S B)`` in the basis ``d_J = b^{(.)J}``.

    ``terms`` maps multi-indices of width ``r`` to coefficients.
    """

    __slots__ = ("rank", "chart_dim", "terms")

    def __init__(self, rank: int, chart_dim: int | None = None, terms: Dict[Sym, Coefficient] | None = None):
        self.rank = rank
        self.chart_dim = chart_dim
        self.terms = {} if terms is None else {j: c for j, c in terms.items() if c}

    @classmethod
    def basis(cls, rank: int, sym: Sym, chart_dim: int | None = None, c=1) -> "PolySection":
        return cls(rank, chart_dim, {tuple(sym): lift(c, chart_dim)})

    @classmethod
    def one(cls, rank: int, chart_dim: int | None = None) -> "PolySection":
        return cls.basis(rank, (0,) * rank, chart_dim)

    @classmethod
    def letter(cls, rank: int, i: int, chart_dim: int | None = None, c=1) -> "PolySection":
        j = [0] * rank
        j[i] = 1
        return cls.basis(rank, tuple(j), chart_dim, c)

    def _check(self, other):
        if not isinstance(other, PolySection) or other.rank != self.rank or other.chart_dim != self.chart_dim:
            raise StructureError("PolySection frame mismatch")

    def __add__(self, other):
        self._check(other)
        out = dict(self.terms)
        for j, c in other.terms.items():
            _accumulate(out, j, c)
        return PolySection(self.rank, self.chart_dim, out)

    def __neg__(self):
        return PolySection(self.rank, self.chart_dim, {j: -c for j, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c) -> "PolySection":
        if isinstance(c, int):
            c = mpq(c)
        return PolySection(self.rank, self.chart_dim, {j: v * c for j, v in self.terms.items()})

    def __eq__(self, other):
        if not isinstance(other, PolySection):
            return NotImplemented
        return self.rank == other.rank and self.chart_dim == other.chart_dim and self.terms == other.terms

    def __bool__(self):
        return bool(self.terms)

    def degree(self) -> int:
        return max((sum(j) for j in self.terms), default=-1)

    def homogeneous(self, d: int) -> "PolySection":
        return PolySection(self.rank, self.chart_dim, {j: c for j, c in self.terms.items() if sum(j) == d})

    def map_coefficients(self, fn) -> "PolySection":
        return PolySection(self.rank, self.chart_dim, {j: fn(c) for j, c in self.terms.items()})

    def __repr__(self):
        if not self.terms:
            return "0"
        return " + ".join(
            f"({c})*d{list(j)}" for j, c in sorted(self.terms.items(), key=lambda t: (sum(t[0]), t[0]))
        )

    def to_json(self):
        return [[list(j), coeff_to_json(c)] for j, c in sorted(self.terms.items())]


def pair(theta: PolySection, f: FormalFunction):
    """Duality pairing ``<theta, f>`` with the shuffle-sum normalization ``<d_J, eta^J> = J!``.

    For a 0-form ``f`` the result is a coefficient.  Otherwise the pairing is taken
    per exterior monomial and returned as a FormalFunction of symmetric degree 0.
    """
    if theta.rank != f.shape.rank_b:
        raise StructureError(f"pairing width mismatch: {theta.rank} vs {f.shape.rank_b}")
    out: Dict[Key, Coefficient] = {}
    zero_j = (0,) * theta.rank
    for (i, j), c in f.terms.items():
        t = theta.terms.get(j)
        if t is not None:
            _accumulate(out, (i, zero_j), t * c * jfact(j))
    if all(i == () for i, _ in out):
        return out.get(((), zero_j), f.shape.zero())
    return FormalFunction._raw(f.shape, f.order, out)


def contract(b: PolySection, f: FormalFunction) -> FormalFunction:
    """The derivation ``iota_b`` for a degree-one section ``b``; acts only on the eta variables."""
    if b.degree() > 1 or any(sum(j) != 1 for j in b.terms):
        raise StructureError("contraction needs a homogeneous degree-one section")
    if b.rank != f.shape.rank_b:
        raise StructureError("contraction width mismatch")
    out: Dict[Key, Coefficient] = {}
    for jb, cb in b.terms.items():
        a = jb.index(1)
        for (i, j), c in f.terms.items():
            if j[a]:
                j2 = list(j)
                j2[a] -= 1
                _accumulate(out, (i, tuple(j2)), cb * c * j[a])
    return FormalFunction._raw(f.shape, f.order, out)


def partial_eta(f: FormalFunction, m: Sym) -> FormalFunction:
    """Apply ``d_M = prod (d/d eta^a)^{m_a}``; exterior variables are untouched."""
    if not any(m):
        return f
    out: Dict[Key, Coefficient] = {}
    for (i, j), c in f.terms.items():
        mult = 1
        for a, k in zip(j, m):
            if a < k:
                mult = 0
                break
            mult *= factorial(a) // factorial(a - k)
        if mult:
            _accumulate(out, (i, tuple(a - k for a, k in zip(j, m))), c * mult)
    return FormalFunction._raw(f.shape, f.order, out)


def basis_functions(shape: Shape, order: int, max_sym: int | None = None):
    """Every basis monomial ``xi^I eta^J`` with ``|J| <= max_sym`` (default ``order``)."""
    if max_sym is None:
        max_sym = order
    one_c = shape.coeff(1)
    for i in ext_subsets(shape.rank_l):
        for j in sym_upto(shape.rank_b, max_sym):
            yield FormalFunction._raw(shape, order, {(i, j): one_c})


def evaluate_at(f: FormalFunction, point) -> FormalFunction:
    """Evaluate CHART coefficients at a base point; the result is a POINT-mode function."""
    shape = Shape(f.shape.rank_b, f.shape.rank_a, None)
    return FormalFunction(
        shape, f.order, {k: (c.evaluate(point) if isinstance(c, Poly) else c) for k, c in f.terms.items()}
    )


def apply_derivation(f: FormalFunction, degree: int, on_coeff=None, on_xi=None, on_eta=None) -> FormalFunction:
    """Apply the graded derivation of the given parity determined by its generator values.

    ``on_coeff(c)`` returns the image of a base coefficient, ``on_xi(u)`` / ``on_eta(a)``
    the images of the generators (FormalFunctions).  Missing callbacks mean zero.
    Generator images are memoized for the duration of the call.
    """
    shape, order = f.shape, f.order
    odd = degree & 1
    xi_cache: Dict[int, FormalFunction] = {}
    eta_cache: Dict[int, FormalFunction] = {}
    out = FormalFunction.zero(shape, order)
    one_c = shape.coeff(1)
    for (i, j), c in f.terms.items():
        if on_coeff is not None:
            dc = on_coeff(c)
            if dc:
                out = out + ff_mul(dc, FormalFunction._raw(shape, order, {(i, j): one_c}))
        if on_xi is not None:
            for m, u in enumerate(i):
                if u not in xi_cache:
                    xi_cache[u] = on_xi(u)
                img = xi_cache[u]
                if not img:
                    continue
                left = FormalFunction._raw(shape, order, {(i[:m], (0,) * shape.rank_b): c})
                right = FormalFunction._raw(shape, order, {(i[m + 1:], j): one_c})
                term = ff_mul(ff_mul(left, img), right)
                out = out + (-term if odd and m & 1 else term)
        if on_eta is not None:
            for a, k in enumerate(j):
                if not k:
                    continue
                if a not in eta_cache:
                    eta_cache[a] = on_eta(a)
                img = eta_cache[a]
                if not img:
                    continue
                j2 = list(j)
                j2[a] -= 1
                left = FormalFunction._raw(shape, order, {(i, (0,) * shape.rank_b): c * k})
                right = FormalFunction._raw(shape, order, {((), tuple(j2)): one_c})
                term = ff_mul(ff_mul(left, img), right)
                out = out + (-term if odd and len(i) & 1 else term)
    return out
