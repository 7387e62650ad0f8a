"""Koszul contraction, vertical vector fields and the Fedosov iteration."""
from __future__ import annotations

from gmpy2 import mpq
from typing import Dict, List, Sequence

from .functions import (
    FormalFunction,
    Shape,
    _accumulate,
    basis_functions,
    ff_mul,
    filtration_order,
    partial_eta,
)
from .liepair import (
    Connection,
    LiePair,
    SplittingOffset,
    TorsionError,
    covariant_derivative_functions,
    curvature,
    dual_connection_eta,
    frame_change,
    torsion,
)

INF = float("inf")


# ---------------------------------------------------------------------------------------
# function-level Koszul operators (reference splitting)


def koszul(f: FormalFunction) -> FormalFunction:
    """``k = sum_i xi^i d/d eta^i``."""
    r = f.shape.rank_b
    out: Dict = {}
    for (i, j), c in f.terms.items():
        for a in range(r):
            ja = j[a]
            if not ja or a in i:
                continue
            pos = 0
            while pos < len(i) and i[pos] < a:
                pos += 1
            j2 = j[:a] + (ja - 1,) + j[a + 1:]
            val = c * ja
            _accumulate(out, (i[:pos] + (a,) + i[pos:], j2), -val if pos & 1 else val)
    return FormalFunction._raw(f.shape, f.order, out)


def _hat(f: FormalFunction, weighted: bool) -> FormalFunction:
    r, n_max = f.shape.rank_b, f.order
    out: Dict = {}
    for (i, j), c in f.terms.items():
        q = sum(j)
        if q >= n_max:
            continue
        p2 = sum(1 for u in i if u < r)
        if not p2:
            continue
        if weighted:
            c = c * mpq(1, p2 + q)
        for m, u in enumerate(i):
            if u >= r:
                break
            j2 = j[:u] + (j[u] + 1,) + j[u + 1:]
            _accumulate(out, (i[:m] + i[m + 1:], j2), -c if m & 1 else c)
    return FormalFunction._raw(f.shape, n_max, out)


def hat_koszul(f: FormalFunction) -> FormalFunction:
    """``h^ = sum_i eta^i d/d xi^i`` over the B-type exterior generators."""
    return _hat(f, False)


def euler(f: FormalFunction) -> FormalFunction:
    """Scale each monomial by ``|I_B| + |J|``."""
    r = f.shape.rank_b
    out = {}
    for (i, j), c in f.terms.items():
        w = sum(1 for u in i if u < r) + sum(j)
        if w:
            out[(i, j)] = c * w
    return FormalFunction._raw(f.shape, f.order, out)


def _sigma0(f: FormalFunction) -> FormalFunction:
    r = f.shape.rank_b
    return FormalFunction._raw(
        f.shape, f.order, {(i, j): c for (i, j), c in f.terms.items() if not any(j) and all(u >= r for u in i)}
    )


class Contraction:
    """The contraction data ``(k, h, sigma0)`` attached to a splitting.

    For the reference splitting ``h`` and ``sigma0`` are given by their coordinate
    formulas.  For another splitting they are conjugated by the coframe change.
    """

    def __init__(self, pair: LiePair | None = None, offset: SplittingOffset | None = None):
        self.pair = pair
        self.offset = offset if offset else None

    def k(self, f):
        return koszul(f)

    def _conj(self, op, f):
        if self.offset is None:
            return op(f)
        back = frame_change(self.pair, self.offset.negated(), f)
        return frame_change(self.pair, self.offset, op(back))

    def h(self, f):
        return self._conj(lambda g: _hat(g, True), f)

    def hat(self, f):
        return self._conj(hat_koszul, f)

    def sigma0(self, f):
        return self._conj(_sigma0, f)

    def residual(self, g):
        """``(kh + hk - id + sigma0)(g)``.

        ``k`` touches only ``eta`` and fixes every ``xi^i``, so it commutes with the coframe
        change and the whole expression is conjugated at once.
        """
        if self.offset is None:
            return _reference_residual(g)
        back = frame_change(self.pair, self.offset.negated(), g)
        return frame_change(self.pair, self.offset, _reference_residual(back))


def _reference_residual(g):
    return koszul(_hat(g, True)) + _hat(koszul(g), True) - g + _sigma0(g)


REFERENCE = Contraction()


def homotopy_h(f: FormalFunction, contraction: Contraction = REFERENCE) -> FormalFunction:
    """``h = h^/(p2 + q)`` per monomial, zero on ``p2 = q = 0``."""
    return contraction.h(f)


def sigma0(f: FormalFunction, contraction: Contraction = REFERENCE) -> FormalFunction:
    """Keep the monomials without B-type exterior generators and with ``|J| = 0``."""
    return contraction.sigma0(f)


def homotopy_residual(f: FormalFunction, contraction: Contraction = REFERENCE) -> FormalFunction:
    """``(kh + hk - id + sigma0)(f)`` computed with one degree of headroom, so it is exact for every ``|J| <= N``."""
    g = f.with_order(f.order + 1)
    return contraction.residual(g).with_order(f.order)


# ---------------------------------------------------------------------------------------
# vertical vector fields


class VerticalVectorField:
    """``sum_j components[j] d/d eta^j``; a derivation of the given degree (its form degree)."""

    __slots__ = ("components", "degree")

    def __init__(self, components: Sequence[FormalFunction], degree: int):
        self.components = tuple(components)
        self.degree = degree
        for c in self.components:
            fd = c.form_degrees()
            if fd and fd != {degree}:
                raise ValueError(f"component form degrees {sorted(fd)} differ from field degree {degree}")

    @classmethod
    def zero(cls, shape: Shape, order: int, degree: int) -> "VerticalVectorField":
        return cls([FormalFunction.zero(shape, order) for _ in range(shape.rank_b)], degree)

    @property
    def shape(self) -> Shape:
        return self.components[0].shape

    @property
    def order(self) -> int:
        return self.components[0].order

    def apply(self, g: FormalFunction) -> FormalFunction:
        out = FormalFunction.zero(g.shape, g.order)
        for a, f in enumerate(self.components):
            if not f:
                continue
            e = [0] * len(self.components)
            e[a] = 1
            dg = partial_eta(g, tuple(e))
            if dg:
                out = out + ff_mul(f, dg)
        return out

    __call__ = apply

    def _same(self, other):
        if self.degree != other.degree:
            raise ValueError("adding vertical fields of different degrees")

    def __add__(self, other):
        if other.is_zero():
            return self
        if self.is_zero():
            return other
        self._same(other)
        return VerticalVectorField([a + b for a, b in zip(self.components, other.components)], self.degree)

    def __neg__(self):
        return VerticalVectorField([-a for a in self.components], self.degree)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c):
        return VerticalVectorField([a.scale(c) for a in self.components], self.degree)

    def map(self, fn) -> "VerticalVectorField":
        return VerticalVectorField([fn(a) for a in self.components], self.degree)

    def is_zero(self) -> bool:
        return all(a.is_zero() for a in self.components)

    def __bool__(self):
        return not self.is_zero()

    def __eq__(self, other):
        if not isinstance(other, VerticalVectorField):
            return NotImplemented
        if self.is_zero() and other.is_zero():
            return True
        return self.degree == other.degree and self.components == other.components

    def homogeneous(self, k: int) -> "VerticalVectorField":
        """The slice whose components have symmetric degree ``k``."""
        return self.map(lambda f: f.homogeneous(k))

    def project(self, max_sym: int) -> "VerticalVectorField":
        return self.map(lambda f: f.project(max_sym))

    def with_order(self, order: int) -> "VerticalVectorField":
        return self.map(lambda f: f.with_order(order))

    def filtration_order(self):
        return min((filtration_order(a) for a in self.components), default=INF)

    def __repr__(self):
        parts = [f"({c!r})*d/deta{j}" for j, c in enumerate(self.components) if c]
        return " + ".join(parts) if parts else "0"

    def to_records(self) -> list:
        out = []
        for j, comp in enumerate(self.components):
            for rec in comp.to_records():
                rec["b"] = j
                out.append(rec)
        return out


def field_bracket(x: VerticalVectorField, y: VerticalVectorField) -> VerticalVectorField:
    """Graded commutator of two vertical fields."""
    sign = -1 if (x.degree * y.degree) & 1 else 1
    comps = []
    for fx, fy in zip(x.components, y.components):
        a = x.apply(fy)
        b = y.apply(fx)
        comps.append(a - b if sign > 0 else a + b)
    return VerticalVectorField(comps, x.degree + y.degree)


def bracket_with_d(p: LiePair, conn: Connection, x: VerticalVectorField) -> VerticalVectorField:
    """``[d_L^nabla, X]``; again a vertical field since both sides kill no exterior generator differently."""
    sign = -1 if x.degree & 1 else 1
    comps = []
    for j, f in enumerate(x.components):
        a = covariant_derivative_functions(p, conn, f)
        b = x.apply(dual_connection_eta(p, conn, x.order, j))
        comps.append(a - b if sign > 0 else a + b)
    return VerticalVectorField(comps, x.degree + 1)


def delta_field(x: VerticalVectorField) -> VerticalVectorField:
    """``delta = [k, -]``; on vertical fields this is ``k`` applied componentwise."""
    return VerticalVectorField([koszul(f) for f in x.components], x.degree + 1)


def h_natural(x: VerticalVectorField, contraction: Contraction = REFERENCE) -> VerticalVectorField:
    return VerticalVectorField([contraction.h(f) for f in x.components], x.degree - 1)


def sigma0_field(x: VerticalVectorField, contraction: Contraction = REFERENCE) -> VerticalVectorField:
    return VerticalVectorField([contraction.sigma0(f) for f in x.components], x.degree)


# ---------------------------------------------------------------------------------------
# Fedosov iteration


def contraction_for(p: LiePair, splitting: SplittingOffset | None) -> Contraction:
    return Contraction(p, splitting) if splitting else REFERENCE


def fedosov_pieces(p: LiePair, conn: Connection, order: int, splitting: SplittingOffset | None = None) -> Dict[int, VerticalVectorField]:
    """The homogeneous pieces ``X_k`` (``2 <= k <= N``) of the Fedosov field."""
    t = torsion(p, conn)
    if not t.is_zero():
        raise TorsionError("the Fedosov iteration needs a torsion-free connection", t)
    ctr = contraction_for(p, splitting)
    pieces: Dict[int, VerticalVectorField] = {}
    if order < 2:
        return pieces
    pieces[2] = h_natural(curvature(p, conn, order), ctr)
    for k in range(2, order):
        src = bracket_with_d(p, conn, pieces[k])
        half = VerticalVectorField.zero(p.shape, order, 2)
        for a in range(2, k):
            b = k + 1 - a
            if b < 2:
                continue
            half = half + field_bracket(pieces[a], pieces[b])
        src = src + half.scale(mpq(1, 2))
        pieces[k + 1] = h_natural(src.homogeneous(k), ctr)
    return pieces


def fedosov_X(p: LiePair, conn: Connection, order: int, splitting: SplittingOffset | None = None) -> VerticalVectorField:
    """``X^nabla = sum_{k=2}^N X_k`` with ``h_nat(X) = 0``."""
    out = VerticalVectorField.zero(p.shape, order, 1)
    for piece in fedosov_pieces(p, conn, order, splitting).values():
        out = out + piece
    return out


class FedosovField:
    """``Q = -k + d_L^nabla + X`` applied compositionally."""

    def __init__(self, pair: LiePair, conn: Connection, X: VerticalVectorField, splitting: SplittingOffset | None = None):
        self.pair = pair
        self.connection = conn
        self.X = X
        self.splitting = splitting if splitting else None

    @property
    def order(self) -> int:
        return self.X.order

    @property
    def contraction(self) -> Contraction:
        return contraction_for(self.pair, self.splitting)

    def d(self, f: FormalFunction) -> FormalFunction:
        return covariant_derivative_functions(self.pair, self.connection, f)

    def without_koszul(self, f: FormalFunction) -> FormalFunction:
        """``(k + Q)(f) = d^nabla f + X f``."""
        return self.d(f) + self.X.apply(f)

    def apply(self, f: FormalFunction) -> FormalFunction:
        return self.without_koszul(f) - koszul(f)

    __call__ = apply

    def eta_image(self, j: int) -> FormalFunction:
        return self.apply(FormalFunction.eta(self.pair.shape, self.order, j))

    def square_residuals(self, functions=None) -> List[tuple]:
        """Nonzero ``Q(Q f)`` (projected to ``|J| <= N-1``) over basis monomials of degree ``<= N-1``."""
        n1 = self.order - 1
        if functions is None:
            functions = basis_functions(self.pair.shape, self.order, n1)
        bad = []
        for f in functions:
            res = self.apply(self.apply(f)).project(n1)
            if res:
                bad.append((f, res))
        return bad

    def verify_Q_squared(self, functions=None) -> bool:
        return not self.square_residuals(functions)


def assemble_Q(p: LiePair, conn: Connection, X: VerticalVectorField | None = None, order: int | None = None,
               splitting: SplittingOffset | None = None) -> FedosovField:
    if X is None:
        if order is None:
            raise ValueError("either X or order is required")
        X = fedosov_X(p, conn, order, splitting)
    return FedosovField(p, conn, X, splitting)


def delta_Q(q1: FedosovField, q2: FedosovField) -> VerticalVectorField:
    """``Q1 - Q2 = d^{nabla1} - d^{nabla2} + X1 - X2`` as a degree-one vertical field."""
    p, order = q1.pair, q1.order
    comps = []
    for j in range(p.r):
        diff = dual_connection_eta(p, q1.connection, order, j) - dual_connection_eta(p, q2.connection, order, j)
        comps.append(diff + q1.X.components[j] - q2.X.components[j])
    return VerticalVectorField(comps, 1)
