"""Normal-ordered U(L), the quotient by the left ideal generated by A, PBW and its consequences.

Words are non-decreasing tuples of frame letters.  Since B-letters carry the smaller
indices, every A-letter of a normal word sits to the right of every B-letter, and the
class of a normal word in ``U(L)/U(L)Gamma(A)`` vanishes exactly when it contains an
A-letter.  Coefficients of an element always stand on the left of its words.
"""
from __future__ import annotations

from gmpy2 import mpq
from math import comb
from typing import Dict, Iterable, Tuple

from .coefficients import Coefficient, Poly, coeff_to_json
from .functions import (
    FormalFunction,
    PolySection,
    Shape,
    _accumulate,
    basis_functions,
    ff_mul,
    jfact,
    sym_monomials,
)
from .liepair import Connection, LiePair, SplittingOffset, TorsionError, cE_differential, torsion

Word = Tuple[int, ...]


class TruncationError(ValueError):
    """An operation would need terms beyond the truncation order."""


def word_to_sym(word: Word, r: int):
    j = [0] * r
    for u in word:
        j[u] += 1
    return tuple(j)


def sym_to_word(j) -> Word:
    return tuple(u for u, k in enumerate(j) for _ in range(k))


class EnvelopingElement:
    """Finite sum of ``coefficient * normal word``; ``quotient`` marks a class modulo ``U(L)Gamma(A)``."""

    __slots__ = ("shape", "terms", "quotient")

    def __init__(self, shape: Shape, terms: Dict[Word, Coefficient] | None = None, quotient: bool = False):
        self.shape = shape
        self.quotient = quotient
        terms = {} if terms is None else {w: c for w, c in terms.items() if c}
        if quotient:
            terms = {w: c for w, c in terms.items() if not w or w[-1] < shape.rank_b}
        self.terms = terms

    @classmethod
    def one(cls, shape: Shape, quotient: bool = False):
        return cls(shape, {(): shape.coeff(1)}, quotient)

    def _like(self, terms):
        return EnvelopingElement(self.shape, terms, self.quotient)

    def __add__(self, other):
        out = dict(self.terms)
        for w, c in other.terms.items():
            _accumulate(out, w, c)
        return self._like(out)

    def __neg__(self):
        return self._like({w: -c for w, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c):
        if isinstance(c, int):
            c = mpq(c)
        return self._like({w: v * c for w, v in self.terms.items()}) if c else self._like({})

    def __eq__(self, other):
        if not isinstance(other, EnvelopingElement):
            return NotImplemented
        return self.terms == other.terms

    def __bool__(self):
        return bool(self.terms)

    def length(self) -> int:
        return max((len(w) for w in self.terms), default=-1)

    def __repr__(self):
        if not self.terms:
            return "0"
        r = self.shape.rank_b

        def name(u):
            return f"b{u}" if u < r else f"a{u - r}"

        return " + ".join(
            f"({c})" + ("*" + "*".join(name(u) for u in w) if w else "")
            for w, c in sorted(self.terms.items(), key=lambda t: (-len(t[0]), t[0]))
        )

    def to_records(self) -> list:
        r = self.shape.rank_b
        out = []
        for w, c in sorted(self.terms.items()):
            out.append(
                {
                    "coeff": coeff_to_json(c),
                    "b_word": [u for u in w if u < r],
                    "a_word": [u - r for u in w if u >= r],
                }
            )
        return out


class Enveloping:
    """Multiplication in ``U(L)`` for one presentation, with a write-once memo table."""

    def __init__(self, pair: LiePair):
        self.pair = pair
        self._memo: Dict[Tuple[int, Word, bool], Dict[Word, Coefficient]] = {}

    def _scale_add(self, out: Dict, terms: Dict, c):
        for w, v in terms.items():
            _accumulate(out, w, c * v)

    def letter_word(self, u: int, w: Word, quotient: bool) -> Dict[Word, Coefficient]:
        """Normal form of ``u * w`` for a normal word ``w``."""
        key = (u, w, quotient)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        r = self.pair.r
        if not w or u <= w[0]:
            nw = (u,) + w
            res = {} if quotient and nw[-1] >= r else {nw: self.pair.shape.coeff(1)}
        else:
            w0, rest = w[0], w[1:]
            res: Dict[Word, Coefficient] = {}
            inner = self.letter_word(u, rest, quotient)
            self._scale_add(res, self.letter_elem(w0, inner, quotient), 1)
            for v, c in self.pair.c(u, w0).items():
                if c:
                    self._scale_add(res, self.letter_word(v, rest, quotient), c)
        self._memo[key] = res
        return res

    def letter_elem(self, u: int, terms: Dict[Word, Coefficient], quotient: bool) -> Dict[Word, Coefficient]:
        """``u * (sum f_w w) = sum rho_u(f_w) w + f_w (u * w)``."""
        out: Dict[Word, Coefficient] = {}
        for w, f in terms.items():
            d = self.pair.rho(u, f)
            if d:
                _accumulate(out, w, d)
            self._scale_add(out, self.letter_word(u, w, quotient), f)
        return out

    def left_letter(self, u: int, x: EnvelopingElement) -> EnvelopingElement:
        return EnvelopingElement(self.pair.shape, self.letter_elem(u, x.terms, x.quotient), x.quotient)

    def multiply(self, x: EnvelopingElement, y: EnvelopingElement) -> EnvelopingElement:
        out: Dict[Word, Coefficient] = {}
        for w, f in x.terms.items():
            cur = y.terms
            for u in reversed(w):
                cur = self.letter_elem(u, cur, y.quotient)
            self._scale_add(out, cur, f)
        return EnvelopingElement(self.pair.shape, out, y.quotient)


def normal_form(p: LiePair, word: Iterable, quotient: bool = False, algebra: Enveloping | None = None) -> EnvelopingElement:
    """Normal form of a product of frame letters (ints) and coefficients, read left to right."""
    alg = algebra or Enveloping(p)
    cur: Dict[Word, Coefficient] = {(): p.shape.coeff(1)}
    for item in reversed(list(word)):
        if isinstance(item, int) and not isinstance(item, bool):
            if not 0 <= item < p.rank:
                raise ValueError(f"letter {item} outside the frame")
            cur = alg.letter_elem(item, cur, quotient)
        else:
            c = p.shape.coeff(item) if not isinstance(item, Poly) else item
            cur = {w: c * v for w, v in cur.items() if c * v}
    return EnvelopingElement(p.shape, cur, quotient)


def quotient_project(u: EnvelopingElement) -> EnvelopingElement:
    """Drop every normal word that ends with an A-letter."""
    return EnvelopingElement(u.shape, u.terms, quotient=True)


# ---------------------------------------------------------------------------------------
# PBW


class PBW:
    """``pbw: Gamma(SB) -> U(L)/U(L)Gamma(A)`` for a splitting and a torsion-free connection.

    Values on the basis ``d_J`` are memoized up to degree ``order``.
    """

    def __init__(self, pair: LiePair, conn: Connection, order: int, splitting: SplittingOffset | None = None,
                 algebra: Enveloping | None = None):
        t = torsion(pair, conn)
        if not t.is_zero():
            raise TorsionError("pbw needs a torsion-free connection", t)
        self.pair = pair
        self.connection = conn
        self.order = order
        self.splitting = splitting if splitting else SplittingOffset()
        self.algebra = algebra or Enveloping(pair)
        self._basis: Dict[tuple, EnvelopingElement] = {}
        self._iota = [self._iota_terms(i) for i in range(pair.r)]

    @property
    def shape(self) -> Shape:
        return self.pair.shape

    def _iota_terms(self, i: int) -> Dict[int, Coefficient]:
        """``iota_B(b_i)`` in the frame, as ``{letter: coefficient}``."""
        out = {i: self.shape.coeff(1)}
        for alpha in range(self.pair.ra):
            s = self.splitting.s.get((i, alpha))
            if s:
                out[self.pair.r + alpha] = s
        return out

    def iota_times(self, i: int, x: EnvelopingElement) -> EnvelopingElement:
        out = EnvelopingElement(self.shape, {}, True)
        for u, c in self._iota[i].items():
            out = out + self.algebra.left_letter(u, x).scale(c)
        return out

    def nabla_basis(self, u_terms: Dict[int, Coefficient], j) -> PolySection:
        """``nabla_l d_J`` for ``l = sum u_terms[u] frame_u``, acting as a derivation of ``SB``."""
        r = self.pair.r
        out: Dict[tuple, Coefficient] = {}
        for u, cu in u_terms.items():
            for l_idx, k in enumerate(j):
                if not k:
                    continue
                for m, g in self.connection.column(u, l_idx).items():
                    j2 = list(j)
                    j2[l_idx] -= 1
                    j2[m] += 1
                    _accumulate(out, tuple(j2), cu * g * k)
        return PolySection(r, self.shape.chart_dim, out)

    def basis(self, j) -> EnvelopingElement:
        j = tuple(j)
        hit = self._basis.get(j)
        if hit is not None:
            return hit
        n = sum(j)
        if n > self.order:
            raise TruncationError(f"pbw requested in degree {n} > {self.order}")
        if n == 0:
            res = EnvelopingElement.one(self.shape, True)
        else:
            res = EnvelopingElement(self.shape, {}, True)
            for i, ji in enumerate(j):
                if not ji:
                    continue
                j_less = list(j)
                j_less[i] -= 1
                j_less = tuple(j_less)
                term = self.iota_times(i, self.basis(j_less)) - self(self.nabla_basis(self._iota[i], j_less))
                res = res + term.scale(ji)
            res = res.scale(mpq(1, n))
        self._basis[j] = res
        return res

    def __call__(self, s: PolySection) -> EnvelopingElement:
        out = EnvelopingElement(self.shape, {}, True)
        for j, f in s.terms.items():
            out = out + self.basis(j).scale(f)
        return out

    pbw = __call__

    def inverse(self, x: EnvelopingElement) -> PolySection:
        """Unitriangular back-substitution on word length."""
        r = self.pair.r
        rest = quotient_project(x)
        out: Dict[tuple, Coefficient] = {}
        while rest:
            w = max(rest.terms, key=lambda t: (len(t), t))
            if len(w) > self.order:
                raise TruncationError(f"word of length {len(w)} exceeds order {self.order}")
            f = rest.terms[w]
            j = word_to_sym(w, r)
            _accumulate(out, j, f)
            rest = rest - self.basis(j).scale(f)
        return PolySection(r, self.shape.chart_dim, out)

    def nabla_lightning(self, u: int, s: PolySection) -> PolySection:
        """``pbw^{-1}(frame_u * pbw(s))``."""
        if s.degree() > self.order - 1:
            raise TruncationError(f"section of degree {s.degree()} needs order >= {s.degree() + 1}")
        return self.inverse(self.algebra.left_letter(u, self(s)))

    def kapranov_action(self, a: int, s: PolySection) -> PolySection:
        if a < self.pair.r:
            raise ValueError("the Kapranov action is defined for A-letters only")
        return self.nabla_lightning(a, s)


def pbw(p: LiePair, conn: Connection, s: PolySection, splitting: SplittingOffset | None = None) -> EnvelopingElement:
    return PBW(p, conn, max(s.degree(), 0), splitting)(s)


def pbw_inverse(p: LiePair, conn: Connection, x: EnvelopingElement, splitting: SplittingOffset | None = None) -> PolySection:
    return PBW(p, conn, max(x.length(), 0), splitting).inverse(x)


def nabla_lightning(p: LiePair, conn: Connection, u: int, s: PolySection, splitting: SplittingOffset | None = None) -> PolySection:
    return PBW(p, conn, max(s.degree(), 0) + 1, splitting).nabla_lightning(u, s)


def kapranov_action(p: LiePair, conn: Connection, a: int, s: PolySection, splitting: SplittingOffset | None = None) -> PolySection:
    return PBW(p, conn, max(s.degree(), 0) + 1, splitting).kapranov_action(a, s)


# ---------------------------------------------------------------------------------------
# coalgebra layer


def _sub_multi(j):
    if not j:
        yield ()
        return
    for k in range(j[0] + 1):
        for rest in _sub_multi(j[1:]):
            yield (k,) + rest


def comultiply(x) -> Dict[tuple, Coefficient]:
    """Shuffle coproduct; keys ``(K1, K2)`` are multi-indices (sections) or words (quotient classes)."""
    out: Dict[tuple, Coefficient] = {}
    if isinstance(x, PolySection):
        for j, f in x.terms.items():
            for k in _sub_multi(j):
                m = 1
                for a, b in zip(j, k):
                    m *= comb(a, b)
                _accumulate(out, (k, tuple(a - b for a, b in zip(j, k))), f * m)
        return out
    if isinstance(x, EnvelopingElement):
        r = x.shape.rank_b
        for w, f in x.terms.items():
            j = word_to_sym(w, r) if all(u < r for u in w) else None
            if j is None:
                raise ValueError("comultiply expects quotient classes (B-words only)")
            for k, c in comultiply(PolySection(r, x.shape.chart_dim, {j: f})).items():
                _accumulate(out, (sym_to_word(k[0]), sym_to_word(k[1])), c)
        return out
    raise TypeError(f"cannot comultiply {type(x).__name__}")


def tensor_map(f1, f2, t: Dict[tuple, Coefficient], shape: Shape) -> Dict[tuple, Coefficient]:
    """``(f1 (x) f2)(t)`` for maps sending a basis key to an EnvelopingElement/PolySection; coefficients move freely."""
    out: Dict[tuple, Coefficient] = {}
    for (k1, k2), c in t.items():
        a, b = f1(k1), f2(k2)
        for w1, c1 in a.terms.items():
            for w2, c2 in b.terms.items():
                _accumulate(out, (w1, w2), c * c1 * c2)
    return out


def coalgebra_residual(P: PBW, j) -> Dict[tuple, Coefficient]:
    """``Delta(pbw(d_J)) - (pbw (x) pbw)(Delta d_J)``; empty when the coalgebra law holds."""
    r = P.pair.r
    lhs = comultiply(P.basis(j))
    rhs = tensor_map(P.basis, P.basis, comultiply(PolySection(r, P.shape.chart_dim, {tuple(j): P.shape.coeff(1)})), P.shape)
    for k, c in rhs.items():
        _accumulate(lhs, k, -c)
    return lhs


def coderivation_residual(P: PBW, a: int, j) -> Dict[tuple, Coefficient]:
    """``Delta rho_a(d_J) - (rho_a (x) 1 + 1 (x) rho_a) Delta d_J``."""
    r, n = P.pair.r, P.shape.chart_dim

    def sec(k):
        return PolySection(r, n, {k: P.shape.coeff(1)})

    lhs = comultiply(P.kapranov_action(a, sec(tuple(j))))
    delta = comultiply(sec(tuple(j)))
    rhs = tensor_map(lambda k: P.kapranov_action(a, sec(k)), sec, delta, P.shape)
    for key, c in tensor_map(sec, lambda k: P.kapranov_action(a, sec(k)), delta, P.shape).items():
        _accumulate(rhs, key, c)
    for k, c in rhs.items():
        _accumulate(lhs, k, -c)
    return lhs


def flatness_residual(P: PBW, u: int, v: int, s: PolySection) -> PolySection:
    """``[nabla_u, nabla_v] s - sum_w c_uv^w nabla_w s`` for the lightning connection."""
    lhs = P.nabla_lightning(u, P.nabla_lightning(v, s)) - P.nabla_lightning(v, P.nabla_lightning(u, s))
    for w, c in P.pair.c(u, v).items():
        lhs = lhs - P.nabla_lightning(w, s).map_coefficients(lambda x, c=c: c * x)
    return lhs


# ---------------------------------------------------------------------------------------
# Q versus the lightning covariant derivative


class LightningDual:
    """The dual of ``nabla^lightning`` on ``S^{<=N} B^v``, computed from PBW tables of degree ``N + 1``."""

    def __init__(self, pair: LiePair, conn: Connection, order: int, splitting: SplittingOffset | None = None):
        self.pair = pair
        self.order = order
        self.P = PBW(pair, conn, order + 1, splitting)
        self._cache: Dict[Tuple[int, tuple], FormalFunction] = {}
        self._lightning: Dict[Tuple[int, tuple], PolySection] = {}

    def _nabla_basis(self, u, j):
        key = (u, j)
        if key not in self._lightning:
            r, n = self.pair.r, self.pair.shape.chart_dim
            self._lightning[key] = self.P.nabla_lightning(u, PolySection(r, n, {j: self.pair.shape.coeff(1)}))
        return self._lightning[key]

    def eta(self, u: int, k) -> FormalFunction:
        """``nabla^lightning_u (eta^K) = -sum_J (K!/J!) [nabla_u d_J]_K eta^J``."""
        k = tuple(k)
        key = (u, k)
        if key in self._cache:
            return self._cache[key]
        shape, order = self.pair.shape, self.order
        out = {}
        lo = max(sum(k) - 1, 0)
        kf = jfact(k)
        for d in range(lo, order + 1):
            for j in sym_monomials(self.pair.r, d):
                c = self._nabla_basis(u, j).terms.get(k)
                if c:
                    out[((), j)] = -c * mpq(kf, jfact(j))
        res = FormalFunction(shape, order, out)
        self._cache[key] = res
        return res

    def covariant(self, f: FormalFunction) -> FormalFunction:
        """``d^{nabla-lightning}(w g eta^K) = d_L(w g) eta^K + (-1)^|w| w g sum_u xi^u nabla_u eta^K``."""
        shape, order = f.shape, f.order
        out = FormalFunction.zero(shape, order)
        zero_j = (0,) * self.pair.r
        one = shape.coeff(1)
        for (i, k), c in f.terms.items():
            wg = FormalFunction._raw(shape, order, {(i, zero_j): c})
            etak = FormalFunction._raw(shape, order, {((), k): one})
            out = out + ff_mul(cE_differential(self.pair, wg), etak)
            if any(k):
                conn_part = FormalFunction.zero(shape, order)
                for u in range(self.pair.rank):
                    img = self.eta(u, k)
                    if img:
                        conn_part = conn_part + ff_mul(FormalFunction.xi(shape, order, u), img)
                term = ff_mul(wg, conn_part)
                out = out + (-term if len(i) & 1 else term)
        return out


def verify_Q_equals_dL_lightning(p: LiePair, conn: Connection, order: int, splitting: SplittingOffset | None = None,
                                 Q=None) -> dict:
    """Compare ``Q`` from the Fedosov iteration with ``d^{nabla-lightning}`` on every basis monomial of degree ``<= N``."""
    from .fedosov import assemble_Q

    if Q is None:
        Q = assemble_Q(p, conn, order=order, splitting=splitting)
    dual = LightningDual(p, conn, order, splitting)
    mismatches = []
    count = 0
    for f in basis_functions(p.shape, order):
        count += 1
        diff = Q.apply(f) - dual.covariant(f)
        if diff:
            mismatches.append({"input": f.to_records(), "difference": diff.to_records()})
    return {"checked": count, "mismatches": mismatches, "ok": not mismatches}
