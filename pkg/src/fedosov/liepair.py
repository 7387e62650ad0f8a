"""Lie pairs, splittings and L-connections in an adapted frame.

The L-frame is ``(bt_0..bt_{r-1}, a_0..a_{r'-1})`` where ``bt_i = iota_B(b_i)`` for the
reference splitting and ``a_alpha`` spans A.  Frame index ``u < r`` is a B-letter,
``u >= r`` the A-letter ``a_{u-r}``.  The coframe ``xi^u`` is dual to it, so the
generator ``xi^{r+alpha}`` plays the role of ``zeta^alpha``.

A second splitting is ``iota_B^(2)(b_i) = bt_i + sum_alpha s[i, alpha] a_alpha``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from gmpy2 import mpq
from itertools import combinations
from pathlib import Path
from typing import Dict, List, Tuple

from .coefficients import Coefficient, Poly, coeff_from_json, coeff_to_json, parse_rational
from .functions import FormalFunction, Shape, _accumulate, apply_derivation, ff_mul, merge_ext


class PresentationError(ValueError):
    """Malformed or inconsistent presentation data."""


class TorsionError(ValueError):
    """A connection that must be torsion-free is not."""

    def __init__(self, message, torsion=None):
        super().__init__(message)
        self.torsion = torsion


def _clean(d: Dict) -> Dict:
    return {k: v for k, v in d.items() if v}


@dataclass
class Connection:
    """Christoffel data ``nabla_{frame_u} b_i = sum_j gamma[(u, i)][j] b_j``."""

    gamma: Dict[Tuple[int, int], Dict[int, Coefficient]] = field(default_factory=dict)

    def coeff(self, u: int, i: int, j: int, zero):
        return self.gamma.get((u, i), {}).get(j, zero)

    def column(self, u: int, i: int) -> Dict[int, Coefficient]:
        return self.gamma.get((u, i), {})


@dataclass
class SplittingOffset:
    """``s[(i, alpha)]`` with ``iota_B^(2)(b_i) = bt_i + s_i^alpha a_alpha``."""

    s: Dict[Tuple[int, int], Coefficient] = field(default_factory=dict)
    # images of exterior monomials under the coframe change, filled lazily
    _ext_cache: Dict = field(default_factory=dict, repr=False, compare=False)
    _negated: "SplittingOffset | None" = field(default=None, repr=False, compare=False)

    def negated(self) -> "SplittingOffset":
        if self._negated is None:
            self._negated = SplittingOffset({k: -v for k, v in self.s.items()})
            self._negated._negated = self
        return self._negated

    def __bool__(self):
        return any(bool(v) for v in self.s.values())


@dataclass
class LiePair:
    """A Lie pair presented by structure functions in an adapted frame."""

    shape: Shape
    bracket: Dict[Tuple[int, int], Dict[int, Coefficient]]
    anchor: Dict[int, Dict[int, Coefficient]] = field(default_factory=dict)
    name: str = ""

    @property
    def r(self) -> int:
        return self.shape.rank_b

    @property
    def ra(self) -> int:
        return self.shape.rank_a

    @property
    def rank(self) -> int:
        return self.shape.rank_l

    @property
    def mode(self) -> str:
        return "POINT" if self.shape.chart_dim is None else "CHART"

    def zero(self) -> Coefficient:
        return self.shape.zero()

    def c(self, u: int, v: int) -> Dict[int, Coefficient]:
        return self.bracket.get((u, v), {})

    def rho(self, u: int, f: Coefficient) -> Coefficient:
        """Anchor action ``rho(frame_u)(f)``; identically zero over a point."""
        if not isinstance(f, Poly):
            return mpq(0)
        out = Poly(f.n)
        for mu, a in self.anchor.get(u, {}).items():
            if a:
                out = out + a * f.partial(mu)
        return out

    def projection_b(self, v: int) -> Dict[int, Coefficient]:
        """Components of ``p_B(frame_v)`` in the b-basis."""
        return {v: self.shape.coeff(1)} if v < self.r else {}

    def one_form_basis(self, order: int):
        return [FormalFunction.xi(self.shape, order, u) for u in range(self.rank)]


# ---------------------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    issues: List[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def add(self, kind: str, frames, detail: str = ""):
        self.issues.append({"check": kind, "frames": list(frames), "detail": detail})


def _bracket_sum(p: LiePair, u: int, v: int, w: int) -> Dict[int, Coefficient]:
    """Components of ``[u, [v, w]]`` including anchor derivatives of structure functions."""
    out: Dict[int, Coefficient] = {}
    for z, czw in p.c(v, w).items():
        for y, cy in p.c(u, z).items():
            out[y] = out.get(y, p.zero()) + czw * cy
    for y, cy in p.c(v, w).items():
        d = p.rho(u, cy)
        if d:
            out[y] = out.get(y, p.zero()) + d
    return out


def validate(p: LiePair) -> ValidationReport:
    """Check antisymmetry, Jacobi, A-closure and anchor compatibility."""
    rep = ValidationReport()
    n = p.rank
    zero = p.zero()
    for u in range(n):
        for v in range(n):
            cu, cv = p.c(u, v), p.c(v, u)
            for w in set(cu) | set(cv):
                if cu.get(w, zero) + cv.get(w, zero):
                    rep.add("antisymmetry", (u, v, w), "c_uv^w != -c_vu^w")
    for u, v, w in combinations(range(n), 3):
        tot: Dict[int, Coefficient] = {}
        for a, b, c in ((u, v, w), (v, w, u), (w, u, v)):
            for y, val in _bracket_sum(p, a, b, c).items():
                tot[y] = tot.get(y, zero) + val
        if any(bool(x) for x in tot.values()):
            rep.add("jacobi", (u, v, w), "cyclic sum of [u,[v,w]] is nonzero")
    for a in range(p.r, n):
        for b in range(p.r, n):
            for w, val in p.c(a, b).items():
                if w < p.r and val:
                    rep.add("a_closure", (a, b, w), "[a, a'] has a B-component")
    if p.shape.chart_dim is not None:
        for u in range(n):
            for v in range(n):
                for mu in range(p.shape.chart_dim):
                    lhs = zero
                    for w, cw in p.c(u, v).items():
                        lhs = lhs + cw * p.anchor.get(w, {}).get(mu, zero)
                    rhs = p.rho(u, p.anchor.get(v, {}).get(mu, zero)) - p.rho(v, p.anchor.get(u, {}).get(mu, zero))
                    if lhs != rhs:
                        rep.add("anchor", (u, v, mu), "rho([u,v]) != [rho(u), rho(v)]")
    return rep


# ---------------------------------------------------------------------------------------
# differentials


def _d_xi(p: LiePair, order: int, w: int) -> FormalFunction:
    out = {}
    for u in range(p.rank):
        for v in range(u + 1, p.rank):
            c = p.c(u, v).get(w)
            if c:
                out[((u, v), (0,) * p.r)] = -c
    return FormalFunction(p.shape, order, out)


def _d_coeff(p: LiePair, order: int, c: Coefficient) -> FormalFunction:
    out = {}
    for u in range(p.rank):
        d = p.rho(u, c)
        if d:
            out[((u,), (0,) * p.r)] = d
    return FormalFunction(p.shape, order, out)


def cE_differential(p: LiePair, f: FormalFunction) -> FormalFunction:
    """Chevalley-Eilenberg differential on the exterior factor; eta variables are constants."""
    on_coeff = (lambda c: _d_coeff(p, f.order, c)) if p.shape.chart_dim is not None else None
    return apply_derivation(f, 1, on_coeff=on_coeff, on_xi=lambda w: _d_xi(p, f.order, w))


def dual_connection_eta(p: LiePair, conn: Connection, order: int, j: int) -> FormalFunction:
    """``sum_u xi^u nabla_u(eta^j)`` for the dual connection ``nabla_u eta^j = -Gamma_{u,i}^j eta^i``."""
    out = {}
    for u in range(p.rank):
        for i in range(p.r):
            g = conn.column(u, i).get(j)
            if g:
                sym = [0] * p.r
                sym[i] = 1
                out[((u,), tuple(sym))] = -g
    return FormalFunction(p.shape, order, out)


def covariant_derivative_functions(p: LiePair, conn: Connection, f: FormalFunction) -> FormalFunction:
    """``d_L^nabla`` on the function algebra: ``d_L`` plus the dual connection on the eta factor."""
    on_coeff = (lambda c: _d_coeff(p, f.order, c)) if p.shape.chart_dim is not None else None
    return apply_derivation(
        f,
        1,
        on_coeff=on_coeff,
        on_xi=lambda w: _d_xi(p, f.order, w),
        on_eta=lambda j: dual_connection_eta(p, conn, f.order, j),
    )


class BForm:
    """A B-valued function: ``sum_j components[j] (x) b_j``."""

    __slots__ = ("components",)

    def __init__(self, components):
        self.components = tuple(components)

    @classmethod
    def zero(cls, shape: Shape, order: int) -> "BForm":
        return cls(FormalFunction.zero(shape, order) for _ in range(shape.rank_b))

    @classmethod
    def basis(cls, shape: Shape, order: int, i: int) -> "BForm":
        comps = [FormalFunction.zero(shape, order) for _ in range(shape.rank_b)]
        comps[i] = FormalFunction.constant(shape, order)
        return cls(comps)

    @property
    def shape(self):
        return self.components[0].shape

    @property
    def order(self):
        return self.components[0].order

    def __add__(self, other):
        return BForm(a + b for a, b in zip(self.components, other.components))

    def __sub__(self, other):
        return BForm(a - b for a, b in zip(self.components, other.components))

    def __neg__(self):
        return BForm(-a for a in self.components)

    def scale(self, c):
        return BForm(a.scale(c) for a in self.components)

    def __eq__(self, other):
        if not isinstance(other, BForm):
            return NotImplemented
        return self.components == other.components

    def is_zero(self) -> bool:
        return all(a.is_zero() for a in self.components)

    def __bool__(self):
        return not self.is_zero()

    def __repr__(self):
        return "BForm(" + ", ".join(f"b{j}: {c!r}" for j, c in enumerate(self.components) if c) + ")"

    def to_records(self) -> list:
        out = []
        for j, comp in enumerate(self.components):
            for rec in comp.to_records():
                rec["b"] = j
                out.append(rec)
        return out


def covariant_derivative(p: LiePair, conn: Connection, omega: BForm, act_on_eta: bool = False) -> BForm:
    """``d_L^nabla(w (x) b_i) = d_L w (x) b_i + sum_u (xi^u ^ w) (x) nabla_u b_i``.

    With ``act_on_eta`` the eta factor is differentiated by the dual connection as well.
    """
    shape, order = omega.shape, omega.order
    d = (lambda f: covariant_derivative_functions(p, conn, f)) if act_on_eta else (lambda f: cE_differential(p, f))
    comps = [d(f) for f in omega.components]
    for i, w in enumerate(omega.components):
        if not w:
            continue
        for u in range(p.rank):
            col = conn.column(u, i)
            if not col:
                continue
            xw = ff_mul(FormalFunction.xi(shape, order, u), w)
            for j, g in col.items():
                if g:
                    comps[j] = comps[j] + xw.scale(g)
    return BForm(comps)


def torsion(p: LiePair, conn: Connection, order: int = 0) -> BForm:
    """``T(u, v) = nabla_u p(v) - nabla_v p(u) - p([u, v])`` as a B-valued 2-form."""
    zero = p.zero()
    comps = [dict() for _ in range(p.r)]
    for u in range(p.rank):
        for v in range(u + 1, p.rank):
            t = {j: zero for j in range(p.r)}
            for i, pv in p.projection_b(v).items():
                for j, g in conn.column(u, i).items():
                    t[j] = t[j] + pv * g
            for i, pu in p.projection_b(u).items():
                for j, g in conn.column(v, i).items():
                    t[j] = t[j] - pu * g
            for w, cw in p.c(u, v).items():
                if w < p.r:
                    t[w] = t[w] - cw
            for j, val in t.items():
                if val:
                    comps[j][((u, v), (0,) * p.r)] = val
    return BForm(FormalFunction(p.shape, order, c) for c in comps)


def is_torsion_free(p: LiePair, conn: Connection) -> bool:
    return torsion(p, conn).is_zero()


def curvature_tensor(p: LiePair, conn: Connection) -> Dict[Tuple[int, int], Dict[Tuple[int, int], Coefficient]]:
    """``R(u, v) b_i = sum_j R[(u, v)][(i, j)] b_j`` for ``u < v``, from the bracket expansion."""
    zero = p.zero()
    out = {}

    def nabla_nabla(u, v, i):
        res: Dict[int, Coefficient] = {}
        for k, g in conn.column(v, i).items():
            d = p.rho(u, g)
            if d:
                res[k] = res.get(k, zero) + d
            for j, h in conn.column(u, k).items():
                res[j] = res.get(j, zero) + g * h
        return res

    for u in range(p.rank):
        for v in range(u + 1, p.rank):
            entry = {}
            for i in range(p.r):
                tot: Dict[int, Coefficient] = {}
                for j, val in nabla_nabla(u, v, i).items():
                    tot[j] = tot.get(j, zero) + val
                for j, val in nabla_nabla(v, u, i).items():
                    tot[j] = tot.get(j, zero) - val
                for w, cw in p.c(u, v).items():
                    for j, g in conn.column(w, i).items():
                        tot[j] = tot.get(j, zero) - cw * g
                for j, val in tot.items():
                    if val:
                        entry[(i, j)] = val
            if entry:
                out[(u, v)] = entry
    return out


def curvature(p: LiePair, conn: Connection, order: int):
    """Curvature as the vertical vector field ``(d_L^nabla)^2`` on functions.

    Component ``j`` is ``(d^nabla)^2(eta^j) = -sum_{u<v,i} R(u,v)^j_i xi^u xi^v eta^i``
    (the dual action of the endomorphism-valued curvature on ``B^v``).
    """
    from .fedosov import VerticalVectorField

    comps = [dict() for _ in range(p.r)]
    for (u, v), entry in curvature_tensor(p, conn).items():
        for (i, j), val in entry.items():
            sym = [0] * p.r
            sym[i] = 1
            key = ((u, v), tuple(sym))
            comps[j][key] = comps[j].get(key, p.zero()) - val
    return VerticalVectorField([FormalFunction(p.shape, order, c) for c in comps], degree=2)


def bott_check(p: LiePair, conn: Connection) -> List[dict]:
    """Return the frame pairs where ``nabla_a p(l) != p([a, l])``; empty means the check passes."""
    t = torsion(p, conn)
    if not t.is_zero():
        raise TorsionError("bott_check requires a torsion-free connection", t)
    zero = p.zero()
    bad = []
    for a in range(p.r, p.rank):
        for v in range(p.rank):
            lhs: Dict[int, Coefficient] = {}
            for i, pv in p.projection_b(v).items():
                for j, g in conn.column(a, i).items():
                    lhs[j] = lhs.get(j, zero) + pv * g
            rhs = {w: c for w, c in p.c(a, v).items() if w < p.r}
            for j in range(p.r):
                if lhs.get(j, zero) != rhs.get(j, zero):
                    bad.append({"a": a, "l": v, "b": j})
    return bad


def symmetrize(p: LiePair, conn: Connection) -> Connection:
    """Torsion-free connection built from ``conn``: Bott along A, symmetrized plus half-bracket on B."""
    zero = p.zero()
    gamma: Dict[Tuple[int, int], Dict[int, Coefficient]] = {}
    for a in range(p.r, p.rank):
        for i in range(p.r):
            col = {w: c for w, c in p.c(a, i).items() if w < p.r and c}
            if col:
                gamma[(a, i)] = col
    half = mpq(1, 2)
    for u in range(p.r):
        for i in range(p.r):
            col: Dict[int, Coefficient] = {}
            for j in range(p.r):
                val = (conn.coeff(u, i, j, zero) + conn.coeff(i, u, j, zero) + p.c(u, i).get(j, zero)) * half
                if val:
                    col[j] = val
            if col:
                gamma[(u, i)] = col
    out = Connection(gamma)
    if not is_torsion_free(p, out):
        raise TorsionError("symmetrized connection still has torsion", torsion(p, out))
    return out


def _ext_image(p: LiePair, s: SplittingOffset, ext: tuple, one):
    """Image of ``xi^ext`` under the coframe change.

    Returns ``None`` when the monomial is fixed, else a list of ``(ext', coeff, unit)`` with
    ``unit`` in ``{1, -1}`` when the coefficient is a unit and ``0`` otherwise.
    """
    key = (p.r, p.ra, ext)
    if key in s._ext_cache:
        return s._ext_cache[key]
    out: Dict[tuple, Coefficient] = {(): one}
    for u in ext:
        gen = {(u,): one}
        if u >= p.r:
            for i in range(p.r):
                val = s.s.get((i, u - p.r))
                if val:
                    gen[(i,)] = -val
        nxt: Dict[tuple, Coefficient] = {}
        for e1, c1 in out.items():
            for e2, c2 in gen.items():
                m = merge_ext(e1, e2)
                if m is None:
                    continue
                sign, e = m
                val = c1 * c2 if sign > 0 else -(c1 * c2)
                nxt[e] = nxt[e] + val if e in nxt else val
        out = {e: c for e, c in nxt.items() if c}
    if len(out) == 1 and out.get(ext) == one:
        res = None
    else:
        res = [(e, c, 1 if c == one else -1 if c == -one else 0) for e, c in out.items()]
    s._ext_cache[key] = res
    return res


def frame_change(p: LiePair, s: SplittingOffset, f: FormalFunction) -> FormalFunction:
    """Rewrite a function given in the splitting-2 coframe into the reference coframe.

    ``xi^i`` is unchanged and ``zeta^alpha_(2) = zeta^alpha - sum_i s_i^alpha xi^i``.
    """
    if not s:
        return f
    one = f.shape.coeff(1)
    out: Dict = {}
    for (i, j), c in f.terms.items():
        img = _ext_image(p, s, i, one)
        if img is None:
            _accumulate(out, (i, j), c)
            continue
        for e, ce, unit in img:
            _accumulate(out, (e, j), c if unit == 1 else -c if unit == -1 else c * ce)
    return FormalFunction._raw(f.shape, f.order, out)


# ---------------------------------------------------------------------------------------
# presentation files


@dataclass
class Presentation:
    """Everything a run needs: the pair, both splittings/connections, and the order."""

    pair: LiePair
    splitting2: SplittingOffset
    connection1: Connection
    connection2: Connection
    order: int = 4
    base_point: tuple | None = None

    def connection(self, which: int) -> Connection:
        return self.connection1 if which == 1 else self.connection2

    def splitting(self, which: int) -> SplittingOffset:
        return SplittingOffset() if which == 1 else self.splitting2


def _entries(obj, width: int, n, what: str):
    out = []
    for row in obj or []:
        if len(row) != width + 1:
            raise PresentationError(f"{what} entry {row!r} should have {width} indices and a value")
        idx = tuple(int(k) for k in row[:width])
        out.append((idx, coeff_from_json(row[width], n)))
    return out


def presentation_from_dict(data: dict) -> Presentation:
    try:
        mode = data.get("mode", "POINT").upper()
        ra, r = int(data["rank_A"]), int(data["rank_B"])
        n = int(data["chart_dim"]) if mode == "CHART" else None
    except (KeyError, TypeError, ValueError) as exc:
        raise PresentationError(f"bad header: {exc}") from exc
    if mode not in ("POINT", "CHART"):
        raise PresentationError(f"unknown mode {mode!r}")
    shape = Shape(r, ra, n)
    rank = r + ra
    bracket: Dict[Tuple[int, int], Dict[int, Coefficient]] = {}
    given = set()
    for (u, v, w), val in _entries(data.get("bracket"), 3, n, "bracket"):
        for x in (u, v, w):
            if not 0 <= x < rank:
                raise PresentationError(f"bracket index {x} out of range")
        bracket.setdefault((u, v), {})
        bracket[(u, v)][w] = bracket[(u, v)].get(w, shape.zero()) + val
        given.add((u, v, w))
    for (u, v, w) in list(given):
        if (v, u, w) not in given:
            bracket.setdefault((v, u), {})[w] = -bracket[(u, v)][w]
    bracket = {k: _clean(v) for k, v in bracket.items() if _clean(v)}
    anchor: Dict[int, Dict[int, Coefficient]] = {}
    if n is not None:
        for (u, mu), val in _entries(data.get("anchor"), 2, n, "anchor"):
            anchor.setdefault(u, {})[mu] = val
    pair = LiePair(shape, bracket, anchor, data.get("name", ""))

    def conn(key):
        gamma: Dict[Tuple[int, int], Dict[int, Coefficient]] = {}
        for (u, i, j), val in _entries(data.get(key), 3, n, key):
            gamma.setdefault((u, i), {})[j] = val
        return Connection({k: _clean(v) for k, v in gamma.items() if _clean(v)})

    split = SplittingOffset(
        {(i, a): val for (i, a), val in _entries(data.get("splitting2_offset"), 2, n, "splitting2_offset") if val}
    )
    point = data.get("base_point")
    return Presentation(
        pair=pair,
        splitting2=split,
        connection1=conn("connection1"),
        connection2=conn("connection2"),
        order=int(data.get("truncation_order", 4)),
        base_point=tuple(parse_rational(x) for x in point) if point is not None else None,
    )


def load_presentation(path) -> Presentation:
    with open(Path(path)) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise PresentationError(f"{path}: {exc}") from exc
    return presentation_from_dict(data)


def presentation_to_dict(pres: Presentation) -> dict:
    p = pres.pair

    def rows3(d):
        return [[a, b, c, coeff_to_json(v)] for (a, b), col in sorted(d.items()) for c, v in sorted(col.items())]

    out = {
        "name": p.name,
        "mode": p.mode,
        "rank_A": p.ra,
        "rank_B": p.r,
        "chart_dim": p.shape.chart_dim,
        "bracket": [row for row in rows3(p.bracket) if row[0] < row[1]],
        "anchor": [[u, mu, coeff_to_json(v)] for u, col in sorted(p.anchor.items()) for mu, v in sorted(col.items())],
        "splitting2_offset": [[i, a, coeff_to_json(v)] for (i, a), v in sorted(pres.splitting2.s.items())],
        "connection1": rows3(pres.connection1.gamma),
        "connection2": rows3(pres.connection2.gamma),
        "truncation_order": pres.order,
    }
    if pres.base_point is not None:
        out["base_point"] = [coeff_to_json(x) for x in pres.base_point]
    return out
