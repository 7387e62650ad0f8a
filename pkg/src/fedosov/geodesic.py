"""Geodesic exponential maps as exact jets, plus a floating-point RK4 sanity layer.

This module never touches the Fedosov or PBW machinery except in
:func:`compare_with_pbw`, which puts the three pipelines side by side.
"""
from __future__ import annotations

from math import factorial
from typing import Dict, Tuple

import numpy as np
import sympy
from gmpy2 import mpq
from sympy import QQ
from sympy.polys.rings import ring
from scipy.optimize import fsolve

from .coefficients import RATIONAL_TYPES, Poly, Rational, coeff_from_json, parse_poly, rational
from .functions import FormalFunction, Shape, jfact, sym_upto

Christoffel = Dict[Tuple[int, int, int], Poly]  # (k, i, j) -> Gamma^k_ij


class GeodesicError(ValueError):
    pass


def _symbols(n: int, name: str):
    return list(sympy.symbols(f"{name}1:{n + 1}"))


def poly_to_sympy(c, xs) -> sympy.Expr:
    if isinstance(c, Poly):
        out = sympy.Integer(0)
        for e, v in c.terms.items():
            term = sympy.Rational(v.numerator, v.denominator)
            for x, k in zip(xs, e):
                term *= x ** k
            out += term
        return out
    c = rational(c)
    return sympy.Rational(int(c.numerator), int(c.denominator))


def christoffel_from_connection(conn, n: int) -> Christoffel:
    """``Gamma^k_ij`` from ``nabla_{d_i} d_j = Gamma_{(i,j)}^k d_k``."""
    out: Christoffel = {}
    for (i, j), col in conn.gamma.items():
        for k, c in col.items():
            out[(k, i, j)] = c if isinstance(c, Poly) else Poly.const(n, c)
    return out


def parse_christoffel(data, n: int) -> Christoffel:
    """Accepts ``{"k,i,j": "poly"}`` (0-based) or, for ``n = 1``, a single polynomial string."""
    if isinstance(data, (str,) + RATIONAL_TYPES):
        if n != 1:
            raise GeodesicError("a bare polynomial only specifies a connection when n = 1")
        return {(0, 0, 0): parse_poly(str(data), 1)}
    out: Christoffel = {}
    for key, val in data.items():
        idx = tuple(int(t) for t in str(key).replace(" ", "").split(","))
        if len(idx) != 3 or not all(0 <= t < n for t in idx):
            raise GeodesicError(f"bad Christoffel index {key!r}")
        out[idx] = parse_poly(val, n) if isinstance(val, str) else coeff_from_json(val, n)
    return out


def check_symmetric(gamma: Christoffel, n: int):
    for (k, i, j), c in gamma.items():
        other = gamma.get((k, j, i), Poly(n))
        if c != other:
            raise GeodesicError(f"Christoffel symbols are not symmetric at k={k}, (i,j)=({i},{j})")


class JetMap:
    """Truncated Taylor expansion ``v -> sum_J coeffs[k][J] v^J`` of a map ``R^n -> R^n``."""

    def __init__(self, n: int, order: int, coeffs: Dict[int, Dict[tuple, Rational]], base=None):
        self.n = n
        self.order = order
        self.coeffs = {k: {j: c for j, c in d.items() if c} for k, d in coeffs.items()}
        self.base = base

    def coefficient(self, k: int, j) -> Rational:
        return self.coeffs.get(k, {}).get(tuple(j), mpq(0))

    def __eq__(self, other):
        return isinstance(other, JetMap) and self.coeffs == other.coeffs

    def evaluate(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        out = np.zeros(self.n)
        for k, d in self.coeffs.items():
            for j, c in d.items():
                out[k] += float(c) * float(np.prod(v ** np.array(j)))
        return out

    def to_json(self) -> dict:
        return {
            str(k): [[list(j), f"{c.numerator}/{c.denominator}" if c.denominator != 1 else str(c.numerator)]
                     for j, c in sorted(d.items())]
            for k, d in sorted(self.coeffs.items())
        }


def _ring(n: int):
    return ring(",".join(f"v{k + 1}" for k in range(n)), QQ)[0]


def _trunc(f, order: int):
    """Drop every term of total degree above ``order``."""
    return f.ring.from_dict({m: c for m, c in f.terms() if sum(m) <= order})


def _substitute(poly: Poly, point, shifts, order: int, cache):
    """``poly(point + shifts)`` truncated at ``order``; ``shifts`` have no constant term."""
    R = shifts[0].ring
    out = R.zero
    for e, c in poly.terms.items():
        term = R(QQ(c.numerator, c.denominator))
        for mu, k in enumerate(e):
            if not k:
                continue
            key = (mu, k)
            if key not in cache:
                base = shifts[mu] + QQ(point[mu].numerator, point[mu].denominator)
                acc = R.one
                for _ in range(k):
                    acc = _trunc(acc * base, order)
                cache[key] = acc
            term = _trunc(term * cache[key], order)
        out += term
    return out


def _displacement_series(gamma: Christoffel, p, order: int):
    """Homogeneous pieces ``a_m`` of ``exp_p(v) - p`` for ``1 <= m <= order``.

    The coefficient of ``t^m`` in the geodesic ``x(t)`` is homogeneous of degree ``m``
    in ``v``, so the recursion ``(m+2)(m+1) a_{m+2} = -[Gamma(x) x' x']_m`` can be run
    on polynomials in ``v`` graded by total degree (``t^m`` in ``x'`` carries degree ``m+1``).
    """
    n = len(p)
    R = _ring(n)
    pt = [rational(c) for c in p]
    a = {1: list(R.gens)} if order >= 1 else {}
    for m in range(0, order - 1):
        shifts = [sum((a[l][k] for l in a), R.zero) for k in range(n)]
        xdot = [sum((l * a[l][k] for l in a), R.zero) for k in range(n)]
        cache = {}
        nxt = []
        for k in range(n):
            acc = R.zero
            for (kk, i, j), g in gamma.items():
                if kk == k and g:
                    acc += _substitute(g, pt, shifts, m, cache) * _trunc(xdot[i] * xdot[j], m + 2)
            piece = R.from_dict({mon: c for mon, c in acc.terms() if sum(mon) == m + 2})
            nxt.append(piece * QQ(-1, (m + 2) * (m + 1)))
        a[m + 2] = nxt
    return [sum((a[l][k] for l in a), R.zero) for k in range(n)], R


def _to_jet(polys, order, base=None) -> JetMap:
    coeffs = {}
    for k, f in enumerate(polys):
        coeffs[k] = {tuple(int(t) for t in m): mpq(int(c.numerator), int(c.denominator))
                     for m, c in f.terms() if sum(m) <= order}
    return JetMap(len(polys), order, coeffs, base)


def geodesic_jet(gamma: Christoffel, p, order: int) -> JetMap:
    """Jet of ``v -> exp_p(v)`` from the coefficientwise solution of the geodesic equation, at ``t = 1``.

    The constant term ``p`` is stored under the zero multi-index.
    """
    n = len(p)
    check_symmetric(gamma, n)
    disp, R = _displacement_series(gamma, p, order)
    polys = [disp[k] + QQ(int(rational(p[k]).numerator), int(rational(p[k]).denominator)) for k in range(n)]
    return _to_jet(polys, order, base=tuple(rational(c) for c in p))


def _compose(f, subs, order):
    """``f(subs)`` truncated at ``order`` for ``subs`` without constant terms."""
    R = f.ring
    out = R.zero
    powers = {}
    for mon, c in f.terms():
        term = R(c)
        for k, e in enumerate(mon):
            if e:
                if (k, e) not in powers:
                    acc = R.one
                    for _ in range(e):
                        acc = _trunc(acc * subs[k], order)
                    powers[(k, e)] = acc
                term = _trunc(term * powers[(k, e)], order)
        out += term
    return out


def transition_jet(gamma1: Christoffel, gamma2: Christoffel, p, order: int) -> JetMap:
    """Jet of ``exp_{2,p}^{-1} o exp_{1,p}`` by degreewise back-substitution.

    Writing ``exp_2(w) - p = w + F(w)`` with ``F`` of order two, the fixed point of
    ``w = (exp_1(v) - p) - F(w)`` gains one correct degree per sweep.
    """
    n = len(p)
    check_symmetric(gamma1, n)
    check_symmetric(gamma2, n)
    e1, R = _displacement_series(gamma1, p, order)
    e2, _ = _displacement_series(gamma2, p, order)
    higher = [e2[k] - R.gens[k] for k in range(n)]
    w = list(e1)
    for _ in range(order):
        w = [e1[k] - _compose(higher[k], w, order) for k in range(n)]
    return _to_jet(w, order, base=tuple(rational(c) for c in p))


# ---------------------------------------------------------------------------------------
# floating-point layer


def _gamma_numeric(gamma: Christoffel, n: int):
    xs = _symbols(n, "x")
    funcs = {key: sympy.lambdify(xs, poly_to_sympy(c, xs), "numpy") for key, c in gamma.items()}

    def accel(x, xd):
        out = np.zeros(n)
        for (k, i, j), f in funcs.items():
            out[k] -= float(f(*x)) * xd[i] * xd[j]
        return out

    return accel


def _integrate(accel, x0, v, step):
    x = np.asarray(x0, dtype=float)
    xd = np.asarray(v, dtype=float)
    steps = int(round(1.0 / step))
    h = 1.0 / steps
    for _ in range(steps):
        k1x, k1v = xd, accel(x, xd)
        k2x, k2v = xd + 0.5 * h * k1v, accel(x + 0.5 * h * k1x, xd + 0.5 * h * k1v)
        k3x, k3v = xd + 0.5 * h * k2v, accel(x + 0.5 * h * k2x, xd + 0.5 * h * k2v)
        k4x, k4v = xd + h * k3v, accel(x + h * k3x, xd + h * k3v)
        x = x + h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
        xd = xd + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
    return x


def rk4_exp(gamma: Christoffel, p, v, step: float = 1e-3) -> np.ndarray:
    """``exp_p(v)`` by fixed-step RK4 on the first-order system ``(x, x')``."""
    accel = _gamma_numeric(gamma, len(p))
    return _integrate(accel, [float(c) for c in p], v, step)


def rk4_transition(gamma1: Christoffel, gamma2: Christoffel, p, v, step: float = 1e-3,
                   tol: float = 1e-12) -> np.ndarray:
    """``exp_{2,p}^{-1}(exp_{1,p}(v))`` with the inverse found by a nonlinear solve."""
    base = [float(c) for c in p]
    target = _integrate(_gamma_numeric(gamma1, len(p)), base, v, step)
    accel2 = _gamma_numeric(gamma2, len(p))
    sol, info, ier, msg = fsolve(lambda w: _integrate(accel2, base, w, step) - target,
                                 target - np.array(base), full_output=True, xtol=1e-12)
    # fsolve's progress test can trip at round-off level; judge by the residual instead
    if np.max(np.abs(info["fvec"])) > tol * max(1.0, float(np.max(np.abs(target)))):
        raise GeodesicError(f"numerical inversion failed: {msg}")
    return sol


def rk4_low_jets(gamma: Christoffel, p, h: float = 1e-2, step: float = 1e-3) -> Dict[int, np.ndarray]:
    """Central-difference estimates of the pure directional jets ``d^m/ds^m exp_p(s e_i)`` for ``m <= 3``."""
    n = len(p)
    out = {}
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        f = {s: rk4_exp(gamma, p, s * h * e, step) for s in (-2, -1, 1, 2)}
        f[0] = np.array([float(c) for c in p])
        d1 = (f[1] - f[-1]) / (2 * h)
        d2 = (f[1] - 2 * f[0] + f[-1]) / h ** 2
        d3 = (f[2] - 2 * f[1] + 2 * f[-1] - f[-2]) / (2 * h ** 3)
        out[i] = np.stack([d1, d2, d3])
    return out


# ---------------------------------------------------------------------------------------
# three-way comparison


def tangent_pair(n: int):
    """``(T_M, 0)`` on an ``n``-dimensional chart, frame ``d/dx^1 .. d/dx^n``."""
    from .liepair import LiePair

    shape = Shape(n, 0, n)
    anchor = {u: {u: Poly.const(n, 1)} for u in range(n)}
    return LiePair(shape, {}, anchor, "tangent")


def jet_from_pbw(pair, conn1, conn2, p, order: int) -> JetMap:
    """``G^k_J = [pbw_2^{-1} pbw_1 (d_J)]_{e_k}(p) / J!``."""
    from .enveloping import PBW

    n = pair.r
    p1, p2 = PBW(pair, conn1, order), PBW(pair, conn2, order)
    coeffs: Dict[int, Dict[tuple, Rational]] = {k: {} for k in range(n)}
    for j in sym_upto(n, order):
        if not any(j):
            continue
        img = p2.inverse(p1.basis(j))
        for k in range(n):
            e = tuple(1 if t == k else 0 for t in range(n))
            c = img.terms.get(e)
            if c is not None:
                coeffs[k][j] = c.evaluate(p) / jfact(j)
    return JetMap(n, order, coeffs)


def jet_from_phi(pair, conn1, conn2, p, order: int) -> Tuple[JetMap, dict]:
    """``e^Y(eta^k)`` at ``p`` with ``Y = log(phi)`` and ``phi`` from the intertwiner solve."""
    from .fedosov import assemble_Q
    from .operators import exp_field, log_phi, solve_phi

    n = pair.r
    q1 = assemble_Q(pair, conn1, order=order)
    q2 = assemble_Q(pair, conn2, order=order)
    sol = solve_phi(q1, q2)
    y = log_phi(sol.phi)
    phi = exp_field(y)
    coeffs: Dict[int, Dict[tuple, Rational]] = {}
    for k in range(n):
        img = phi.apply(FormalFunction.eta(pair.shape, order, k))
        d = {}
        for (i, j), c in img.terms.items():
            if i:
                raise GeodesicError("e^Y produced exterior terms on a 0-form")
            d[j] = c.evaluate(p)
        coeffs[k] = d
    return JetMap(n, order, coeffs), {"phi": sol.phi, "Y": y, "exp_matches_phi": phi == sol.phi}


def closed_form_exp_1d(c, order: int) -> JetMap:
    """Jet of ``v -> log(1 + c v) / c`` (geodesics of the constant connection ``c`` on the line)."""
    c = rational(c)
    return JetMap(1, order, {0: {(k,): mpq((-1) ** (k + 1), k) * c ** (k - 1) for k in range(1, order + 1)}})


def closed_form_transition_1d(c, order: int) -> JetMap:
    """Jet of ``v -> (e^{c v} - 1) / c``, the transition from the flat line to the constant connection ``c``."""
    c = rational(c)
    return JetMap(1, order, {0: {(k,): c ** (k - 1) / factorial(k) for k in range(1, order + 1)}})


def _linear_part(j: JetMap) -> JetMap:
    return JetMap(j.n, j.order, {k: {jj: c for jj, c in d.items() if any(jj)} for k, d in j.coeffs.items()})


def compare_with_pbw(conn1, conn2, p, order: int, n: int | None = None) -> dict:
    """Three-way exact comparison: geodesic transition jet, ``pbw_2^{-1} pbw_1`` and ``e^Y``."""
    if n is None:
        n = len(p)
    pair = tangent_pair(n)
    g1, g2 = christoffel_from_connection(conn1, n), christoffel_from_connection(conn2, n)
    oracle = _linear_part(transition_jet(g1, g2, p, order))
    from_pbw = jet_from_pbw(pair, conn1, conn2, p, order)
    from_phi, extra = jet_from_phi(pair, conn1, conn2, p, order)
    pipelines = {"geodesic_jet": oracle, "pbw": from_pbw, "phi": from_phi}
    mismatches = []
    names = list(pipelines)
    for a in range(3):
        for b in range(a + 1, 3):
            ja, jb = pipelines[names[a]], pipelines[names[b]]
            for k in range(n):
                for j in sym_upto(n, order):
                    if not any(j):
                        continue
                    if ja.coefficient(k, j) != jb.coefficient(k, j):
                        mismatches.append({"pair": [names[a], names[b]], "component": k, "multi_index": list(j),
                                           "values": [str(ja.coefficient(k, j)), str(jb.coefficient(k, j))]})
                        break
                else:
                    continue
                break
    return {
        "ok": not mismatches and extra["exp_matches_phi"],
        "pipelines": {k: v.to_json() for k, v in pipelines.items()},
        "mismatches": mismatches,
        "exp_of_log_matches_phi": extra["exp_matches_phi"],
    }
