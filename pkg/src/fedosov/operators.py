"""Vertical differential operators, the intertwiner phi and the exp/log correspondence.

An operator is stored as ``{M: f_M}`` meaning ``sum_M f_M * d^M`` where ``d^M`` is the
iterated eta-derivative ``prod (d/d eta^a)^{m_a}`` and ``f_M`` is a FormalFunction.
Grouping the terms by ``q = |M|`` gives the components ``D_q``.
"""
from __future__ import annotations

from gmpy2 import mpq
from itertools import product
from math import comb, factorial
from typing import Callable, Dict, List, Sequence, Tuple

from .functions import (
    FormalFunction,
    PolySection,
    Shape,
    basis_functions,
    ff_mul,
    filtration_order,
    jfact,
    partial_eta,
    sym_monomials,
    sym_upto,
)
from .fedosov import (
    REFERENCE,
    Contraction,
    FedosovField,
    VerticalVectorField,
    delta_Q,
    koszul,
)

INF = float("inf")
Multi = Tuple[int, ...]


class ShiftError(ValueError):
    """An operator violates its declared filtration shift."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class AdmissibilityError(ValueError):
    """Input outside the domain where exp/log are defined."""


def _sub_multi(m: Multi):
    if not m:
        yield ()
        return
    for k in range(m[0] + 1):
        for rest in _sub_multi(m[1:]):
            yield (k,) + rest


def _binom(m: Multi, k: Multi) -> int:
    out = 1
    for a, b in zip(m, k):
        out *= comb(a, b)
    return out


class FiltrationShiftingOperator:
    """``sum_M terms[M] d^M`` acting on the truncated function algebra."""

    __slots__ = ("shape", "order", "terms")

    def __init__(self, shape: Shape, order: int, terms: Dict[Multi, FormalFunction] | None = None):
        self.shape = shape
        self.order = order
        self.terms = {}
        for m, f in (terms or {}).items():
            m = tuple(m)
            if sum(m) > order or not f:
                continue
            if f.shape != shape or f.order != order:
                raise ValueError("coefficient does not live on the operator's frame/order")
            self.terms[m] = f

    # constructors ---------------------------------------------------------------------
    @classmethod
    def zero(cls, shape, order):
        return cls(shape, order)

    @classmethod
    def identity(cls, shape, order):
        return cls(shape, order, {(0,) * shape.rank_b: FormalFunction.constant(shape, order)})

    @classmethod
    def from_field(cls, x: VerticalVectorField) -> "FiltrationShiftingOperator":
        r = x.shape.rank_b
        terms = {}
        for j, f in enumerate(x.components):
            e = [0] * r
            e[j] = 1
            terms[tuple(e)] = f
        return cls(x.shape, x.order, terms)

    @classmethod
    def derivative(cls, shape, order, m: Multi, coeff: FormalFunction | None = None):
        """``coeff * d^M``; with ``M = e_i`` this is the contraction by ``b_i``."""
        return cls(shape, order, {tuple(m): coeff if coeff is not None else FormalFunction.constant(shape, order)})

    # structure --------------------------------------------------------------------------
    def _check(self, other):
        if not isinstance(other, FiltrationShiftingOperator):
            raise TypeError(f"expected an operator, got {type(other).__name__}")
        if other.shape != self.shape or other.order != self.order:
            raise ValueError("operators live on different frames or orders")

    def __add__(self, other):
        self._check(other)
        out = dict(self.terms)
        for m, f in other.terms.items():
            g = out.get(m)
            s = f if g is None else g + f
            if s:
                out[m] = s
            else:
                out.pop(m, None)
        return FiltrationShiftingOperator(self.shape, self.order, out)

    def __neg__(self):
        return FiltrationShiftingOperator(self.shape, self.order, {m: -f for m, f in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c):
        return FiltrationShiftingOperator(self.shape, self.order, {m: f.scale(c) for m, f in self.terms.items()})

    def __eq__(self, other):
        if not isinstance(other, FiltrationShiftingOperator):
            return NotImplemented
        return self.shape == other.shape and self.order == other.order and self.terms == other.terms

    def is_zero(self) -> bool:
        return not self.terms

    def __bool__(self):
        return bool(self.terms)

    def map(self, fn) -> "FiltrationShiftingOperator":
        return FiltrationShiftingOperator(self.shape, self.order, {m: fn(f) for m, f in self.terms.items()})

    def with_order(self, order: int) -> "FiltrationShiftingOperator":
        return FiltrationShiftingOperator(self.shape, order, {m: f.with_order(order) for m, f in self.terms.items()})

    def project(self, max_sym: int) -> "FiltrationShiftingOperator":
        return self.map(lambda f: f.project(max_sym))

    def component(self, q: int) -> "FiltrationShiftingOperator":
        return FiltrationShiftingOperator(self.shape, self.order, {m: f for m, f in self.terms.items() if sum(m) == q})

    def components(self) -> Dict[int, "FiltrationShiftingOperator"]:
        return {q: self.component(q) for q in sorted({sum(m) for m in self.terms})}

    @property
    def shift(self):
        """Largest ``N`` with every ``D_q`` in ``S^{>= q + N}``; ``inf`` for zero."""
        return min((filtration_order(f) - sum(m) for m, f in self.terms.items()), default=INF)

    def form_degrees(self) -> set:
        out = set()
        for f in self.terms.values():
            out |= f.form_degrees()
        return out

    def __repr__(self):
        if not self.terms:
            return "0"
        return " + ".join(f"[{f!r}]*d{list(m)}" for m, f in sorted(self.terms.items()))

    def to_records(self) -> list:
        out = []
        for m, f in sorted(self.terms.items()):
            for rec in f.to_records():
                rec["d"] = list(m)
                out.append(rec)
        return out

    # action -----------------------------------------------------------------------------
    def apply(self, g: FormalFunction) -> FormalFunction:
        out = FormalFunction.zero(self.shape, self.order)
        for m, f in self.terms.items():
            dg = partial_eta(g, m)
            if dg:
                out = out + ff_mul(f, dg)
        return out

    __call__ = apply

    def compose(self, other: "FiltrationShiftingOperator") -> "FiltrationShiftingOperator":
        """``self o other`` by the Leibniz rule; exact whenever ``self.shift >= 0``."""
        self._check(other)
        out: Dict[Multi, FormalFunction] = {}
        for m1, f1 in self.terms.items():
            for m2, f2 in other.terms.items():
                for k in _sub_multi(m1):
                    dk = partial_eta(f2, k)
                    if not dk:
                        continue
                    coef = ff_mul(f1, dk)
                    b = _binom(m1, k)
                    if b != 1:
                        coef = coef.scale(b)
                    key = tuple(a - c + d for a, c, d in zip(m1, k, m2))
                    prev = out.get(key)
                    out[key] = coef if prev is None else prev + coef
        return FiltrationShiftingOperator(self.shape, self.order, out)

    __matmul__ = compose

    def as_field(self) -> VerticalVectorField:
        """The vertical field of a pure first-order operator of homogeneous form degree."""
        r = self.shape.rank_b
        if any(sum(m) != 1 for m in self.terms):
            raise AdmissibilityError("operator is not a pure first-order operator")
        degs = self.form_degrees()
        if len(degs) > 1:
            raise AdmissibilityError("operator mixes form degrees")
        deg = degs.pop() if degs else 0
        comps = []
        for j in range(r):
            e = [0] * r
            e[j] = 1
            comps.append(self.terms.get(tuple(e), FormalFunction.zero(self.shape, self.order)))
        return VerticalVectorField(comps, deg)

    # Koszul calculus, componentwise -------------------------------------------------------
    def delta(self) -> "FiltrationShiftingOperator":
        return self.map(koszul)

    def h_natural(self, contraction: Contraction = REFERENCE) -> "FiltrationShiftingOperator":
        return self.map(contraction.h)

    def sigma0(self, contraction: Contraction = REFERENCE) -> "FiltrationShiftingOperator":
        return self.map(contraction.sigma0)


def delta_op(d: FiltrationShiftingOperator) -> FiltrationShiftingOperator:
    return d.delta()


def h_natural_op(d: FiltrationShiftingOperator, contraction: Contraction = REFERENCE) -> FiltrationShiftingOperator:
    return d.h_natural(contraction)


def sigma0_op(d: FiltrationShiftingOperator, contraction: Contraction = REFERENCE) -> FiltrationShiftingOperator:
    return d.sigma0(contraction)


def operator_homotopy_residuals(d: FiltrationShiftingOperator, contraction: Contraction = REFERENCE) -> Dict[str, FiltrationShiftingOperator]:
    """Residuals of the four Koszul identities; each is computed with one degree of headroom."""
    n = d.order
    e = d.with_order(n + 1)
    c = contraction

    def back(x):
        return x.with_order(n)

    return {
        "delta_h_plus_h_delta": back(e.h_natural(c).delta() + e.delta().h_natural(c) - e + e.sigma0(c)),
        "delta_squared": back(e.delta().delta()),
        "h_squared": back(e.h_natural(c).h_natural(c)),
        "h_delta_h": back(e.h_natural(c).delta().h_natural(c) - e.h_natural(c)),
    }


def commutator_with_k(d: FiltrationShiftingOperator, degree: int) -> Callable[[FormalFunction], FormalFunction]:
    """``[k, D]`` as a black box, for comparison with ``delta``."""
    sign = -1 if degree & 1 else 1

    def run(g):
        a = koszul(d.apply(g))
        b = d.apply(koszul(g))
        return a - b if sign > 0 else a + b

    return run


# ---------------------------------------------------------------------------------------
# decomposition of a black-box operator


def decompose(phi: Callable[[FormalFunction], FormalFunction], shape: Shape, order: int,
              shift: int | None = None) -> FiltrationShiftingOperator:
    """Recover ``(D_q)`` from the values of ``phi`` on the monomials ``eta^M``, ``|M| <= N``.

    ``D_q|_{S^q} = phi|_{S^q} - sum_{i<q} D_i|_{S^q}``.  With ``shift`` set every sample is
    checked against ``phi(S^k) in S^{>= k + shift}``.
    """
    r = shape.rank_b
    terms: Dict[Multi, FormalFunction] = {}
    for q in range(order + 1):
        found = {}
        for m in sym_monomials(r, q):
            g = FormalFunction.monomial(shape, order, (), m)
            val = phi(g)
            if shift is not None and filtration_order(val) < q + shift:
                raise ShiftError(f"eta^{list(m)} is sent below filtration {q + shift}", witness=list(m))
            for m2, f in terms.items():
                dg = partial_eta(g, m2)
                if dg:
                    val = val - ff_mul(f, dg)
            if val:
                found[m] = val.scale(mpq(1, jfact(m)))
        terms.update(found)
    return FiltrationShiftingOperator(shape, order, terms)


# ---------------------------------------------------------------------------------------
# the intertwiner


def eth(phi: FiltrationShiftingOperator, dq: VerticalVectorField, q2: FedosovField) -> FiltrationShiftingOperator:
    """``eth(phi) = dQ o phi + [k + Q2, phi]`` for an even operator ``phi`` of shift ``>= 0``."""
    if phi.shift < 0:
        raise ShiftError(f"eth is only evaluated on operators of shift >= 0 (got {phi.shift})")
    if phi.form_degrees() - {0}:
        raise ValueError("eth expects an operator of degree zero")

    def run(g):
        pg = phi.apply(g)
        return dq.apply(pg) + q2.without_koszul(pg) - phi.apply(q2.without_koszul(g))

    return decompose(run, phi.shape, phi.order)


class PhiSolution:
    """Result of the fixed-point solve, with the intermediate data needed by the checks."""

    def __init__(self, phi, iterations, dq, q1, q2, contraction):
        self.phi = phi
        self.iterations = iterations
        self.delta_Q = dq
        self.Q1 = q1
        self.Q2 = q2
        self.contraction = contraction

    def fixed_point_residual(self) -> FiltrationShiftingOperator:
        one = FiltrationShiftingOperator.identity(self.phi.shape, self.phi.order)
        return one + eth(self.phi, self.delta_Q, self.Q2).h_natural(self.contraction) - self.phi

    def intertwining_residuals(self) -> List[tuple]:
        return intertwining_residuals(self.phi, self.Q1, self.Q2)


def solve_phi(q1: FedosovField, q2: FedosovField, contraction: Contraction | None = None) -> PhiSolution:
    """``phi = sum_n (h_nat eth)^n (1)``, accumulated as ``phi_n = 1 + h_nat eth(phi_{n-1})``."""
    if q1.pair is not q2.pair and q1.pair != q2.pair:
        raise ValueError("both Fedosov fields must live on the same presentation")
    if q1.order != q2.order:
        raise ValueError("Fedosov fields have different truncation orders")
    shape, order = q1.pair.shape, q1.order
    ctr = contraction if contraction is not None else REFERENCE
    dq = delta_Q(q1, q2)
    one = FiltrationShiftingOperator.identity(shape, order)
    phi = one
    steps = 0
    for steps in range(1, order + 3):
        nxt = one + eth(phi, dq, q2).h_natural(ctr)
        if nxt == phi:
            break
        phi = nxt
    else:
        raise RuntimeError("fixed-point sweep did not stabilize within N + 2 steps")
    return PhiSolution(phi, steps, dq, q1, q2, ctr)


def intertwining_residuals(phi: FiltrationShiftingOperator, q1: FedosovField, q2: FedosovField) -> List[tuple]:
    """Basis monomials of degree ``<= N-1`` where ``phi Q2 != Q1 phi`` (projected to ``<= N-1``)."""
    n1 = phi.order - 1
    bad = []
    for f in basis_functions(phi.shape, phi.order, n1):
        res = (phi.apply(q2.apply(f)) - q1.apply(phi.apply(f))).project(n1)
        if res:
            bad.append((f, res))
    return bad


def linear_slice_is_identity(phi: FiltrationShiftingOperator) -> bool:
    """``pr_1 o phi`` restricted to ``Gamma(B^v)`` equals the identity."""
    shape, order = phi.shape, phi.order
    for a in range(shape.rank_b):
        e = FormalFunction.eta(shape, order, a)
        if phi.apply(e).homogeneous(1) != e:
            return False
    return True


# ---------------------------------------------------------------------------------------
# exp and log


def _check_generator(y: VerticalVectorField):
    if y.is_zero():
        return
    if y.degree != 0:
        raise AdmissibilityError("Y must have form degree zero")
    for f in y.components:
        if f.form_degrees() - {0}:
            raise AdmissibilityError("Y must have form degree zero")
    if y.filtration_order() < 2:
        raise AdmissibilityError(f"Y must have filtration order >= 2 (got {y.filtration_order()})")


def exp_field(y: VerticalVectorField, order: int | None = None) -> FiltrationShiftingOperator:
    """``e^Y = sum_{n <= N} Y^n / n!`` as an operator."""
    _check_generator(y)
    if order is not None and order != y.order:
        y = y.with_order(order)
    shape, n_max = y.shape, y.order
    yo = FiltrationShiftingOperator.from_field(y)
    total = FiltrationShiftingOperator.identity(shape, n_max)
    power = total
    for n in range(1, n_max + 1):
        power = yo.compose(power)
        if not power:
            break
        total = total + power.scale(mpq(1, factorial(n)))
    return total


def _check_automorphism(phi: FiltrationShiftingOperator):
    shape, order = phi.shape, phi.order
    if phi.form_degrees() - {0}:
        raise AdmissibilityError("phi must have degree zero")
    for a in range(shape.rank_b):
        img = phi.apply(FormalFunction.eta(shape, order, a))
        if img.homogeneous(0):
            raise AdmissibilityError(f"phi_0 != 0 on eta^{a}")
        if img.homogeneous(1) != FormalFunction.eta(shape, order, a):
            raise AdmissibilityError("phi_1 is not the identity; factor out the linear part first")


def _compositions(total: int, parts: int, lo: int, hi: int):
    """Tuples of ``parts`` integers in ``[lo, hi]`` summing to ``total``."""
    if parts == 0:
        if total == 0:
            yield ()
        return
    for first in range(lo, min(hi, total) + 1):
        for rest in _compositions(total - first, parts - 1, lo, hi):
            yield (first,) + rest


def log_phi_iteration(phi: FiltrationShiftingOperator) -> VerticalVectorField:
    """Degreewise recursion ``Y_q o j = phi_q - sum_{k>=2} (1/k!) sum Y_{i_1} o ... o Y_{i_k} o j``."""
    _check_automorphism(phi)
    shape, order = phi.shape, phi.order
    r = shape.rank_b
    etas = [FormalFunction.eta(shape, order, a) for a in range(r)]
    images = [phi.apply(e) for e in etas]
    pieces: Dict[int, VerticalVectorField] = {}
    for q in range(2, order + 1):
        comps = []
        for a in range(r):
            val = images[a].homogeneous(q)
            for k in range(2, q):
                acc = FormalFunction.zero(shape, order)
                for idx in _compositions(q - 1 + k, k, 2, q + 1 - k):
                    g = etas[a]
                    for i in reversed(idx):
                        g = pieces[i].apply(g)
                    acc = acc + g
                val = val - acc.scale(mpq(1, factorial(k)))
            comps.append(val.homogeneous(q))
        pieces[q] = VerticalVectorField(comps, 0)
    out = VerticalVectorField.zero(shape, order, 0)
    for y in pieces.values():
        out = out + y
    return out


def log_operator_series(x: FiltrationShiftingOperator) -> FiltrationShiftingOperator:
    """``sum_{j=1}^N (-1)^{j+1}/j (x - 1)^j`` for an operator with ``x - 1`` of shift ``>= 1``."""
    shape, order = x.shape, x.order
    u = x - FiltrationShiftingOperator.identity(shape, order)
    if u.shift < 1:
        raise AdmissibilityError("phi - 1 must raise the filtration")
    total = FiltrationShiftingOperator.zero(shape, order)
    power = FiltrationShiftingOperator.identity(shape, order)
    for j in range(1, order + 1):
        power = u.compose(power)
        if not power:
            break
        total = total + power.scale(mpq((-1) ** (j + 1), j))
    return total


def log_phi_series(phi: FiltrationShiftingOperator) -> VerticalVectorField:
    _check_automorphism(phi)
    return log_operator_series(phi).as_field()


def log_phi(phi: FiltrationShiftingOperator, backend: str = "both") -> VerticalVectorField:
    """``Y`` with ``phi = e^Y``.  ``backend`` is ``iteration``, ``series`` or ``both`` (cross-checked)."""
    if backend == "iteration":
        return log_phi_iteration(phi)
    if backend == "series":
        return log_phi_series(phi)
    if backend != "both":
        raise ValueError(f"unknown backend {backend!r}")
    a = log_phi_iteration(phi)
    b = log_phi_series(phi)
    if a != b:
        raise RuntimeError("log backends disagree")
    return a


def log_from_fedosov(sol: PhiSolution) -> VerticalVectorField:
    """``Y = sum_k (-1)^{k+1}/k sum T_{n_1} o ... o T_{n_k}``, ``T_n = (h_nat eth)^n(h_nat dQ)``.

    Truncated at ``n_1 + ... + n_k <= N - k``; every discarded term has filtration order above ``N``.
    """
    shape, order = sol.phi.shape, sol.phi.order
    ctr, dq, q2 = sol.contraction, sol.delta_Q, sol.Q2

    def eth_linear(t):
        def run(g):
            tg = t.apply(g)
            return dq.apply(tg) + q2.without_koszul(tg) - t.apply(q2.without_koszul(g))

        return decompose(run, shape, order)

    ts = [FiltrationShiftingOperator.from_field(dq).h_natural(ctr)]
    for _ in range(1, order):
        ts.append(eth_linear(ts[-1]).h_natural(ctr))
    total = FiltrationShiftingOperator.zero(shape, order)
    # words[k] maps a tuple (n_1..n_k) summed by total n to the composite, built incrementally
    layer = {(n,): ts[n] for n in range(len(ts)) if n <= order - 1}
    for k in range(1, order + 1):
        for ns, op in layer.items():
            total = total + op.scale(mpq((-1) ** (k + 1), k))
        nxt = {}
        for ns, op in layer.items():
            for n in range(len(ts)):
                if sum(ns) + n <= order - (k + 1):
                    nxt[ns + (n,)] = op.compose(ts[n])
        layer = nxt
        if not layer:
            break
    return total.as_field()


# ---------------------------------------------------------------------------------------
# coalgebra maps and pushforwards


def dual_of_coalgebra_map(psi: Callable[[Multi], PolySection], shape: Shape, order: int) -> FiltrationShiftingOperator:
    """The operator with ``<phi(f), theta> = <f, psi(theta)>``; ``psi`` is given on the basis ``d_J``."""
    r = shape.rank_b
    table: Dict[Multi, PolySection] = {}
    for j in sym_upto(r, order):
        img = psi(j)
        top = img.homogeneous(sum(j))
        if img.degree() > sum(j) or top.terms != {j: shape.coeff(1)}:
            raise ValueError(f"coalgebra map is not unitriangular at d{list(j)}")
        table[j] = img
    values: Dict[Multi, FormalFunction] = {}
    for k in sym_upto(r, order):
        out = {}
        kf = jfact(k)
        for j, img in table.items():
            c = img.terms.get(k)
            if c:
                out[((), j)] = c * mpq(kf, jfact(j))
        values[k] = FormalFunction(shape, order, out)

    def run(g):
        (key,) = g.terms
        return values[key[1]]

    return decompose(run, shape, order)


def substitution_automorphism(images: Sequence[FormalFunction]) -> Callable[[FormalFunction], FormalFunction]:
    """The algebra map ``eta^a -> images[a]`` extended Lambda-linearly."""
    shape, order = images[0].shape, images[0].order
    r = shape.rank_b
    cache: Dict[Tuple[int, int], FormalFunction] = {}

    def power(a, k):
        key = (a, k)
        if key not in cache:
            cache[key] = FormalFunction.constant(shape, order) if k == 0 else ff_mul(power(a, k - 1), images[a])
        return cache[key]

    def run(g):
        out = FormalFunction.zero(shape, order)
        for (i, j), c in g.terms.items():
            term = FormalFunction._raw(shape, order, {(i, (0,) * r): c})
            for a, k in enumerate(j):
                if k:
                    term = ff_mul(term, power(a, k))
            out = out + term
        return out

    return run


def constant_part(d: FiltrationShiftingOperator) -> PolySection:
    """``sum_M [f_M]_{eta^0, xi^0} d_M`` as an element of ``Gamma(SB)``."""
    r = d.shape.rank_b
    zero = ((), (0,) * r)
    out = {}
    for m, f in d.terms.items():
        c = f.terms.get(zero)
        if c:
            out[m] = c
    return PolySection(r, d.shape.chart_dim, out)


class PolyDiff:
    """``sum coeff[(M_0..M_k)] (x) d^{M_0} (x) ... (x) d^{M_k}`` with FormalFunction coefficients."""

    def __init__(self, shape: Shape, order: int, arity: int, terms: Dict[tuple, FormalFunction]):
        self.shape = shape
        self.order = order
        self.arity = arity
        self.terms = {k: v for k, v in terms.items() if v}

    def __sub__(self, other):
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out[k] - v if k in out else -v
        return PolyDiff(self.shape, self.order, self.arity, out)

    def filtration_order(self):
        return min((filtration_order(v) for v in self.terms.values()), default=INF)

    def apply(self, fs: Sequence[FormalFunction]) -> FormalFunction:
        out = FormalFunction.zero(self.shape, self.order)
        for ms, c in self.terms.items():
            term = c
            for m, f in zip(ms, fs):
                term = ff_mul(term, partial_eta(f, m))
            out = out + term
        return out


def _poly_product(shape, order, head: FormalFunction, factors: Sequence[Dict[Multi, FormalFunction]]) -> PolyDiff:
    terms: Dict[tuple, FormalFunction] = {}
    for combo in product(*[list(f.items()) for f in factors]):
        c = head
        for _, coef in combo:
            c = ff_mul(c, coef)
        if c:
            key = tuple(m for m, _ in combo)
            terms[key] = terms[key] + c if key in terms else c
    return PolyDiff(shape, order, len(factors), terms)


def pushforward_polydiff(y: VerticalVectorField, eta_i: Multi, js: Sequence[Multi]) -> dict:
    """``phi_*(eta^I (x) d_{J_0} (x) ... (x) d_{J_k})`` for ``phi = e^Y``.

    Returns the full operator, its leading part ``eta^I (x) psi^{-1}(d_{J_0}) (x) ...`` and the remainder.
    The computation runs with ``max |J_i|`` degrees of headroom so the result is exact to order ``N``.
    """
    _check_generator(y)
    shape, order = y.shape, y.order
    pad = max((sum(j) for j in js), default=0)
    big = order + pad
    yb = y.with_order(big)
    phi = exp_field(yb)
    phi_inv = exp_field(yb.scale(-1))
    head = phi.apply(FormalFunction.monomial(shape, big, (), eta_i)).with_order(order)
    full_factors, lead_factors = [], []
    one_small = FormalFunction.constant(shape, order)
    for j in js:
        dj = FiltrationShiftingOperator.derivative(shape, big, j)
        inner = dj.compose(phi_inv)
        conj = phi.compose(inner)
        full_factors.append({m: f.with_order(order) for m, f in conj.terms.items() if sum(m) <= order})
        lead = constant_part(inner)
        lead_factors.append({m: one_small.scale(c) for m, c in lead.terms.items()})
    full = _poly_product(shape, order, head, full_factors)
    leading = _poly_product(shape, order, FormalFunction.monomial(shape, order, (), eta_i), lead_factors)
    return {"full": full, "leading": leading, "remainder": full - leading, "psi_inverse": lead_factors}
