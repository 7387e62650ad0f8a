import random

import pytest
from gmpy2 import mpq
from hypothesis import given
from hypothesis import strategies as st

from fedosov.coefficients import Poly
from fedosov.fedosov import REFERENCE, VerticalVectorField, assemble_Q, contraction_for, delta_Q
from fedosov.functions import FormalFunction, PolySection, Shape, ff_mul, pair, partial_eta, sym_upto
from fedosov.geodesic import tangent_pair
from fedosov.liepair import Connection
from fedosov.operators import (AdmissibilityError, FiltrationShiftingOperator, ShiftError, commutator_with_k,
                               decompose, dual_of_coalgebra_map, eth, exp_field, linear_slice_is_identity,
                               log_from_fedosov, log_phi, log_phi_iteration, log_phi_series,
                               operator_homotopy_residuals, pushforward_polydiff, solve_phi,
                               substitution_automorphism)
from strategies import SHAPES, formal_functions, presentation, rand_generator, rand_operator

S = Shape(1, 1)
B, A = 0, 1
N = 5


def m(ext=(), sym=(0,), c=1, order=N, shape=S):
    return FormalFunction.monomial(shape, order, ext, sym, c)


def op(terms, shape=S, order=N):
    return FiltrationShiftingOperator(shape, order, {k: v for k, v in terms.items()})


def eta_sq_field(shape=S, order=N, c=1):
    """``c eta^2 d/d eta`` on a rank-one bundle."""
    return VerticalVectorField([m((), (2,), c, order, shape)], 0)


def line_pair(c, order=N):
    pair = tangent_pair(1)
    q1 = assemble_Q(pair, Connection(), order=order)
    q2 = assemble_Q(pair, Connection({(0, 0): {0: Poly.const(1, c)}}), order=order)
    return pair, q1, q2


# apply ---------------------------------------------------------------------------------

def test_identity_applies_trivially():
    f = m((A,), (3,), 2) + m((), (1,))
    assert FiltrationShiftingOperator.identity(S, N).apply(f) == f


def test_contraction_on_square():
    d = FiltrationShiftingOperator.derivative(S, N, (1,))
    assert d.apply(m((), (2,))) == m((), (1,), 2)


def test_raising_operator():
    d = op({(1,): m((), (2,))})
    assert d.apply(m((), (1,))) == m((), (2,))


# decompose -----------------------------------------------------------------------------

def test_decompose_examples():
    assert decompose(lambda g: g, S, N) == FiltrationShiftingOperator.identity(S, N)
    d = FiltrationShiftingOperator.derivative(S, N, (1,))
    assert decompose(d.apply, S, N, shift=-1) == d
    e = exp_field(eta_sq_field())
    assert decompose(e.apply, S, N) == e


def test_decompose_reports_shift_violation():
    d = FiltrationShiftingOperator.derivative(S, N, (1,))
    with pytest.raises(ShiftError) as err:
        decompose(d.apply, S, N, shift=0)
    assert err.value.witness == [1]


@given(st.integers(0, 10 ** 6), st.sampled_from(SHAPES))
def test_decompose_recovers_random_operator(seed, shape):
    d = rand_operator(random.Random(seed), shape, 3)
    assert decompose(d.apply, shape, 3) == d


# Koszul calculus on operators ----------------------------------------------------------

def test_delta_h_sigma_examples():
    assert not op({(1,): m((), (0,))}).delta()
    assert op({(1,): m((), (1,))}).delta() == op({(1,): m((B,), (0,))})
    assert op({(1,): m((B,), (0,))}).h_natural() == op({(1,): m((), (1,))})
    z = op({(1,): m((A,), (0,))})
    assert z.sigma0() == z


@given(st.integers(0, 10 ** 6), st.sampled_from(SHAPES))
def test_operator_homotopy_identities(seed, shape):
    d = rand_operator(random.Random(seed), shape, 3)
    res = operator_homotopy_residuals(d, REFERENCE)
    assert not any(res.values())


@given(st.integers(0, 10 ** 6), st.sampled_from(["solvable", "so3_e3", "sl2_borel"]))
def test_operator_homotopy_second_splitting(seed, name):
    pres = presentation(name)
    ctr = contraction_for(pres.pair, pres.splitting2)
    d = rand_operator(random.Random(seed), pres.pair.shape, 3)
    assert not any(operator_homotopy_residuals(d, ctr).values())


def _even_part(d):
    return FiltrationShiftingOperator(d.shape, d.order, {
        k: FormalFunction(d.shape, d.order, {t: c for t, c in f.terms.items() if len(t[0]) % 2 == 0})
        for k, f in d.terms.items()})


@given(st.data())
def test_delta_is_commutator_with_koszul(data):
    shape = data.draw(st.sampled_from(SHAPES))
    d = _even_part(rand_operator(random.Random(data.draw(st.integers(0, 10 ** 6))), shape, 3))
    g = data.draw(formal_functions(shape, 3)).with_order(6)
    d = d.with_order(6)  # nothing is truncated at this order
    assert d.delta().apply(g) == commutator_with_k(d, 0)(g)


# eth -----------------------------------------------------------------------------------

def test_eth_examples():
    pres = presentation("solvable")
    q = assemble_Q(pres.pair, pres.connection1, order=4)
    one = FiltrationShiftingOperator.identity(pres.pair.shape, 4)
    assert not eth(one, delta_Q(q, q), q)
    q2 = assemble_Q(pres.pair, pres.connection2, order=4)
    dq = delta_Q(q, q2)
    assert eth(one, dq, q2) == FiltrationShiftingOperator.from_field(dq)


def test_eth_rejects_negative_shift():
    pres = presentation("solvable")
    q = assemble_Q(pres.pair, pres.connection1, order=3)
    d = FiltrationShiftingOperator.derivative(pres.pair.shape, 3, (1,))
    with pytest.raises(ShiftError):
        eth(d, delta_Q(q, q), q)


@given(st.integers(0, 10 ** 6))
def test_eth_preserves_shift_and_h_raises_it(seed):
    rng = random.Random(seed)
    pres = presentation("solvable")
    shape = pres.pair.shape
    q1 = assemble_Q(pres.pair, pres.connection1, order=4)
    q2 = assemble_Q(pres.pair, pres.connection2, order=4)
    dq = delta_Q(q1, q2)
    d = FiltrationShiftingOperator.identity(shape, 4) + FiltrationShiftingOperator.from_field(rand_generator(rng, shape, 4))
    assert d.shift >= 0
    e = eth(d, dq, q2)
    assert e.shift >= 0
    assert e.h_natural().shift >= 1


# solve_phi -----------------------------------------------------------------------------

def test_equal_fields_give_identity():
    pres = presentation("so3_e3")
    q = assemble_Q(pres.pair, pres.connection1, order=4)
    sol = solve_phi(q, q)
    assert sol.phi == FiltrationShiftingOperator.identity(pres.pair.shape, 4)


@pytest.mark.parametrize("c", [mpq(1), mpq(3, 2), mpq(-2)])
def test_line_intertwiner(c):
    pair, q1, q2 = line_pair(c)
    sol = solve_phi(q1, q2)
    phi = sol.phi
    assert linear_slice_is_identity(phi)
    img = phi.apply(FormalFunction.eta(pair.shape, N, 0))
    assert pair_value(img, (2,)) == Poly.const(1, c)
    assert not sol.fixed_point_residual()
    assert sol.intertwining_residuals() == []


def pair_value(f, j):
    return pair(PolySection.basis(1, j, 1, Poly.const(1, 1)), f)


@pytest.mark.parametrize("name", ["solvable", "line_x", "plane_poly"])
def test_phi_is_multiplicative(name):
    pres = presentation(name)
    order = 4
    q1 = assemble_Q(pres.pair, pres.connection1, order=order)
    q2 = assemble_Q(pres.pair, pres.connection2, order=order)
    phi = solve_phi(q1, q2).phi
    shape = pres.pair.shape
    fs = [FormalFunction.eta(shape, order, a) for a in range(shape.rank_b)]
    fs.append(FormalFunction.xi(shape, order, 0))
    for f in fs:
        for g in fs:
            assert phi.apply(ff_mul(f, g)) == ff_mul(phi.apply(f), phi.apply(g))


# exp and log ---------------------------------------------------------------------------

def test_exp_of_zero_is_identity():
    assert exp_field(VerticalVectorField.zero(S, N, 0)) == FiltrationShiftingOperator.identity(S, N)


def test_exp_of_eta_squared():
    shape = Shape(1, 0)
    e = exp_field(eta_sq_field(shape))
    geometric = sum((FormalFunction.monomial(shape, N, (), (k,)) for k in range(2, N + 1)),
                    FormalFunction.eta(shape, N, 0))
    assert e.apply(FormalFunction.eta(shape, N, 0)) == geometric


def test_exp_admissibility():
    with pytest.raises(AdmissibilityError):
        exp_field(VerticalVectorField([m((), (1,))], 0))
    with pytest.raises(AdmissibilityError):
        exp_field(VerticalVectorField([m((A,), (2,))], 1))


def test_log_examples():
    assert log_phi(FiltrationShiftingOperator.identity(S, N)).is_zero()
    y = eta_sq_field()
    assert log_phi(exp_field(y)) == y


def test_log_rejects_nonunipotent():
    with pytest.raises(AdmissibilityError):
        log_phi_series(FiltrationShiftingOperator.identity(S, N).scale(2))
    with pytest.raises(AdmissibilityError):
        log_phi_iteration(FiltrationShiftingOperator.identity(S, N).scale(2))


@pytest.mark.parametrize("c", [mpq(1), mpq(3, 2)])
def test_line_log_leading_term(c):
    pair, q1, q2 = line_pair(c)
    sol = solve_phi(q1, q2)
    y = log_phi(sol.phi)
    lead = y.homogeneous(2).components[0]
    assert lead == FormalFunction.monomial(pair.shape, N, (), (2,), Poly.const(1, c / 2))
    assert log_from_fedosov(sol) == y


@given(st.integers(0, 10 ** 6), st.sampled_from(SHAPES))
def test_exp_log_round_trip(seed, shape):
    y = rand_generator(random.Random(seed), shape, 4)
    phi = exp_field(y)
    assert log_phi_iteration(phi) == y
    assert log_phi_series(phi) == y


@given(st.integers(0, 10 ** 6), st.sampled_from(SHAPES))
def test_exp_is_an_algebra_automorphism(seed, shape):
    phi = exp_field(rand_generator(random.Random(seed), shape, 3))
    f = FormalFunction.eta(shape, 3, 0) + FormalFunction.xi(shape, 3, 0)
    g = FormalFunction.eta(shape, 3, shape.rank_b - 1)
    assert phi.apply(ff_mul(f, g)) == ff_mul(phi.apply(f), phi.apply(g))


@given(st.integers(0, 10 ** 6), st.sampled_from(SHAPES))
def test_substitution_automorphism_logs_agree(seed, shape):
    rng = random.Random(seed)
    order = 4
    y = rand_generator(rng, shape, order)
    images = [FormalFunction.eta(shape, order, a) + y.components[a] for a in range(shape.rank_b)]
    phi = decompose(substitution_automorphism(images), shape, order)
    a = log_phi_iteration(phi)
    assert a == log_phi_series(phi)
    assert exp_field(a) == phi


@pytest.mark.parametrize("name", ["solvable", "so3_e3", "line_const", "foliation"])
def test_log_from_fedosov_matches_log(name):
    pres = presentation(name)
    q1 = assemble_Q(pres.pair, pres.connection1, order=4)
    q2 = assemble_Q(pres.pair, pres.connection2, order=4)
    sol = solve_phi(q1, q2)
    assert log_from_fedosov(sol) == log_phi(sol.phi)


# dual of a coalgebra map ---------------------------------------------------------------

def test_dual_of_identity():
    ident = lambda j: PolySection.basis(1, j)
    assert dual_of_coalgebra_map(ident, Shape(1, 1), N) == FiltrationShiftingOperator.identity(Shape(1, 1), N)


def test_dual_flat_abelian_is_identity():
    from fedosov.enveloping import PBW
    pres = presentation("abelian")
    p1 = PBW(pres.pair, pres.connection1, N)
    p2 = PBW(pres.pair, pres.connection1, N)
    psi = lambda j: p1.inverse(p2.basis(j))
    assert dual_of_coalgebra_map(psi, pres.pair.shape, N) == FiltrationShiftingOperator.identity(pres.pair.shape, N)


@pytest.mark.parametrize("c", [mpq(3, 2), mpq(-1, 3)])
def test_dual_matches_solve_phi_on_line(c):
    from fedosov.enveloping import PBW
    pair, q1, q2 = line_pair(c)
    p1 = PBW(pair, q1.connection, N)
    p2 = PBW(pair, q2.connection, N)
    psi = lambda j: p2.inverse(p1.basis(j))
    assert dual_of_coalgebra_map(psi, pair.shape, N) == solve_phi(q1, q2).phi


def test_dual_rejects_non_unitriangular():
    with pytest.raises(ValueError):
        dual_of_coalgebra_map(lambda j: PolySection.basis(1, j).scale(2), S, 3)


# pushforward ---------------------------------------------------------------------------

def test_pushforward_by_identity():
    y = VerticalVectorField.zero(S, N, 0)
    out = pushforward_polydiff(y, (1,), [(1,), (2,)])
    assert not out["remainder"].terms
    assert out["full"].terms == out["leading"].terms


def test_pushforward_single_derivative():
    y = eta_sq_field()
    out = pushforward_polydiff(y, (0,), [(1,)])
    assert out["remainder"].filtration_order() >= 1
    # psi^{-1}(d) = d for a field vanishing to second order
    assert out["psi_inverse"][0] == {(1,): FormalFunction.constant(S, N)}


def _direct_pushforward(y, eta_i, js, fs, order):
    pad = max(sum(j) for j in js)
    big = order + pad
    yb = y.with_order(big)
    phi, inv = exp_field(yb), exp_field(yb.scale(-1))
    term = FormalFunction.monomial(y.shape, big, (), eta_i)
    for j, f in zip(js, fs):
        term = ff_mul(term, partial_eta(inv.apply(f.with_order(big)), j))
    return phi.apply(term).with_order(order)


@given(st.data())
def test_pushforward_matches_conjugation(data):
    seed = data.draw(st.integers(0, 10 ** 6))
    shape = data.draw(st.sampled_from([Shape(1, 1), Shape(2, 0), Shape(2, 0, 1)]))
    rng = random.Random(seed)
    order = 4
    y = rand_generator(rng, shape, order)
    r = shape.rank_b
    multis = list(sym_upto(r, 2))
    eta_i = rng.choice(multis)
    js = [rng.choice(multis[1:]) for _ in range(rng.randint(1, 2))]
    fs = [data.draw(formal_functions(shape, order, form_degree=0)) for _ in js]
    out = pushforward_polydiff(y, eta_i, js)
    assert out["full"].apply(fs) == _direct_pushforward(y, eta_i, js, fs, order)
    assert out["remainder"].filtration_order() > sum(eta_i)


def test_pushforward_rejects_bad_generator():
    with pytest.raises(AdmissibilityError):
        pushforward_polydiff(VerticalVectorField([m((), (1,))], 0), (0,), [(1,)])

