import numpy as np
import pytest
import sympy
from gmpy2 import mpq
from hypothesis import given, settings
from hypothesis import strategies as st

from fedosov.coefficients import Poly, parse_poly
from fedosov.geodesic import (GeodesicError, JetMap, christoffel_from_connection, closed_form_exp_1d,
                              closed_form_transition_1d, compare_with_pbw, geodesic_jet, jet_from_pbw,
                              jet_from_phi, parse_christoffel, rk4_exp, rk4_low_jets, rk4_transition,
                              tangent_pair, transition_jet)
from fedosov.liepair import Connection
from fedosov.functions import sym_upto
from strategies import presentation

HALF = (mpq(1, 2),)


def line(c):
    return {(0, 0, 0): parse_poly(str(c), 1)}


# exponential jets ----------------------------------------------------------------------

def test_flat_exponential_is_translation():
    p = (mpq(1), mpq(-2))
    jet = geodesic_jet({}, p, 5)
    assert jet.coeffs == {0: {(0, 0): 1, (1, 0): 1}, 1: {(0, 0): -2, (0, 1): 1}}


@pytest.mark.parametrize("c", [mpq(1), mpq(3, 2), mpq(-2)])
def test_constant_line_exponential(c):
    jet = geodesic_jet(line(c), (mpq(0),), 7)
    want = closed_form_exp_1d(c, 7)
    assert jet == want
    assert jet.coefficient(0, (2,)) == -c / 2
    assert jet.coefficient(0, (3,)) == c ** 2 / 3


def test_exponential_value_check():
    gamma = line(1)
    p = (mpq(2),)
    val = geodesic_jet(gamma, p, 20).evaluate([0.1])[0]
    assert val == pytest.approx(2 + np.log1p(0.1), abs=1e-15)
    assert val - 2 == pytest.approx(0.0953102, abs=1e-7)
    assert abs(rk4_exp(gamma, p, [0.1])[0] - (2 + np.log1p(0.1))) < 1e-10


def _line_exp_oracle(gamma_expr, p, order):
    """Series of ``exp_p`` on the line from the first integral ``F(exp_p(v) - p) = v``."""
    x, u, w, s = sympy.symbols("x u w s")
    phi = sympy.integrate(gamma_expr, x)
    weight = sympy.exp(phi.subs(x, p + u) - phi.subs(x, p))
    dens = sympy.series(weight, u, 0, order).removeO()
    F = sympy.integrate(dens, (u, 0, w))
    # revert F(w) = s degree by degree
    coeffs = []
    for k in range(1, order + 1):
        a = sympy.Symbol(f"a{k}")
        trial = sum(c * s ** (i + 1) for i, c in enumerate(coeffs)) + a * s ** k
        expr = sympy.expand(F.subs(w, trial))
        target = 1 if k == 1 else 0
        coeffs.append(sympy.solve(sympy.Eq(expr.coeff(s, k), target), a)[0])
    return coeffs


@pytest.mark.parametrize("gamma", ["x", "x^2 - 1", "2*x + 1/3"])
def test_line_exponential_matches_first_integral(gamma):
    x = sympy.Symbol("x")
    expr = sympy.sympify(gamma.replace("^", "**"))
    p = sympy.Rational(1, 2)
    order = 6
    want = _line_exp_oracle(expr.subs(sympy.Symbol("x"), x), p, order)
    jet = geodesic_jet({(0, 0, 0): parse_poly(gamma, 1)}, HALF, order)
    for k, c in enumerate(want, start=1):
        got = jet.coefficient(0, (k,))
        assert sympy.Rational(int(got.numerator), int(got.denominator)) == sympy.nsimplify(c), k


def test_non_symmetric_christoffel_rejected():
    with pytest.raises(GeodesicError):
        geodesic_jet({(0, 0, 1): Poly.const(2, 1)}, (mpq(0), mpq(0)), 3)


def test_parse_christoffel_forms():
    assert parse_christoffel("3/2", 1) == {(0, 0, 0): Poly.const(1, mpq(3, 2))}
    assert parse_christoffel({"1,0,1": "x + y"}, 2) == {(1, 0, 1): parse_poly("x + y", 2)}
    with pytest.raises(GeodesicError):
        parse_christoffel("x", 2)
    with pytest.raises(GeodesicError):
        parse_christoffel({"0,0": "1"}, 2)


@given(st.lists(st.integers(-3, 3), min_size=6, max_size=6), st.integers(-2, 2), st.integers(-2, 2))
@settings(max_examples=25)
def test_linear_and_quadratic_terms(cs, px, py):
    # a symmetric connection on the plane with affine coefficients
    xs = ["x", "y", "1"]
    gamma = {}
    for idx, (k, i, j) in enumerate([(0, 0, 0), (0, 0, 1), (0, 1, 1), (1, 0, 0), (1, 0, 1), (1, 1, 1)]):
        if cs[idx]:
            poly = parse_poly(f"{cs[idx]}*{xs[idx % 3]}", 2)
            gamma[(k, i, j)] = poly
            gamma[(k, j, i)] = poly
    p = (mpq(px), mpq(py))
    jet = geodesic_jet(gamma, p, 3)
    for k in range(2):
        for j in sym_upto(2, 1):
            if sum(j) == 1:
                assert jet.coefficient(k, j) == (1 if j[k] == 1 else 0)
        # v^i v^j coefficient is -1/2 Gamma^k_ij(p), summed over the symmetric pair
        for j in sym_upto(2, 2):
            if sum(j) != 2:
                continue
            i1 = 0 if j[0] else 1
            i2 = 1 if j[1] else 0
            val = gamma.get((k, i1, i2), Poly(2)).evaluate(p)
            mult = 1 if i1 == i2 else 2
            assert jet.coefficient(k, j) == -mult * val / 2


def test_rk4_low_jets_match_exact():
    gamma = {(0, 0, 0): parse_poly("x", 1)}
    jets = rk4_low_jets(gamma, HALF)
    exact = geodesic_jet(gamma, HALF, 3)
    for m in range(1, 4):
        want = float(exact.coefficient(0, (m,))) * [1, 2, 6][m - 1]
        assert jets[0][m - 1][0] == pytest.approx(want, abs=1e-3)


# transition jets -----------------------------------------------------------------------

def test_equal_connections_give_identity():
    g = {(0, 0, 0): parse_poly("x^2", 1)}
    jet = transition_jet(g, g, HALF, 6)
    assert jet.coeffs == {0: {(1,): 1}}


@pytest.mark.parametrize("c", [mpq(1), mpq(3, 2), mpq(-1, 3)])
def test_flat_to_constant_transition(c):
    jet = transition_jet({}, line(c), (mpq(0),), 7)
    assert jet == closed_form_transition_1d(c, 7)
    assert jet.coefficient(0, (2,)) == c / 2


def test_plane_transition_matches_rk4():
    g1 = {}
    g2 = {(0, 0, 0): parse_poly("x", 2), (1, 0, 1): parse_poly("1/2*x", 2), (1, 1, 0): parse_poly("1/2*x", 2)}
    p = (mpq(1, 4), mpq(0))
    jet = transition_jet(g1, g2, p, 9)
    for v in ([0.03, -0.02], [-0.04, 0.01], [0.02, 0.02]):
        num = rk4_transition(g1, g2, p, v)
        assert np.max(np.abs(jet.evaluate(v) - num)) < 1e-8


def test_jet_json_is_sorted_strings():
    j = JetMap(1, 2, {0: {(2,): mpq(-1, 2), (1,): mpq(1)}})
    assert j.to_json() == {"0": [[[1], "1"], [[2], "-1/2"]]}


# three pipelines -----------------------------------------------------------------------

@pytest.mark.parametrize("c", [mpq(3, 2), mpq(-2)])
def test_pbw_and_phi_jets_on_constant_line(c):
    pair = tangent_pair(1)
    conn2 = Connection({(0, 0): {0: Poly.const(1, c)}})
    want = closed_form_transition_1d(c, 5)
    assert jet_from_pbw(pair, Connection(), conn2, (mpq(0),), 5) == want
    got, extra = jet_from_phi(pair, Connection(), conn2, (mpq(0),), 5)
    assert got == want and extra["exp_matches_phi"]


@pytest.mark.parametrize("name", ["line_const", "line_x", "plane_poly"])
def test_compare_with_pbw_on_presentations(name):
    pres = presentation(name)
    n = pres.pair.r
    rep = compare_with_pbw(pres.connection1, pres.connection2, pres.base_point, min(pres.order, 5), n)
    assert rep["ok"], rep["mismatches"]
    assert set(rep["pipelines"]) == {"geodesic_jet", "pbw", "phi"}


def test_compare_detects_disagreement(monkeypatch):
    import fedosov.geodesic as geo

    real = geo.transition_jet

    def skewed(g1, g2, p, order):
        jet = real(g1, g2, p, order)
        jet.coeffs[0][(2,)] = jet.coefficient(0, (2,)) + 1
        return jet

    monkeypatch.setattr(geo, "transition_jet", skewed)
    rep = compare_with_pbw(Connection(), Connection({(0, 0): {0: Poly.const(1, 1)}}), (mpq(0),), 4, 1)
    assert not rep["ok"]
    assert rep["mismatches"][0]["multi_index"] == [2]


def test_christoffel_from_connection():
    conn = Connection({(0, 1): {1: Poly.const(2, 3)}})
    assert christoffel_from_connection(conn, 2) == {(1, 0, 1): Poly.const(2, 3)}
