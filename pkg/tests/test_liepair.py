from pathlib import Path

import pytest
from gmpy2 import mpq
from hypothesis import given
from hypothesis import strategies as st

from fedosov.coefficients import Poly
from fedosov.functions import FormalFunction, Shape, ff_mul, filtration_order
from fedosov.liepair import (BForm, Connection, LiePair, PresentationError, SplittingOffset, TorsionError,
                             bott_check, cE_differential, covariant_derivative, curvature, curvature_tensor,
                             frame_change, is_torsion_free, load_presentation, symmetrize, torsion, validate)
from fedosov.presentations import shipped_names
from strategies import formal_functions, presentation

DATA = Path(__file__).parent / "data"
B, A = 0, 1  # frame of the solvable pair: b~ then a


def solvable(t=1, u=0):
    pair = LiePair(Shape(1, 1), {(A, B): {B: mpq(1)}, (B, A): {B: mpq(-1)}})
    gamma = {}
    if t:
        gamma[(A, B)] = {B: mpq(t)}
    if u:
        gamma[(B, B)] = {B: mpq(u)}
    return pair, Connection(gamma)


def abelian():
    return LiePair(Shape(1, 1), {}), Connection()


def line():
    return LiePair(Shape(1, 0, 1), {}, {0: {0: Poly.const(1, 1)}})


# validate ------------------------------------------------------------------------------

def test_abelian_and_solvable_are_valid():
    assert validate(abelian()[0]).ok
    assert validate(solvable()[0]).ok


def test_a_closure_violation_names_frames():
    pres = load_presentation(DATA / "a_closure_violation.json")
    rep = validate(pres.pair)
    kinds = {i["check"] for i in rep.issues}
    assert "a_closure" in kinds
    assert any(i["frames"] == [1, 2, 0] for i in rep.issues if i["check"] == "a_closure")


def test_jacobi_violation_names_triple():
    rep = validate(load_presentation(DATA / "jacobi_violation.json").pair)
    assert [i["frames"] for i in rep.issues if i["check"] == "jacobi"] == [[0, 1, 2]]


def test_antisymmetry_violation():
    pair = LiePair(Shape(1, 1), {(A, B): {B: mpq(1)}})
    assert any(i["check"] == "antisymmetry" for i in validate(pair).issues)


def test_anchor_violation():
    # [d_x, d_x-ish] with a bracket that the anchor cannot follow
    pair = LiePair(Shape(2, 0, 1), {(0, 1): {0: Poly.const(1, 1)}, (1, 0): {0: Poly.const(1, -1)}},
                   {0: {0: Poly.const(1, 1)}, 1: {0: Poly.const(1, 1)}})
    assert any(i["check"] == "anchor" for i in validate(pair).issues)


def test_malformed_file_is_rejected():
    with pytest.raises(PresentationError):
        load_presentation(DATA / "malformed.json")


@pytest.mark.parametrize("name", shipped_names())
def test_shipped_presentations_validate(name):
    pres = presentation(name)
    assert validate(pres.pair).ok
    assert is_torsion_free(pres.pair, pres.connection1)
    assert is_torsion_free(pres.pair, pres.connection2)
    assert bott_check(pres.pair, pres.connection1) == []


# Chevalley-Eilenberg -------------------------------------------------------------------

def test_abelian_differential_vanishes():
    pair, _ = abelian()
    f = FormalFunction.xi(pair.shape, 3, 0) + FormalFunction.monomial(pair.shape, 3, (1,), (2,), 5)
    assert not cE_differential(pair, f)


def test_solvable_differential_of_xi():
    pair, _ = solvable()
    d = cE_differential(pair, FormalFunction.xi(pair.shape, 2, B))
    # d xi(a, b) = -xi([a, b]) = -1, so d xi = -zeta ^ xi
    assert d == -FormalFunction.monomial(pair.shape, 2, (A, B))
    assert not cE_differential(pair, FormalFunction.xi(pair.shape, 2, A))


def test_chart_differential_of_coordinate():
    pair = line()
    x = FormalFunction(pair.shape, 2, {((), (0,)): Poly.var(1, 0)})
    assert cE_differential(pair, x) == FormalFunction.monomial(pair.shape, 2, (0,), (0,), Poly.const(1, 1))


def _ce_one_form_oracle(pair, order, w):
    """d xi^w (u, v) = -xi^w([u, v]) over a point."""
    out = FormalFunction.zero(pair.shape, order)
    for u in range(pair.rank):
        for v in range(u + 1, pair.rank):
            c = pair.c(u, v).get(w)
            if c:
                out = out + FormalFunction.monomial(pair.shape, order, (u, v), None, -c)
    return out


@pytest.mark.parametrize("name", ["solvable", "so3_e3", "sl2_borel", "abelian_r2"])
def test_differential_on_one_forms_matches_formula(name):
    pair = presentation(name).pair
    for w in range(pair.rank):
        assert cE_differential(pair, FormalFunction.xi(pair.shape, 2, w)) == _ce_one_form_oracle(pair, 2, w)


@given(st.data())
def test_d_squared_vanishes(data):
    name = data.draw(st.sampled_from(shipped_names()))
    pair = presentation(name).pair
    f = data.draw(formal_functions(pair.shape, 2))
    assert not cE_differential(pair, cE_differential(pair, f))


# covariant derivative, torsion, curvature ----------------------------------------------

def test_flat_abelian_covariant_derivative():
    pair, conn = abelian()
    assert covariant_derivative(pair, conn, BForm.basis(pair.shape, 2, 0)).is_zero()


def test_solvable_covariant_derivative():
    u = mpq(7, 3)
    pair, conn = solvable(1, u)
    out = covariant_derivative(pair, conn, BForm.basis(pair.shape, 2, 0))
    want = FormalFunction.monomial(pair.shape, 2, (A,)) + FormalFunction.monomial(pair.shape, 2, (B,), None, u)
    assert out.components[0] == want


@pytest.mark.parametrize("t", [0, 1, 2, mpq(5, 2)])
def test_solvable_torsion(t):
    pair, conn = solvable(t, 3)
    tor = torsion(pair, conn)
    # stored on the ordered pair (b, a): T(b, a) = -T(a, b) = -(t - 1)
    assert tor.components[0] == FormalFunction.monomial(pair.shape, 0, (B, A), None, 1 - mpq(t))
    assert is_torsion_free(pair, conn) == (t == 1)


def test_line_torsion_vanishes():
    pair = line()
    assert is_torsion_free(pair, Connection({(0, 0): {0: Poly.const(1, mpq(3, 2))}}))


def test_flat_and_rank_one_curvature_vanish():
    pair, conn = abelian()
    assert curvature(pair, conn, 2).is_zero()
    assert curvature(line(), Connection({(0, 0): {0: Poly.var(1, 0)}}), 3).is_zero()


def test_solvable_curvature():
    u = mpq(5)
    pair, conn = solvable(1, u)
    # R(a, b) b = -u b, stored on (b, a)
    assert curvature_tensor(pair, conn) == {(B, A): {(0, 0): u}}


@pytest.mark.parametrize("name", shipped_names())
def test_curvature_is_square_of_covariant_derivative(name):
    pres = presentation(name)
    pair = pres.pair
    for conn in (pres.connection1, pres.connection2):
        tensor = curvature_tensor(pair, conn)
        for i in range(pair.r):
            dd = covariant_derivative(pair, conn, covariant_derivative(pair, conn, BForm.basis(pair.shape, 1, i)))
            want = BForm.zero(pair.shape, 1)
            comps = list(want.components)
            for (u, v), entry in tensor.items():
                for (ii, j), val in entry.items():
                    if ii == i:
                        comps[j] = comps[j] + FormalFunction.monomial(pair.shape, 1, (u, v), None, val)
            assert dd == BForm(comps), (name, i)


def test_bott_check():
    assert bott_check(*solvable(1, 4)) == []
    assert bott_check(*abelian()) == []
    with pytest.raises(TorsionError):
        bott_check(*solvable(2, 0))


def test_symmetrize_produces_torsion_free_connection():
    pair = presentation("so3_e3").pair
    raw = Connection({(0, 1): {0: mpq(1)}, (1, 0): {1: mpq(2)}})
    sym = symmetrize(pair, raw)
    assert is_torsion_free(pair, sym)
    assert bott_check(pair, sym) == []


# frame change --------------------------------------------------------------------------

def test_frame_change_identity_for_zero_offset():
    pair, _ = solvable()
    f = FormalFunction.monomial(pair.shape, 2, (B, A), (1,))
    assert frame_change(pair, SplittingOffset(), f) == f


def test_frame_change_rank_one():
    pair, _ = solvable()
    s = SplittingOffset({(0, 0): mpq(1)})
    zeta = FormalFunction.xi(pair.shape, 2, A)
    assert frame_change(pair, s, zeta) == zeta - FormalFunction.xi(pair.shape, 2, B)


@given(st.data())
def test_frame_change_is_an_invertible_algebra_map(data):
    pres = presentation(data.draw(st.sampled_from(["solvable", "so3_e3", "sl2_borel", "abelian_r2", "foliation"])))
    pair, s = pres.pair, pres.splitting2
    f = data.draw(formal_functions(pair.shape, 3))
    g = data.draw(formal_functions(pair.shape, 3))
    fc = frame_change(pair, s, f)
    assert frame_change(pair, s.negated(), fc) == f
    assert frame_change(pair, s, ff_mul(f, g)) == ff_mul(fc, frame_change(pair, s, g))
    assert filtration_order(fc) == filtration_order(f)
