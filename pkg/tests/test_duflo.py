import json
from fractions import Fraction

import pytest
import sympy
from hypothesis import given, strategies as st

from fkit import duflo
from fkit.algebra import Poly, parse_poly, schouten
from fkit.duflo import (LieAlgebra, LieAlgebraError, UEAElement, casimir, coinvariants_projection, commutator,
                        duflo_J, duflo_map, invariants, kks_bivector, log_sinhc_coefficients, normal_order, sym,
                        uea_product)

SL2 = duflo.sl2()


def test_structure_constant_validation():
    with pytest.raises(LieAlgebraError):
        LieAlgebra.from_brackets(2, {(2, 1): {1: 1}})
    # [e1,e2]=e3, [e1,e3]=e3, [e2,e3]=e1: the Jacobi sum is -e1
    with pytest.raises(LieAlgebraError):
        LieAlgebra.from_brackets(3, {(1, 2): {3: 1}, (1, 3): {3: 1}, (2, 3): {1: 1}})
    bad = ((( 0, 1), (0, 0)), ((0, 1), (0, 0)))
    with pytest.raises(LieAlgebraError):
        LieAlgebra(2, tuple(tuple(tuple(Fraction(x) for x in r) for r in m) for m in bad))
    with pytest.raises(LieAlgebraError):
        LieAlgebra.from_json('{"dim": 2}')


@pytest.mark.parametrize("name", list(duflo.ALGEBRAS))
def test_json_round_trip_and_kks_is_poisson(name, tmp_path):
    L = duflo.ALGEBRAS[name]()
    assert LieAlgebra.from_json(L.to_json(), name).c == L.c
    p = tmp_path / "alg.json"
    p.write_text(L.to_json())
    assert duflo.load_algebra(str(p)).c == L.c
    assert not schouten(kks_bivector(L), kks_bivector(L)).comps


def test_log_sinhc_against_sympy_series():
    t = sympy.symbols("t")
    ser = sympy.series(sympy.log(sympy.sinh(t / 2) / (t / 2)), t, 0, 9).removeO()
    got = log_sinhc_coefficients(8)
    for k in (2, 4, 6, 8):
        c = ser.coeff(t, k)
        assert got[k] == Fraction(int(c.p), int(c.q))
    assert got[2] == Fraction(1, 24) and got[4] == Fraction(-1, 2880)


def test_sl2_log_J_is_killing_over_24():
    x1, x2, x3 = (Poly.var(3, i) for i in (1, 2, 3))
    J = duflo_J(SL2, 2)
    killing = x1 * x2 * 8 + x3 * x3 * 8
    assert J.log_J == killing * Fraction(1, 24)
    assert J.J_half == Poly.const(3, 1) + killing * Fraction(1, 48)


def test_nilpotent_and_abelian_have_trivial_J():
    for L in (duflo.heisenberg(), duflo.abelian(3)):
        assert duflo_J(L, 6).J == Poly.const(L.dim, 1)


def test_pbw_relations():
    e, f, h = (UEAElement.generator(SL2, i) for i in range(3))
    assert commutator(e, f) == h
    assert commutator(h, e) == e.scale(2)
    assert commutator(h, f) == f.scale(-2)
    assert repr(normal_order(SL2, [1, 0])) == "x1*x2 - x3"


words = st.lists(st.integers(0, 2), max_size=3)


@given(words, words, words)
def test_uea_associative(a, b, c):
    A, B, C = (normal_order(SL2, w) for w in (a, b, c))
    assert uea_product(uea_product(A, B), C) == uea_product(A, uea_product(B, C))


def test_sym_examples():
    assert repr(sym(SL2, parse_poly("x1*x2", 3))) == "x1*x2 - 1/2*x3"
    assert repr(sym(duflo.abelian(2), parse_poly("x1^2", 2))) == "x1^2"


def test_duflo_of_sl2_casimir():
    C = casimir(SL2)
    DC = duflo_map(SL2, C)
    assert repr(DC) == "4*x1*x2 + x3^2 - 2*x3 + 1"
    for i in range(3):
        assert not commutator(UEAElement.generator(SL2, i), DC)


def test_duflo_degree_guard():
    with pytest.raises(ValueError):
        duflo_map(SL2, parse_poly("x1^3", 3), D_max=2)


def test_invariants():
    inv = invariants(SL2, 2)
    assert len(inv) == 1
    C = casimir(SL2)
    ratio = next(iter(C.terms.values())) / inv[0].coefficient(next(iter(C.terms)))
    assert inv[0] * ratio == C
    assert invariants(SL2, 1) == []
    assert len(invariants(duflo.so3(), 4)) == 1
    assert len(invariants(duflo.abelian(2), 2)) == 3


def test_coinvariants():
    co = coinvariants_projection(SL2, 2)
    h = UEAElement.generator(SL2, 2)
    assert co.in_commutators(h)
    assert not co.in_commutators(UEAElement.scalar(SL2, 1))
    assert co.in_s_image(Poly.var(3, 3))
    assert not co.in_s_image(casimir(SL2))


@pytest.mark.parametrize("name", ["sl2", "so3", "heisenberg", "abelian"])
def test_duflo_theorem(name):
    rep = duflo.duflo_theorem_check(duflo.ALGEBRAS[name](), 4)
    assert rep["ok"], rep["failures"][:3]
    assert rep["checks"]["module"] > 0


def test_full_J_instead_of_square_root_breaks_the_algebra_map():
    # guards against the check being vacuous
    C = casimir(SL2)
    J = duflo_J(SL2, 4)
    wrong = lambda p: sym(SL2, duflo.act_by_derivatives(J.J, p))  # noqa: E731
    assert wrong(C * C) != uea_product(wrong(C), wrong(C))


def test_morphism_on_generators():
    from fkit.formality import TruncationPolicy, WeightTable, star
    table = WeightTable()
    S = star(kks_bivector(SL2), TruncationPolicy(order=1, samples=1 << 16), table)
    rep = duflo.morphism_I_check(SL2, S, table)
    for o in rep["orders"]:
        assert o["defect"] <= max(2e-2, 4 * o["error"])
