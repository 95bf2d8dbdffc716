import itertools
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from fkit.algebra import (DiffForm, HbarSeries, HochschildChain, Poly, PolyDiffOp, PolyVectorField,
                          cochain_cap_chain, cochain_cup, contract, format_poly, hkr_chain, hkr_cochain,
                          hochschild_b, hochschild_d, lie_derivative, parse_poly, schouten, schouten_sn,
                          series_product, sort_sign, wedge)

D = 3
exps = st.tuples(*[st.integers(0, 2)] * D)
coefs = st.integers(-3, 3).map(Fraction)
polys = st.dictionaries(exps, coefs, max_size=4).map(lambda t: Poly(D, t))
small_polys = st.dictionaries(st.tuples(*[st.integers(0, 1)] * D), coefs, max_size=3).map(lambda t: Poly(D, t))


def polyvectors(k):
    idx = st.tuples(*[st.integers(0, D - 1)] * k) if k else st.just(())
    return st.dictionaries(idx, small_polys, max_size=3).map(lambda c: PolyVectorField(D, k, c))


def forms(l):
    idx = st.tuples(*[st.integers(0, D - 1)] * l) if l else st.just(())
    return st.dictionaries(idx, small_polys, max_size=3).map(lambda c: DiffForm(D, l, c))


ops1 = st.dictionaries(st.tuples(st.tuples(*[st.integers(0, 1)] * D)), small_polys, max_size=3).map(
    lambda t: PolyDiffOp(D, 1, t))
x1, x2, x3 = (Poly.var(D, i) for i in (1, 2, 3))
ONE = Poly.const(D, 1)


# -- polynomials --------------------------------------------------------------------

@given(polys, polys, polys)
def test_ring_axioms(a, b, c):
    assert (a * b) * c == a * (b * c)
    assert a * (b + c) == a * b + a * c
    assert a + b == b + a
    assert (a - a).terms == {}
    assert all(v != 0 for v in (a * b).terms.values())


@given(polys, polys)
def test_leibniz(a, b):
    assert (a * b).diff(0) == a.diff(0) * b + a * b.diff(0)


def test_parse_and_format():
    p = parse_poly("x1^2*x3 - 2*x2 + 1/2", 3)
    assert p == x1 * x1 * x3 - x2 * 2 + Poly.const(3, Fraction(1, 2))
    assert format_poly(parse_poly("x1^2", 1)) == "x1^2"
    with pytest.raises(ValueError):
        parse_poly("sin(x1)", 1)


def test_evaluate_is_exact():
    assert parse_poly("x1*x2 + 1/3", 2).evaluate([Fraction(1, 2), 4]) == Fraction(7, 3)


def test_series_product_truncates():
    a = HbarSeries([ONE, x1], Poly.zero(D))
    out = series_product(a, a, lambda p, q: p * q, Poly.zero(D))
    assert out.order == 1
    assert out[1] == x1 * 2


# -- polyvectors and forms ------------------------------------------------------------

def test_sort_sign():
    assert sort_sign((1, 0)) == (-1, (0, 1))
    assert sort_sign((1, 1))[0] == 0


def test_wedge_of_coordinate_vectors():
    d1 = PolyVectorField(2, 1, {(0,): 1})
    d2 = PolyVectorField(2, 1, {(1,): 1})
    w = wedge(d1, d2)
    assert list(w.comps) == [(0, 1)]
    assert w.component((1, 0)) == Poly.const(2, -1)


def test_schouten_examples():
    d1 = PolyVectorField(2, 1, {(0,): 1})
    X = PolyVectorField(2, 1, {(0,): Poly.var(2, 1)})
    assert schouten_sn(d1, X) == d1
    assert schouten(d1, X) == -schouten_sn(X, d1)
    pi = PolyVectorField(2, 2, {(0, 1): 1})
    assert not schouten(pi, pi).comps


@given(polyvectors(1), polyvectors(1))
def test_modified_bracket_on_vector_fields_is_lie_bracket(a, b):
    f = x1 * x2 + x3 * x3
    # a(f) = sum a^i d_i f
    act = lambda v, g: sum((v.component((i,)) * g.diff(i) for i in range(D)), Poly.zero(D))
    assert act(schouten(a, b), f) == act(a, act(b, f)) - act(b, act(a, f))


@settings(max_examples=25)
@given(polyvectors(1), polyvectors(2), polyvectors(2))
def test_sn_graded_antisymmetry_and_jacobi(a, b, c):
    def sgn(k, l):
        return -1 if ((k - 1) * (l - 1)) % 2 else 1

    assert schouten_sn(a, b) == -schouten_sn(b, a) * sgn(1, 2)
    # graded Jacobi: [a,[b,c]] = [[a,b],c] + (-1)^{(|a|-1)(|b|-1)} [b,[a,c]]
    lhs = schouten_sn(a, schouten_sn(b, c))
    rhs = schouten_sn(schouten_sn(a, b), c) + schouten_sn(b, schouten_sn(a, c)) * sgn(1, 2)
    assert lhs == rhs


def test_contract_by_function_is_multiplication():
    w = DiffForm(D, 1, {(0,): x2})
    f = PolyVectorField.function(x3)
    assert contract(f, w) == DiffForm(D, 1, {(0,): x2 * x3})


def test_lie_derivative_sl2_hand_expansion():
    pi = PolyVectorField(D, 2, {(0, 1): x3, (0, 2): x1 * -2, (1, 2): x2 * 2})
    w = DiffForm(D, 2, {(0, 1): 1})
    # iota_pi(dx1^dx2) = 2 pi^{12} = 2 x3 in the full-tuple convention
    assert lie_derivative(pi, w) == DiffForm(D, 1, {(2,): 2})
    assert not lie_derivative(pi, DiffForm(D, 1, {(0,): 1})).comps


@given(small_polys, polyvectors(1), forms(2))
def test_cartan_relation(f, g, w):
    fg = PolyVectorField(D, 1, {k: v * f for k, v in g.comps.items()})
    lhs = lie_derivative(fg, w)
    rhs = DiffForm(D, w.deg, {k: v * f for k, v in lie_derivative(g, w).comps.items()})
    rhs = rhs + DiffForm.exact(f).wedge(contract(g, w))
    assert lhs == rhs


@given(forms(1))
def test_d_squared(w):
    assert not w.d_ext().d_ext().comps


# -- operators, chains and the HKR maps --------------------------------------------------

def test_hkr_cochain_bivector():
    pi = PolyVectorField(2, 2, {(0, 1): 1})
    f, g = parse_poly("x1^2*x2", 2), parse_poly("x1*x2^3", 2)
    want = f.diff(0) * g.diff(1) - f.diff(1) * g.diff(0)
    assert hkr_cochain(pi).apply(f, g) == want


def test_hkr_chain_examples():
    a = parse_poly("x1 + x2^2", 2)
    assert hkr_chain(HochschildChain.of(a)) == DiffForm.function(a)
    x, y = Poly.var(2, 1), Poly.var(2, 2)
    assert hkr_chain(HochschildChain.of(x, y)) == DiffForm(2, 1, {(1,): x})


@settings(max_examples=30)
@given(small_polys, small_polys, small_polys, small_polys)
def test_hkr_kills_boundaries(a, b, c, e):
    for ch in (HochschildChain.of(a, b, c), HochschildChain.of(a, b, c, e)):
        assert not hkr_chain(hochschild_b(ch)).comps


@settings(max_examples=100)
@given(small_polys, small_polys, small_polys, small_polys)
def test_b_squared_zero(a, b, c, e):
    assert not hochschild_b(HochschildChain.of(a, b)).terms
    assert not hochschild_b(hochschild_b(HochschildChain.of(a, b, c, e))).terms


@settings(max_examples=100)
@given(ops1, small_polys, small_polys, small_polys)
def test_classical_dH(phi, a, b, c):
    d1 = hochschild_d(phi)[0]
    assert d1.apply(a, b) == a * phi.apply(b) - phi.apply(a * b) + phi.apply(a) * b
    assert not hochschild_d(d1)[0].apply(a, b, c).terms


def test_cap_examples():
    phi = PolyDiffOp(D, 1, {((1, 0, 0),): ONE})
    a0, a1, a2 = x2, x1 * x3, x3
    assert cochain_cap_chain(phi, HochschildChain.of(a0, a1)) == HochschildChain.of(a0 * phi.apply(a1))
    mu = PolyDiffOp.mu(D)
    assert not cochain_cap_chain(mu, HochschildChain.of(a0, a1)).terms
    ident = PolyDiffOp.identity(D)
    assert cochain_cap_chain(ident, HochschildChain.of(a0, a1, a2)) == HochschildChain.of(a0 * a1, a2)


def test_cup_of_identities_is_the_product():
    from fkit.algebra import StarAlgebra
    S = StarAlgebra(D, [PolyDiffOp.zero(D, 2)])
    ident = PolyDiffOp.identity(D)
    cup = cochain_cup(ident, ident, S)[0]
    assert cup.apply(x1, x2 + x3) == x1 * (x2 + x3)


def test_polydiffop_validation():
    with pytest.raises(ValueError):
        PolyDiffOp(D, 1, {((1, 0),): ONE})
    with pytest.raises(ValueError):
        PolyDiffOp.identity(D).apply(x1, x2)


def test_chain_expansion_is_multilinear():
    c = HochschildChain.of(x1 + x2, x3)
    assert c == HochschildChain.of(x1, x3) + HochschildChain.of(x2, x3)
