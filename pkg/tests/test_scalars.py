from fractions import Fraction
from types import SimpleNamespace

import pytest
from hypothesis import given, strategies as st

from fkit.algebra import Poly
from fkit.scalars import WeightPoly, scalar_value

names = st.sampled_from(["a", "b", "c"])
monos = st.lists(names, max_size=2).map(lambda xs: tuple(sorted(xs)))
wpolys = st.dictionaries(monos, st.integers(-4, 4), max_size=4).map(WeightPoly)


def est(v, e):
    return SimpleNamespace(value=v, std_error=e)


TABLE = {"a": est(0.5, 0.01), "b": est(-1.5, 0.02), "c": est(2.0, 0.0)}


@given(wpolys, wpolys, wpolys)
def test_ring_axioms(p, q, r):
    assert (p * q) * r == p * (q * r)
    assert p * (q + r) == p * q + p * r
    assert p - p == 0
    assert p * q == q * p


@given(wpolys, wpolys)
def test_evaluate_is_a_homomorphism(p, q):
    ev = lambda x: x.evaluate(TABLE)[0]
    assert ev(p * q) == pytest.approx(ev(p) * ev(q), abs=1e-9)
    assert ev(p + q) == pytest.approx(ev(p) + ev(q), abs=1e-9)


def test_linear_error_bound():
    a, b = WeightPoly.symbol("a"), WeightPoly.symbol("b")
    v, e = (a * b * 2).evaluate(TABLE)
    assert v == pytest.approx(-1.5)
    # |d/da| sa + |d/db| sb = 2*1.5*0.01 + 2*0.5*0.02
    assert e == pytest.approx(0.05)
    assert (a - a).evaluate(TABLE) == (0.0, 0.0)


def test_symbolic_cancellation_is_exact():
    a = WeightPoly.symbol("a")
    assert not (a * Fraction(1, 3) + a * Fraction(2, 3) - a)
    assert (a / 2 * 2) == a
    assert (a * a).symbols() == {"a"}


def test_scalar_value():
    assert scalar_value(Fraction(1, 4)) == (0.25, 0.0)
    with pytest.raises(ValueError):
        scalar_value(WeightPoly.symbol("a"))


def test_polys_over_weight_scalars():
    w = WeightPoly.symbol("a")
    p = Poly.var(2, 1) * w + Poly.var(2, 2)
    q = p * p
    # cross term 2*w*x1*x2 survives with a symbolic coefficient
    c = q.coefficient((1, 1))
    assert c == w * 2
