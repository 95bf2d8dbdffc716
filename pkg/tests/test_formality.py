import warnings
from fractions import Fraction

import pytest

from fkit.algebra import DiffForm, HochschildChain, Poly, PolyDiffOp, PolyVectorField, hkr_chain, lie_derivative
from fkit.formality import (TruncationPolicy, WeightTable, calibrate, check_jacobi, constant_pi, homotopy_residual,
                            star, taylor_S, taylor_U, u_gamma_graph, weight_symbol)
from fkit.graphs import make_graph
from fkit.scalars import WeightPoly, scalar_value

x, y = Poly.var(2, 1), Poly.var(2, 2)
FAST = dict(samples=1 << 15)


def val(c, table):
    return scalar_value(c, table)


def test_policy_validation():
    with pytest.raises(ValueError):
        TruncationPolicy(order=-1)
    with pytest.raises(ValueError):
        TruncationPolicy(samples=0)
    with pytest.raises(ValueError):
        TruncationPolicy(abs_tol=0)


def test_wedge_operator_is_the_bracket():
    g = make_graph(1, 2, [["b1", "b2"]])
    f, h = x * x * y, x * y * y * y
    want = f.diff(0) * h.diff(1) - f.diff(1) * h.diff(0)
    assert u_gamma_graph(g, [constant_pi(2)], [f, h]) == want


def test_taylor_U0_is_the_product():
    assert taylor_U(0, constant_pi(2), TruncationPolicy(**FAST)) == PolyDiffOp.mu(2)


def test_weight_symbol_sign_follows_star_order():
    pol = TruncationPolicy(**FAST)
    table = WeightTable()
    a = weight_symbol(make_graph(2, 1, [["b1", "v2"], ["b1"]]), pol, table)
    b = weight_symbol(make_graph(2, 1, [["v2", "b1"], ["b1"]]), pol, table)
    assert isinstance(a, WeightPoly) and a == -b
    w = weight_symbol(make_graph(1, 2, [["b1", "b2"]]), pol, table)
    assert val(w, table)[0] == pytest.approx(0.5, abs=5e-3)


def test_weight_symbol_budget():
    from fkit.graphs import CapacityError
    with pytest.raises(CapacityError):
        weight_symbol(make_graph(2, 2, [["b1", "b2"], ["b1", "b2"]]), TruncationPolicy(max_size=3), WeightTable())


def test_unit_is_exact():
    S = star(constant_pi(2), TruncationPolicy(order=2, **FAST))
    one = Poly.const(2, 1)
    s = S.star(one, x * y * y)
    assert s[0] == x * y * y and not s[1] and not s[2]


def test_constant_pi_order_two_matches_moyal():
    table = WeightTable()
    S = star(constant_pi(2), TruncationPolicy(order=2, samples=1 << 17), table)
    f, g = x * x, y * y
    s = S.star(f, g)
    assert s[0] == x * x * y * y
    v1, e1 = val(s[1].coefficient((1, 1)), table)
    assert v1 == pytest.approx(4, abs=max(2e-2, 4 * e1))
    # hbar^2: (1/2) pi^{ij} pi^{kl} d_i d_k f d_j d_l g = 2
    v2, e2 = val(s[2].coefficient((0, 0)), table)
    assert v2 == pytest.approx(2, abs=max(5e-2, 4 * e2))


def test_check_jacobi():
    d = 3
    x1, x3 = Poly.var(d, 1), Poly.var(d, 3)
    assert check_jacobi(PolyVectorField(d, 2, {(0, 1): x3}))
    bad = PolyVectorField(d, 2, {(0, 1): x3, (1, 2): Poly.const(d, 1), (0, 2): x1})
    with pytest.warns(UserWarning):
        assert not check_jacobi(bad)


def test_star_needs_bivector():
    with pytest.raises(ValueError):
        star(PolyVectorField(2, 1, {(0,): 1}), TruncationPolicy(**FAST))


def test_calibration():
    rep = calibrate(TruncationPolicy(samples=1 << 17))
    assert rep["ok"]
    assert rep["measured_kappa"] == pytest.approx(1.0, abs=2e-2)


def test_shoikhet_order_zero_is_hkr():
    table = WeightTable()
    pol = TruncationPolicy(samples=1 << 16)
    c = HochschildChain.of(x + y * y, x * y)
    got = taylor_S(0, constant_pi(2), c, pol, table)
    want = hkr_chain(c)
    for I in set(got.comps) | set(want.comps):
        diff = got.comps.get(I, Poly.zero(2)) - want.comps.get(I, Poly.zero(2))
        for coef in diff.terms.values():
            v, e = val(coef, table)
            assert abs(v) <= max(2e-2, 4 * e)


def test_homotopy_residual_of_exact_image_is_zero():
    d = 3
    x1, x2, x3 = (Poly.var(d, i) for i in (1, 2, 3))
    pi = PolyVectorField(d, 2, {(0, 1): x3, (0, 2): x1 * -2, (1, 2): x2 * 2})
    eta = DiffForm(d, 2, {(0, 1): x1 * x2, (1, 2): x3})
    delta = lie_derivative(pi, eta)
    assert homotopy_residual(delta, pi, 2, {}) < 1e-9
    # on functions the image is spanned by brackets {x_i, f}, which keep the
    # degree of f for linear pi, so constants are never hit
    assert homotopy_residual(DiffForm(d, 0, {(): Fraction(1)}), pi, 2, {}) > 0.1


def test_cap_compatibility_nondegenerate_case():
    # here the hbar^1 defect is twice a single Shoikhet weight, which must vanish
    from fkit.formality import cap_report
    from fkit.verify import sl2_pi
    X = [Poly.var(3, i) for i in (1, 2, 3)]
    alpha = PolyVectorField(3, 1, {(0,): X[1], (2,): Poly.const(3, 1)})
    rep = cap_report(alpha, HochschildChain.of(X[0], X[1]), sl2_pi(), TruncationPolicy(order=1))
    assert "S1.2|b1,b2;v1" in rep["delta"][1]
    o = rep["orders"][1]
    assert o["delta_max"] <= 4 * o["error"]
    assert rep["ok"]
