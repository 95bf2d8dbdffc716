import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fkit import geometry as geo
from fkit.graphs import SPECIAL, First, Second, make_graph

upper = st.builds(complex, st.floats(-3, 3), st.floats(0.05, 3))
real = st.floats(-3, 3)


def fd(fn, t, h=1e-6):
    # angles jump by 2 pi across the branch cut
    d = fn(t + h) - fn(t - h)
    return ((d + math.pi) % (2 * math.pi) - math.pi) / (2 * h)


def test_angle_values():
    assert geo.angle(1j, 2j) == pytest.approx(0.0, abs=1e-15)
    assert geo.angle(1j, 1 + 1j) == pytest.approx(-math.atan2(2, 1))


@given(real, upper)
def test_angle_from_real_point_vanishes(x, q):
    if abs(q - x) > 1e-6:
        assert geo.angle(x, q) == pytest.approx(0.0, abs=1e-12)
        assert geo.dangle(x, q, 0.7, 1 - 2j) == pytest.approx(0.0, abs=1e-9)


@given(upper, upper, st.complex_numbers(max_magnitude=2), st.complex_numbers(max_magnitude=2))
def test_dangle_matches_finite_difference(p, q, dp, dq):
    if abs(p - q) < 0.2:
        return
    f = lambda t: geo.angle(p + t * dp, q + t * dq)
    assert float(geo.dangle(p, q, dp, dq)) == pytest.approx(fd(f, 0.0), abs=1e-6)


def test_coincident_points_rejected():
    with pytest.raises(geo.DegenerateConfiguration):
        geo.angle(1j, 1j)


def test_points_validate():
    with pytest.raises(ValueError):
        geo.HPoint(0.0, 0.0)
    with pytest.raises(ValueError):
        geo.RPoint(math.inf)


def test_omega_D_vanishes_for_real_q():
    assert geo.phi_D(0.3 + 1j, 0.5, -1 + 2j) == pytest.approx(0.0, abs=1e-12)


def test_psi_values():
    assert geo.mobius_psi(1j) == 0
    assert geo.mobius_psi(0) == -1
    assert geo.mobius_psi_inv(geo.mobius_psi(2 + 3j)) == pytest.approx(2 + 3j, abs=1e-12)


def test_psi_round_trip_sample():
    rng = np.random.default_rng(3)
    z = rng.uniform(-5, 5, 10_000) + 1j * rng.uniform(1e-3, 5, 10_000)
    assert np.max(np.abs(geo.mobius_psi_inv(geo.mobius_psi(z)) - z)) < 1e-12


def test_disk_config_rules():
    geo.DiskConfig.from_angles([0.3j], [0.0, 1.0, 2.0])
    with pytest.raises(ValueError):
        geo.DiskConfig((0.3j,), (1j, 1))
    with pytest.raises(ValueError):
        geo.DiskConfig.from_angles([0.3j], [0.0, 2.0, 1.0])
    with pytest.raises(ValueError):
        geo.DiskConfig((0j,), (1,))


def test_shoikhet_zero_forms():
    g = make_graph(1, 2, [["0", "b2"], ["b1", "b2"]], special=True)
    cfg = geo.DiskConfig.from_angles([0.2 + 0.3j], [0.0, 2.0])
    for e in [(First(1), SPECIAL), (SPECIAL, Second(1))]:
        assert geo.shoikhet_edge_form(g, e, cfg, [0.4 - 1j], [0.0, 0.9]) == 0.0


def test_special_edge_is_transported_angle():
    # Special -> b2: the plain angle form at i, transported through psi^-1
    g = make_graph(0, 2, [["b2"]], special=True)
    theta = 2.0
    cfg = geo.DiskConfig.from_angles([], [0.0, theta])
    got = geo.shoikhet_edge_form(g, (SPECIAL, Second(2)), cfg, [], [0.0, 1.0])
    q = lambda t: float(np.real(geo.mobius_psi_inv(np.exp(1j * t))))
    assert got == pytest.approx(fd(lambda t: geo.angle(1j, q(t)), theta), abs=1e-8)


def test_aerial_edge_matches_finite_difference():
    g = make_graph(1, 2, [["b2"], []], special=True)
    w, dw = 0.3 + 0.2j, 0.5 - 0.4j
    cfg = geo.DiskConfig.from_angles([w], [0.0, 2.5])
    got = geo.shoikhet_edge_form(g, (First(1), Second(2)), cfg, [dw], [0.0, 0.0])
    q = float(np.real(geo.mobius_psi_inv(np.exp(2.5j))))
    f = lambda t: geo.phi_D(1j, complex(geo.mobius_psi_inv(w + t * dw)), q)
    assert got == pytest.approx(fd(f, 0.0), abs=1e-7)


@pytest.mark.parametrize("space,n,m,dim", [("C", 2, 0, 2), ("D", 1, 1, 2), ("C", 0, 3, 1), ("C", 1, 2, 2),
                                           ("D", 2, 3, 6)])
def test_chart_dimensions(space, n, m, dim):
    assert geo.gauge_chart(space, n, m).dim == dim


def test_chart_C03_orders_boundary():
    chart = geo.gauge_chart("C", 0, 3)
    pts = geo.embed(chart, np.random.default_rng(0).random((500, 1)))
    q = [pts.pos[Second(k)].real for k in (1, 2, 3)]
    assert np.all(q[0] < q[1]) and np.all(q[1] < q[2])


def test_chart_points_are_distinct():
    chart = geo.gauge_chart("C", 2, 0)
    pts = geo.embed(chart, np.random.default_rng(1).random((2000, 2)))
    assert pts.valid.all()
    assert np.all(np.abs(pts.pos[First(1)] - pts.pos[First(2)]) > 0)


def test_chart_rejects_bad_input():
    with pytest.raises(ValueError):
        geo.gauge_chart("C", 0, 1)
    with pytest.raises(ValueError):
        geo.embed(geo.gauge_chart("C", 1, 2), np.array([[0.5, 1.5]]))


@pytest.mark.parametrize("space,n,m", [("C", 1, 2), ("C", 1, 3), ("D", 1, 2), ("C", 2, 0)])
def test_embed_jacobian_matches_finite_difference(space, n, m):
    chart = geo.gauge_chart(space, n, m)
    x = np.random.default_rng(2).uniform(0.2, 0.8, (1, chart.dim))
    pts = geo.embed(chart, x)
    for v, J in pts.jac.items():
        for k in range(chart.dim):
            e = np.zeros_like(x)
            e[0, k] = 1e-6
            num = (geo.embed(chart, x + e).pos[v] - geo.embed(chart, x - e).pos[v]) / 2e-6
            assert J[0, k] == pytest.approx(num[0], rel=1e-5, abs=1e-6)


def test_chart_volume_of_disk():
    # the one-point D_{1,1} chart covers the disk: integrate the area density
    chart = geo.gauge_chart("D", 1, 1)
    x = np.random.default_rng(4).random((200_000, 2))
    z = geo.embed(chart, x).pos[First(1)]
    w = geo.mobius_psi(z)
    jac = geo.jacobian(chart, x) * np.abs(2j / (z + 1j) ** 2) ** 2
    assert np.mean(jac * (np.abs(w) < 1)) == pytest.approx(math.pi, rel=2e-2)


@pytest.mark.parametrize("item", ["i", "ii"])
def test_omega_lemma_probes(item):
    assert geo.omega_limit_probe(item, 1e-4) < 1e-3
    assert geo.omega_limit_probe(item, 1e-2) > 10 * geo.omega_limit_probe(item, 1e-4)


@pytest.mark.parametrize("item", ["i", "ii", "iii", "iv", "iv-h", "v", "vi"])
def test_omega_D_lemma_probes(item):
    assert geo.omega_D_limit_probe(item, 1e-4) < 1e-3


def test_unknown_probe_item():
    with pytest.raises(ValueError):
        geo.omega_D_limit_probe("vii", 1e-3)
