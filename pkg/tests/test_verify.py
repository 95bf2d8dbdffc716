import pytest

from fkit import verify
from fkit.formality import TruncationPolicy


def test_degree_filter_complete_small_domain():
    rep = verify.degree_filter_report(max_nm=2, max_val=3, time_limit=None)
    assert rep["complete"] and rep["violations"] == 0 and rep["checked"] > 10_000
    assert rep["ok"]


@pytest.mark.slow
def test_degree_filter_complete_valence_two():
    # every class with n, m <= 3 and valences <= 2, about a million graphs
    rep = verify.degree_filter_report(max_nm=3, max_val=2, time_limit=None)
    assert rep["complete"] and rep["violations"] == 0 and rep["checked"] > 1_000_000


def test_degree_filter_deadline_reports_partial_coverage():
    rep = verify.degree_filter_report(time_limit=0.2)
    assert not rep["complete"] and not rep["ok"]
    assert rep["violations"] == 0


def test_within():
    assert verify.within(1.0, 0.1, 1.25)
    assert not verify.within(1.0, 0.1, 1.35)


def test_monomials_up_to():
    assert len(verify.monomials_up_to(2, 2)) == 5
    assert len(verify.monomials_up_to(3, 2, start=0)) == 10


def test_run_suite_metadata_and_unknown():
    rep = verify.run_suite("duflo", TruncationPolicy(samples=1024))
    assert rep["suite"] == "duflo" and rep["ok"] and rep["seconds"] >= 0
    with pytest.raises(KeyError):
        verify.run_suite("nosuch")


def test_stratum_graphs_have_isolated_first_vertex():
    for g in verify.stratum_graphs():
        assert g.special and not g.stars[0]
        assert all(t.kind != "first" or t.index != 1 for star in g.stars for t in star)


def test_angle_probe_decay_is_linear():
    rep = verify.angle_probe_report()
    for r in rep["rows"]:
        if r["error"] > 1e-10:
            assert 30 < r["decay"] < 300, r
