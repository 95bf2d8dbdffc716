import csv
import json
import subprocess
import sys

import pytest

from fkit import cli
from fkit.graphs import make_graph


@pytest.fixture(autouse=True)
def _private_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("FKIT_CACHE", str(tmp_path / "weights.jsonl"))


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_weight_by_key_is_deterministic(capsys):
    args = ("weight", "K1.2|b1,b2", "--samples", "16384", "--seed", "3")
    c1, o1, _ = run(capsys, *args)
    c2, o2, _ = run(capsys, *args)
    assert c1 == c2 == 0 and o1 == o2
    rec = json.loads(o1)
    assert rec["value"] == pytest.approx(0.5, abs=1e-2)
    assert rec["seed"] == 3 and not rec["exact"]


def test_weight_from_file_and_exact_zero(capsys, tmp_path):
    g = make_graph(1, 2, [["b1"]])
    p = tmp_path / "g.json"
    p.write_text(g.to_json())
    code, out, _ = run(capsys, "weight", str(p))
    assert code == 0
    rec = json.loads(out)
    assert rec["value"] == 0 and rec["exact"]


def test_weight_invalid_graph_exits_2(capsys):
    code, _, err = run(capsys, "weight", "K1.2|b1,b1")
    assert code == 2
    assert json.loads(err)["error"] in ("invalid-graph", "parse")
    code, _, err = run(capsys, "weight", "nonsense")
    assert code == 2 and json.loads(err)["exit_code"] == 2


def test_weight_budget_exits_3(capsys):
    code, _, err = run(capsys, "weight", "K4.3|b1,b2,b3;b1,b2;b1,b2;b1,b2")
    assert code == 3
    assert json.loads(err)["error"] == "budget"


def test_corrupt_cache_exits_2(capsys, tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{not json\n")
    code, _, err = run(capsys, "weight", "K1.2|b1,b2", "--cache", str(bad))
    assert code == 2 and json.loads(err)["error"] == "cache"


def test_star_constant_with_csv(capsys, tmp_path):
    out_csv = tmp_path / "t.csv"
    code, out, _ = run(capsys, "star", "constant", "x1", "x2", "--order", "1", "--samples", "16384",
                       "--csv", str(out_csv))
    assert code == 0
    rep = json.loads(out)
    assert rep["text"].startswith("x1*x2 + ħ*(1")
    rows = list(csv.reader(out_csv.open()))
    assert rows[0] == ["order", "monomial", "value", "error"]
    assert any(r[0] == "1" for r in rows[1:])


def test_star_custom_bivector_and_out_file(capsys, tmp_path):
    spec = tmp_path / "pi.json"
    spec.write_text(json.dumps({"dim": 3, "bivector": {"1,2": "x3"}}))
    dest = tmp_path / "o.json"
    code, out, _ = run(capsys, "star", str(spec), "x1", "x2", "--order", "1", "--samples", "8192",
                       "--out", str(dest))
    assert code == 0 and out == ""
    assert json.loads(dest.read_text())["order"] == 1


def test_star_parse_error(capsys):
    code, _, err = run(capsys, "star", "constant", "sin(x1)", "x2")
    assert code == 2


def test_duflo_command(capsys):
    code, out, _ = run(capsys, "duflo", "sl2", "4*x1*x2 + x3^2")
    assert code == 0 and out.strip() == "4*x1*x2 + x3^2 - 2*x3 + 1"
    code, out, _ = run(capsys, "duflo", "abelian", "x1^2")
    assert out.strip() == "x1^2"
    code, _, _ = run(capsys, "duflo", "nosuch", "x1")
    assert code == 2


def test_verify_pass_and_unknown_suite(capsys):
    code, out, _ = run(capsys, "verify", "duflo", "sl2", "--samples", "8192")
    assert code == 0 and json.loads(out)["ok"]
    code, _, err = run(capsys, "verify", "nosuch")
    assert code == 2 and "choices" in json.loads(err)


def test_verify_failure_exits_4(capsys, monkeypatch):
    monkeypatch.setattr(cli.verify, "SUITES", cli.verify.SUITES + ("always_bad",))
    monkeypatch.setattr(cli.verify, "run_suite", lambda name, policy: {"suite": name, "ok": False})
    code, _, err = run(capsys, "verify", "always_bad")
    assert code == 4 and json.loads(err)["error"] == "verification-failed"


def test_bad_policy_exits_2(capsys):
    code, _, err = run(capsys, "weight", "K1.2|b1,b2", "--order", "-1")
    assert code == 2


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "fkit.cli", "duflo", "heisenberg", "x1*x2"],
                         capture_output=True, text=True, env={"FKIT_CACHE": str(tmp_path / "c"), "PATH": ""})
    assert res.returncode == 0, res.stderr
    assert res.stdout.strip() == "x1*x2 - 1/2*x3"
