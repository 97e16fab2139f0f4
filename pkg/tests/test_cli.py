import json
import subprocess
import sys

import pytest

from ivregime.cli import main
from ivregime.estimands import EstimandTable
from ivregime.conditions import ConditionReport
from ivregime.scm import ScmSpec


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_check_eq4_on_spec_a(capsys, data_dir):
    code, out, _ = run(capsys, "check", "--spec", data_dir / "spec_a.json", "--condition", "eq4_nec_suf")
    assert code == 0
    doc = json.loads(out)
    assert doc["satisfied"] and doc["strata"]["l0"]["diagnostic"] == pytest.approx(10.0, abs=1e-12)
    rep = ConditionReport.from_dict(doc)
    assert rep.condition_name == "eq4_nec_suf" and rep["l0"].satisfied


def test_check_all_and_unknown_condition(capsys, data_dir):
    code, out, _ = run(capsys, "check", "--spec", data_dir / "spec_a.json")
    assert code == 0 and set(json.loads(out)) >= {"han_a", "cui_a7", "eq4_nec_suf"}
    code, _, err = run(capsys, "check", "--spec", data_dir / "spec_a.json", "--condition", "nope")
    assert code == 3 and "nope" in err


def test_exit_codes(capsys, tmp_path, data_dir):
    assert run(capsys, "check", "--spec", tmp_path / "missing.json")[0] == 1
    bad = tmp_path / "bad.json"
    bad.write_text('{"strata": []}')
    assert run(capsys, "validate", "--spec", bad)[0] == 1
    assert run(capsys, "bounds", "--spec", data_dir / "spec_a.json")[0] == 1
    assert run(capsys, "estimate", "--spec", data_dir / "spec_a.json")[0] == 3
    assert run(capsys, "simulate", "--spec", data_dir / "spec_a.json", "--n", "0", "--seed", "1")[0] == 3
    assert run(capsys, "frobnicate")[0] == 3
    code, _, err = run(capsys, "search", "--predicate", "cui_a7 AND NOT eq4_nec_suf", "--budget", 200, "--seed", 0)
    assert code == 2 and err.startswith("not found")
    assert run(capsys, "search", "--predicate", "han_a AND", "--budget", 5, "--seed", 0)[0] == 3


def test_undefined_estimate_exit(capsys, tmp_path):
    data = tmp_path / "d.csv"
    data.write_text("y,l,a,z\n1.0,l0,1,1\n0.0,l0,-1,1\n")
    code, out, _ = run(capsys, "estimate", "--data", data, "--method", "wald_sign")
    assert code == 0 and "Z-arm" in json.loads(out)["errors"]["wald_sign"]


def test_estimands_round_trip(capsys, data_dir):
    code, out, _ = run(capsys, "estimands", "--spec", data_dir / "spec_b.json")
    table = EstimandTable.from_dict(json.loads(out))
    assert table["l0"].wald == pytest.approx(-2.0, abs=1e-12)
    code, out, _ = run(capsys, "estimands", "--spec", data_dir / "spec_b.json", "--format", "csv")
    assert code == 0 and out.splitlines()[0].startswith("stratum,gamma,delta,c,wald")


def test_search_writes_spec_and_sidecar(capsys, tmp_path):
    out = tmp_path / "w.json"
    code, _, _ = run(capsys, "search", "--predicate", "eq4_nec_suf AND NOT han_a AND NOT cui_a7",
                     "--budget", 1000, "--seed", 0, "--out", out)
    assert code == 0
    spec = ScmSpec.from_json(out.read_text())
    side = json.loads((tmp_path / "w.conditions.json").read_text())
    assert side["found"] and side["draw_index"] is not None
    code, doc, _ = run(capsys, "check", "--spec", out, "--condition", "han_a")
    assert not json.loads(doc)["satisfied"] and len(spec.strata) >= 1


def test_report_schema(capsys, data_dir):
    code, out, _ = run(capsys, "report", "--spec", data_dir / "spec_bin.json")
    doc = json.loads(out)
    assert code == 0 and doc["schema_version"] == 1
    assert [r["quantity_identified"] for r in doc["table1"]] == ["value_function", "cate", "sign_of_cate"]
    assert doc["bounds"]["l0"]["lower"] == pytest.approx(0.5, abs=1e-10)
    assert doc["implication_audit"]["passed"]


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", "--spec", "spec_a.json", "--n", "9000", "--seed", "5", "--keep-latent"],
        ["estimate", "--spec", "spec_a.json", "--n", "9000", "--seed", "5", "--replications", "2"],
        ["search", "--predicate", "NOT eq4_nec_suf AND sign_mismatch", "--budget", "300", "--seed", "2"],
    ],
)
def test_byte_identical_across_runs_and_workers(capsys, data_dir, argv):
    argv = [str(data_dir / a) if a.endswith(".json") else a for a in argv]
    outs = []
    for extra in ([], [], ["--workers", "2"]):
        code, out, _ = run(capsys, *argv, *extra)
        assert code == 0
        outs.append(out)
    assert outs[0] == outs[1] == outs[2]


def test_console_script_entry(data_dir):
    proc = subprocess.run(
        [sys.executable, "-m", "ivregime.cli", "classify", "--spec", str(data_dir / "spec_a.json")],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0
    levels = {r["level"]: r for r in json.loads(proc.stdout)["levels"]}
    assert levels["sign_of_cate"]["identified"] and not levels["cate"]["identified"]
