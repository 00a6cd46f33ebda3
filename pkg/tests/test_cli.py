import json
import shutil

import jsonschema
import pytest

from lieforge.cli import EXIT_CONFIG, EXIT_OK, EXIT_UNEXPECTED, SCHEMA_PATH, main
from lieforge.fixtures import FIXTURE_ENV, fixture_dir

SCHEMA = json.loads(SCHEMA_PATH.read_text(encoding="utf-8"))


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def run_json(capsys, *argv):
    code, out, _ = run(capsys, *argv, "--format", "json")
    rep = json.loads(out)
    jsonschema.validate(rep, SCHEMA)
    return code, rep


@pytest.fixture
def fixture_copy(tmp_path, monkeypatch):
    dst = tmp_path / "fx"
    shutil.copytree(fixture_dir(), dst)
    monkeypatch.setenv(FIXTURE_ENV, str(dst))
    return dst


def test_prolong_first_order(capsys):
    code, out, _ = run(capsys, "prolong", "v1", "--order", "1")
    assert code == EXIT_OK
    assert "eta[u_x] = -2*u_x" in out and "eta[u_t] = -3*u_t" in out


def test_prolong_json(capsys):
    code, rep = run_json(capsys, "prolong", "v5", "--order", "2")
    assert code == EXIT_OK and rep["command"] == "prolong"
    keys = {it["key"] for it in rep["items"]}
    assert "eta[u_xx]" in keys


@pytest.mark.parametrize("argv", [
    ("prolong", "nope"),
    ("prolong", "v1", "--params", "e=1"),
    ("prolong", "v1", "--params", "a=1,b=1,c=1,d=1"),
    ("prolong", "v1", "--spec", "mu=1"),
    ("orbit", "S1c", "--spec", "lambda=generic"),
    ("reduce", "NOPE"),
    ("verify", "S9"),
])
def test_config_and_lookup_errors_exit_two(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == EXIT_CONFIG and out == "" and err.startswith("lieforge:")


def test_bad_config_path(capsys, tmp_path):
    code, _, err = run(capsys, "table", "--config", str(tmp_path / "missing.ini"))
    assert code == EXIT_CONFIG and "config" in err


def test_check_symmetries_and_negative_control(capsys):
    assert run(capsys, "check", "v1", "v2", "v3")[0] == EXIT_OK
    code, rep = run_json(capsys, "check", "x_dy")
    assert code == EXIT_UNEXPECTED and rep["status"] == "unexpected"


def test_default_table(capsys):
    code, rep = run_json(capsys, "table")
    assert code == EXIT_OK
    assert len(rep["items"]) == 36
    assert all(it["verdict"] == "ok" for it in rep["items"])


def test_single_field_table(capsys):
    code, rep = run_json(capsys, "table", "v5")
    assert code == EXIT_OK and len(rep["items"]) == 1


def test_generic_table_flags_out_of_span(capsys):
    code, rep = run_json(capsys, "table", "--spec", "lambda=generic,gamma=generic")
    assert any(it["verdict"] == "unlisted" for it in rep["items"])
    assert any(it["status"] == "fail" for it in rep["items"])


def test_reduce_compare(capsys):
    assert run(capsys, "reduce", "A51", "--compare", "R51")[0] == EXIT_OK
    assert run(capsys, "reduce", "A51", "A51c1", "--compare", "R51c1")[0] == EXIT_UNEXPECTED


def test_verify(capsys):
    assert run(capsys, "verify", "S1c", "S5", "G_cubic")[0] == EXIT_OK
    assert run(capsys, "verify", "S1")[0] == EXIT_UNEXPECTED


def test_orbit_printed(capsys):
    code, rep = run_json(capsys, "orbit", "S1c", "--printed", "--flow", "1", "--flow", "4")
    assert code == EXIT_OK and len(rep["items"]) == 2


def test_text_and_json_agree(capsys):
    argv = ("audit", "--section", "table", "--section", "catalog")
    code_t, text, _ = run(capsys, *argv)
    code_j, rep = run_json(capsys, *argv)
    assert code_t == code_j
    lines = [ln.split() for ln in text.splitlines()[1:-1]]
    assert [(ln[0], ln[1], ln[2]) for ln in lines] == [
        (it["status"], it["verdict"], it["key"]) for it in rep["items"]]


def test_audit_is_deterministic(capsys, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    argv = ("audit", "--section", "solutions", "--format", "json")
    assert main([*argv, "--out", str(a), "--workers", "1"]) == EXIT_OK
    assert main([*argv, "--out", str(b), "--workers", "4"]) == EXIT_OK
    assert a.read_text() == b.read_text()


def test_full_audit(capsys):
    code, rep = run_json(capsys, "audit")
    assert code == EXIT_OK and rep["summary"]["ok"]
    assert rep["summary"]["items"] == 147


def test_corrupted_manifest_exits_one(capsys, fixture_copy):
    path = fixture_copy / "manifest.json"
    man = json.loads(path.read_text())
    man["items"]["determining/v1"]["status"] = "fail"
    path.write_text(json.dumps(man))
    code, rep = run_json(capsys, "audit", "--section", "determining")
    assert code == EXIT_UNEXPECTED
    bad = [it for it in rep["items"] if it["verdict"] == "unexpected"]
    assert [it["key"] for it in bad] == ["determining/v1"]


def test_missing_fixture_exits_two(capsys, fixture_copy):
    (fixture_copy / "cbs.lie").unlink()
    assert run(capsys, "audit", "--section", "table")[0] == EXIT_CONFIG


def test_broken_fixture_reports_location(capsys, fixture_copy):
    path = fixture_copy / "cbs.lie"
    path.write_text(path.read_text().replace("field x_dy: (x)*Dy", "field x_dy: (x)*Dy +"))
    code, _, err = run(capsys, "table")
    assert code == EXIT_CONFIG and "parse error" in err
