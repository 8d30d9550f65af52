import csv
import io
import json

import pytest

from eipsim import cli, core


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_simulate_csv_deterministic(capsys):
    code, a, _ = run(capsys, "simulate", "--seed", "5", "--trials", "500")
    _, b, _ = run(capsys, "simulate", "--seed", "5", "--trials", "500")
    assert code == 0 and a == b
    rows = list(csv.DictReader(io.StringIO(a)))
    assert list(rows[0]) == cli.SIM_COLUMNS
    assert rows[0]["trials"] == "500"


def test_zero_trials_gives_empty_table(capsys):
    code, out, _ = run(capsys, "simulate", "--seed", "1", "--trials", "0")
    assert code == 0 and out.strip() == ",".join(cli.SIM_COLUMNS)
    code, out, _ = run(capsys, "simulate", "--seed", "1", "--trials", "0", "--format", "json")
    assert code == 0 and out == ""


def test_missing_seed_is_config_error(capsys):
    code, _, err = run(capsys, "simulate")
    assert code == 2 and "seed" in err


def test_flags_override_file(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 3, "trials": 50, "protocol": "eip_damp",
                               "ensemble": "damped",
                               "sweep": {"n": {"start": 4, "stop": 8, "step": 4}, "F": 0.9}}))
    code, out, _ = run(capsys, "simulate", "--config", str(cfg), "--trials", "70",
                       "--format", "json")
    rows = [json.loads(x) for x in out.splitlines()]
    assert code == 0 and [r["n"] for r in rows] == [4, 8]
    assert all(r["trials"] == 70 and r["protocol"] == "eip_damp" for r in rows)


@pytest.mark.parametrize("doc,field", [
    ({"bogus": 1}, "bogus"),
    ({"sweep": {"n": [], "F": [0.9]}}, "sweep.n"),
    ({"protocol": "nope"}, "protocol"),
    ({"params": {"lam": -1}}, "params"),
    ({"aux": {"source": "embedded"}}, "aux.value"),
    ({"ensemble": "ghz"}, "ensemble"),
])
def test_config_diagnostics(tmp_path, capsys, doc, field):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(dict(doc, seed=1)))
    code, _, err = run(capsys, "simulate", "--config", str(p))
    assert code == 2 and field in err


def test_bad_json(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text("{")
    assert run(capsys, "analyze", "--config", str(p))[0] == 2


def test_analyze_curves(tmp_path, capsys):
    for curve, sweep in [("damp", {"n": [8, 16], "F": [0.95]}), ("alt_two", {"n": [8]}),
                         ("fidelity_bounds", {"m": [16], "F_global": [0.5, 0.9]}),
                         ("hashing", {"n": [16, 32], "F": [0.95]}),
                         ("dejmps", {"F": [0.8], "rounds": [2]}),
                         ("eip", {"n": [8], "F": [0.9]}), ("pj", {"n": [5], "F": [0.9]}),
                         ("log_subensemble", {"n": [8, 20]})]:
        p = tmp_path / f"{curve}.json"
        p.write_text(json.dumps({"curve": curve, "sweep": sweep}))
        code, out, err = run(capsys, "analyze", "--config", str(p))
        assert code == 0, err
        assert len(out.strip().splitlines()) >= 2
    code, out, _ = run(capsys, "analyze", "--config", str(tmp_path / "alt_two.json"))
    row = next(csv.DictReader(io.StringIO(out)))
    assert float(row["yield_alt"]) == pytest.approx(0.159, abs=1e-3)


def test_compare_columns(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"protocols": ["eip", "eip_damp"], "ensemble": "damped",
                             "sweep": {"n": [6], "F": [0.9]}}))
    code, out, _ = run(capsys, "compare", "--config", str(p), "--seed", "2", "--trials", "300")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and [r["protocol"] for r in rows] == ["eip", "eip_damp"]
    assert rows[0]["yield_analytic"] == "nan" and rows[1]["yield_analytic"] != "nan"


def test_csv_number_format():
    text = cli.render([{"a": 1 / 3, "b": 2, "c": True}], "csv")
    assert text.splitlines()[1] == "0.333333333,2,true"


def test_verify_ok_and_out_file(tmp_path, capsys):
    out = tmp_path / "v.csv"
    code, _, _ = run(capsys, "verify", "--out", str(out))
    assert code == 0
    rows = list(csv.DictReader(out.open()))
    assert rows and all(r["passed"] == "true" for r in rows)


def test_verify_reports_mutation(monkeypatch, capsys):
    orig = core.counter_shift
    monkeypatch.setattr(core, "counter_shift", lambda s, r, d: (-orig(s, r, d)) % d)
    code, _, err = run(capsys, "verify")
    assert code == 1 and "symbolic_vs_dense" in err


def test_verify_tolerance_override(capsys):
    code, out, err = run(capsys, "verify", "--tol", "1e-30")
    assert code == 1 and "FAILED" in err
    assert run(capsys, "verify", "--tol", "-1")[0] == 2
