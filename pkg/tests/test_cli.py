"""Drive the command line in-process and check outputs and exit codes."""

import json

import pytest

from aggbatch.cli import main


def write_config(tmp_path, body, name="app.json"):
    path = tmp_path / name
    path.write_text(json.dumps(body))
    return str(path)


def test_datagen_then_load(tmp_path, capsys):
    out = tmp_path / "tinydb"
    assert main(["datagen", "db_tiny", "--out", str(out)]) == 0
    assert (out / "schema.json").exists()
    assert (out / "r.csv").exists()

    assert main(["load", str(out)]) == 0
    text = capsys.readouterr().out
    assert "2 relations, 1 join edges" in text
    assert "R: 3 rows" in text


def test_plan_prints_views_groups_and_code(capsys):
    cfg_dir = pytest.importorskip("tempfile").mkdtemp()
    cfg = f"{cfg_dir}/plan.json"
    with open(cfg, "w") as f:
        json.dump({"schema": "favorita"}, f)
    assert main(["plan", cfg]) == 0
    text = capsys.readouterr().out
    assert "6 views:" in text
    assert "7 groups" in text
    assert "V[Items->Sales]" in text
    assert "G6" in text


def test_run_writes_model_and_report(tmp_path, capsys):
    cfg = write_config(
        tmp_path,
        {
            "schema": "db_tiny",
            "app": {"kind": "linreg", "features": ["b"], "label": "c", "lambda": 0.0},
        },
    )
    out = tmp_path / "report"
    assert main(["run", cfg, "--out", str(out), "--threads", "1"]) == 0
    capsys.readouterr()

    model = json.loads((out / "model.json").read_text())
    assert abs(model["theta"][0] + 100.0 / 11.0) < 1e-6
    assert abs(model["theta"][1] - 90.0 / 11.0) < 1e-6
    summary = json.loads((out / "report.json").read_text())
    assert summary["run"]["timings_ms"]
    assert summary["totals"]
    assert (out / "figures" / "jointree.png").exists()
    assert (out / "figures" / "groups.png").exists()
    assert (out / "figures" / "model.png").exists()


def test_run_default_out_dir(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    cfg = write_config(tmp_path, {"schema": "db_tiny"}, name="batch.json")
    assert main(["run", cfg]) == 0
    assert (tmp_path / "batch_out" / "report.json").exists()
    assert list((tmp_path / "batch_out").glob("*.csv"))


def test_oracle_prints_query_results(tmp_path, capsys):
    cfg = write_config(tmp_path, {"schema": "db_tiny"})
    assert main(["oracle", cfg]) == 0
    text = capsys.readouterr().out
    assert "# QA (scalar)" in text
    assert "90.0" in text
    assert "# QB (a)" in text


def test_dump_ir(tmp_path, capsys):
    cfg = write_config(tmp_path, {"schema": "db_tiny"})
    ir = tmp_path / "ir"
    assert main(["plan", cfg, "--dump-ir", str(ir)]) == 0
    capsys.readouterr()
    assert (ir / "G1.ir.txt").exists()
    assert (ir / "G1.code.txt").exists()


def test_bad_config_exits_one(tmp_path, capsys):
    missing = str(tmp_path / "nope.json")
    assert main(["run", missing]) == 1
    assert "error:" in capsys.readouterr().err

    broken = tmp_path / "broken.json"
    broken.write_text("{oops")
    assert main(["plan", str(broken)]) == 1
    assert "line 1" in capsys.readouterr().err

    not_obj = write_config(tmp_path, [1, 2], name="list.json")
    assert main(["plan", not_obj]) == 1
    assert "JSON object" in capsys.readouterr().err


def test_unknown_schema_exits_one(tmp_path, capsys):
    cfg = write_config(tmp_path, {"schema": "atlantis"})
    assert main(["run", cfg]) == 1
    assert "atlantis" in capsys.readouterr().err


def test_load_missing_dir_exits_one(tmp_path, capsys):
    assert main(["load", str(tmp_path / "missing")]) == 1
    assert "error:" in capsys.readouterr().err
