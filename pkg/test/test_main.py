import json
from pathlib import Path

import pytest

from app.main import main, parse_seeds, resolve_output_dir

FIXTURES = Path(__file__).parent


def test_parse_seeds():
    assert parse_seeds("0-3") == [0, 1, 2, 3]
    assert parse_seeds("1,5, 9") == [1, 5, 9]
    assert parse_seeds("0-1,7") == [0, 1, 7]


def test_output_dir_resolution(monkeypatch):
    monkeypatch.delenv("CBMCTS_OUTPUT_DIR", raising=False)
    assert resolve_output_dir(None) == Path("results")
    monkeypatch.setenv("CBMCTS_OUTPUT_DIR", "/tmp/cbmcts")
    assert resolve_output_dir(None) == Path("/tmp/cbmcts")
    assert resolve_output_dir("here") == Path("here")


def test_oracle_command(capsys):
    assert main(["oracle", str(FIXTURES / "dchain_d3.json")]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["raw"] == pytest.approx(5 / 3)
    assert printed["optimal"] == pytest.approx(1.0)
    assert printed["witness"] == {"0": [1, 1, 1], "1": [2]}


def test_run_then_report(tmp_path):
    out = tmp_path / "results"
    assert main(["run", str(FIXTURES / "dchain_experiment.json"), "--seeds", "3", "--out", str(out)]) == 0
    csv_lines = (out / "dchain-smoke.csv").read_text().splitlines()
    assert len(csv_lines) == 1 + 2 * 2
    assert (out / "records.db").exists()

    converted = tmp_path / "converted"
    assert main(["report", str(out / "records.db"), "--format", "json", "--out", str(converted)]) == 0
    document = json.loads((converted / "dchain_smoke.json").read_text())
    assert len(document["records"]) == 4
    assert {r["seed"] for r in document["records"]} == {3}


def test_sweep_command(tmp_path):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"epsilon": [0.5, 1.0]}))
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({
        "name": "tiny",
        "environment": {"kind": "deceptive-tree", "depth": 3, "agents": 2},
        "planners": [{"planning_budget": 40}],
        "cadence": 40,
    }))
    assert main(["sweep", str(spec), str(grid), "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "tiny-sweep.json").read_text())
    assert [e["rank"] for e in report["entries"]] == [1, 2]


def test_invalid_documents_exit_with_status_one(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"environment": {"kind": "deceptive-tree"}, "planners": []}))
    assert main(["run", str(bad), "--out", str(tmp_path)]) == 1
    assert main(["oracle", str(tmp_path / "missing.json")]) == 1
    assert main(["report", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == 1
