import csv
import json
import subprocess
import sys

import pytest

from seo.cli import main, parse_seeds
from seo.ledger import CSV_COLUMNS


def test_parse_seeds():
    assert parse_seeds("0..3") == [0, 1, 2, 3]
    assert parse_seeds("4,7, 9") == [4, 7, 9]
    with pytest.raises(ValueError):
        parse_seeds("5..2")


def test_run_and_report(tmp_path, capsys):
    out = tmp_path / "runs"
    assert main(["run", "--mode", "model-gate", "--obstacles", "2", "--seeds", "0..1", "--out", str(out)]) == 0
    assert main(["run", "--mode", "model-gate", "--unfiltered", "--obstacles", "0", "--seeds", "0..1",
                 "--out", str(out)]) == 0
    batch = json.loads((out / "batch_model-gate_filtered_2obs.json").read_text())
    assert batch["collisions"] == 0 and batch["seeds"] == [0, 1]
    assert set(batch["report"]["gains"]) == {"detector_p1", "detector_p2"}
    with open(out / "batch_model-gate_filtered_2obs_seed0.csv", newline="") as fh:
        assert tuple(next(csv.reader(fh))) == CSV_COLUMNS
    per_run = json.loads((out / "batch_model-gate_unfiltered_0obs_seed1.json").read_text())
    assert per_run["seed"] == 1 and per_run["min_clearance"] is None
    capsys.readouterr()

    assert main(["report", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "combined gain" in printed
    with open(out / "gain_vs_obstacles.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["obstacles"]) for r in rows] == [0, 2]
    with open(out / "delta_histogram.csv", newline="") as fh:
        hist = list(csv.DictReader(fh))
    assert {"0", "4"} <= {r["delta_max"] for r in hist}


def test_config_file_and_table(tmp_path):
    table = tmp_path / "table.json"
    assert main(["table", "build", "--out", str(table)]) == 0
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"mode": "sensor-gate", "obstacle_count": 4, "table": {"path": str(table)}}))
    out = tmp_path / "o"
    assert main(["run", "--config", str(cfg), "--seeds", "3", "--out", str(out), "--tau-ms", "20"]) == 0
    batch = json.loads((out / "batch_sensor-gate_filtered_4obs.json").read_text())
    assert batch["config"]["table"]["path"] == str(table)


def test_errors_are_json(tmp_path, capsys):
    assert main(["run", "--tau-ms", "-5", "--out", str(tmp_path)]) != 0
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ValueError"
    bad = tmp_path / "bad.json"
    bad.write_text('{"warp": 9}')
    assert main(["run", "--config", str(bad), "--out", str(tmp_path)]) != 0
    assert "warp" in json.loads(capsys.readouterr().err)["message"]
    assert main(["report", str(tmp_path / "missing")]) != 0
    assert json.loads(capsys.readouterr().err)["error"] == "FileNotFoundError"


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "seo.cli", "run", "--obstacles", "0", "--seeds", "0",
                        "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert "batch_offload_filtered_0obs" in r.stdout
