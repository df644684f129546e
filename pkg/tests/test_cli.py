import json
import subprocess
import sys

import numpy as np
import pytest

from oatta import cli
from oatta.predictor import write_external_stream
from oatta.streams import read_labels, transition_counts


def _cfg(tmp_path, d, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(d))
    return str(p)


def _data_files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if "manifest" not in p.name}


def test_simulate_is_deterministic(tmp_path, capsys):
    cfg = _cfg(tmp_path, {"kind": "s2", "length": 500})
    for out in ("a", "b"):
        assert cli.main(["simulate", "--config", cfg, "--seed", "0,3", "--out", str(tmp_path / out)]) == 0
    assert _data_files(tmp_path / "a") == _data_files(tmp_path / "b")
    assert "spec hash" in capsys.readouterr().out
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["seeds"] == [0, 3] and "timestamp" in manifest and "numpy" in manifest["versions"]


def test_simulate_regime_switch_halves(tmp_path):
    cfg = _cfg(tmp_path, {"stream": {"kind": "s4", "length": 40_000}})
    assert cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    with open(tmp_path / "o" / "stream_seed0.csv") as fh:
        labels = read_labels(fh)
    half = len(labels) // 2
    r1 = np.trace(transition_counts(labels[:half], 10)) / (half - 1)
    r2 = np.trace(transition_counts(labels[half:], 10)) / (half - 1)
    assert abs(r1 - 0.7) < 0.02 and abs(r2 - 0.5) < 0.02


def test_simulate_jsonl(tmp_path):
    cfg = _cfg(tmp_path, {"kind": "s1", "length": 5})
    assert cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "o"), "--format", "jsonl"]) == 0
    lines = (tmp_path / "o" / "stream_seed0.jsonl").read_text().splitlines()
    assert len(lines) == 5 and json.loads(lines[0])["t"] == 0


@pytest.mark.parametrize("d,field", [
    ({"stream": {"kind": "s2", "alpha": 2}}, "alpha"),
    ({"stream": {"kind": "s2"}, "filter": {"forgetting_rate": 3}}, "forgetting_rate"),
    ({"stream": {"kind": "s2"}, "gate": {"window": 0}}, "window"),
    ({"stream": {"kind": "s2"}, "seeds": []}, "seeds"),
    ({"stream": {"kind": "s2"}, "bogus": 1}, "bogus"),
    ({"stream": {"kind": "s2", "lenght": 5}}, "lenght"),
])
def test_malformed_config_names_field(tmp_path, capsys, d, field):
    assert cli.main(["run", "--config", _cfg(tmp_path, d), "--out", str(tmp_path / "o")]) != 0
    assert field in capsys.readouterr().err


def test_malformed_json_reports_line(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text('{\n"stream": {"kind": "s2",}\n}')
    assert cli.main(["run", "--config", str(p)]) != 0
    assert "line 2" in capsys.readouterr().err


def test_run_without_gate_has_table_columns(tmp_path):
    cfg = _cfg(tmp_path, {"stream": {"kind": "s2", "length": 800}, "seeds": [0, 1]})
    assert cli.main(["run", "--config", cfg, "--gate", "off", "--out", str(tmp_path / "o")]) == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["columns"] == ["seed", "Base", "+Ours (w/o LLR)", "gain +Ours (w/o LLR)"]
    header = (tmp_path / "o" / "trace_seed0.csv").read_text().splitlines()[0]
    assert header == "t,G_raw,G_smoothed"


def test_run_gated_random_stream(tmp_path):
    cfg = _cfg(tmp_path, {"stream": {"kind": "s1", "length": 5000}, "seeds": [0, 1, 2]})
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert abs(summary["mean"]["gain +Ours"]) < 1.0


def test_run_external_source(tmp_path, rng):
    labels = np.repeat(np.arange(4), 25)
    Q = 0.6 * np.eye(4)[labels] + 0.4 * rng.dirichlet(np.ones(4), size=100)
    write_external_stream(tmp_path / "q.jsonl", Q, labels)
    cfg = _cfg(tmp_path, {"external": "q.jsonl"})
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["num_classes"] == 4 and len(summary["per_seed"]) == 1


def test_external_without_labels_fails(tmp_path, capsys):
    write_external_stream(tmp_path / "q.jsonl", np.full((3, 2), 0.5))
    cfg = _cfg(tmp_path, {"external": "q.jsonl"})
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) != 0
    assert "label" in capsys.readouterr().err


def test_sweep_outputs(tmp_path):
    cfg = _cfg(tmp_path, {"stream": {"kind": "s2", "length": 600}, "grid": {"param": "base_accuracy",
                          "values": [0.4, 0.6, 0.8]}, "seeds": [0, 1]})
    assert cli.main(["sweep", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["sweep", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    assert _data_files(tmp_path / "a") == _data_files(tmp_path / "b")
    summary = json.loads((tmp_path / "a" / "sweep_summary.json").read_text())
    assert {"slope", "pearson_r", "x_at_zero"} <= set(summary["regression"]["ungated"])
    header = (tmp_path / "a" / "sweep_aggregates.csv").read_text().splitlines()[0]
    assert "p_holm" in header and "significant" in header


def test_sweep_empty_grid(tmp_path, capsys):
    cfg = _cfg(tmp_path, {"stream": {"kind": "s2"}, "grid": {"param": "alpha", "values": []}})
    assert cli.main(["sweep", "--config", cfg]) != 0
    assert "grid must be non-empty" in capsys.readouterr().err


def test_evaluate_rescores_records(tmp_path):
    cfg = _cfg(tmp_path, {"stream": {"kind": "s2", "length": 500}, "seeds": [0, 1], "format": "jsonl"})
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    assert cli.main(["evaluate", str(tmp_path / "o")]) == 0
    run = json.loads((tmp_path / "o" / "summary.json").read_text())
    ev = json.loads((tmp_path / "o" / "evaluation.json").read_text())
    assert ev["mean"] == run["mean"]
    assert (tmp_path / "o" / "manifest.json").exists() and (tmp_path / "o" / "evaluation_manifest.json").exists()


def test_evaluate_missing_records(tmp_path, capsys):
    assert cli.main(["evaluate", str(tmp_path)]) != 0
    assert "no run records" in capsys.readouterr().err


def test_console_entry_point(tmp_path):
    cfg = _cfg(tmp_path, {"kind": "s1", "length": 10})
    r = subprocess.run([sys.executable, "-m", "oatta.cli", "simulate", "--config", cfg, "--out", str(tmp_path / "o")],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
