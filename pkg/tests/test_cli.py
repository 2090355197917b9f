import json
import subprocess
import sys
from pathlib import Path

import pytest

from staygo.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main

QUICK = {
    "schema_version": 1,
    "name": "cli",
    "grid": {"rows": 5, "cols": 5, "spacing": 50.0},
    "pattern": "B",
    "rate": "fast",
    "cycles": 1,
    "methods": ["twobit", "regression", "perceptron"],
    "seeds": [1, 2],
}


@pytest.fixture
def scenario(tmp_path):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(QUICK))
    return path


def test_gen_trace(tmp_path, scenario, capsys):
    out = tmp_path / "out"
    assert main(["gen-trace", "--scenario", str(scenario), "--out", str(out)]) == EXIT_OK
    assert (out / "sequence.json").exists()
    assert len(list((out / "traces").iterdir())) == 2
    assert main(["gen-trace", "--scenario", str(scenario), "--seed", "7", "--out", str(tmp_path / "o7")]) == EXIT_OK
    assert [p.name for p in (tmp_path / "o7" / "traces").iterdir()] == ["trace_B_fast_c1_seed7.txt"]


def test_run_summarize_plot(tmp_path, scenario, capsys):
    out = tmp_path / "run"
    assert main(["run", "--scenario", str(scenario), "--out", str(out)]) == EXIT_OK
    assert "perceptron" in capsys.readouterr().out
    results = out / "results.csv"
    assert results.exists() and (out / "summary.csv").exists()
    assert main(["summarize", "--results", str(results)]) == EXIT_OK
    assert "regression" in capsys.readouterr().out
    assert main(["plot-data", "--results", str(results), "--out", str(tmp_path / "plots")]) == EXIT_OK
    assert len(list((tmp_path / "plots").glob("*.csv"))) == 4 * 4


def test_run_is_deterministic(tmp_path, scenario):
    for d in ("a", "b"):
        assert main(["run", "--scenario", str(scenario), "--out", str(tmp_path / d), "--strict-formula"]) == 0
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()


def test_timesteps_flag(tmp_path):
    cfg = dict(QUICK, methods=[{"name": "dqn", "params": {"learning_starts": 10}}], seeds=[1])
    path = tmp_path / "s.json"
    path.write_text(json.dumps(cfg))
    assert main(["run", "--scenario", str(path), "--out", str(tmp_path / "o"), "--timesteps", "200"]) == EXIT_OK
    saved = json.loads((tmp_path / "o" / "scenario.json").read_text())
    assert saved["timesteps"] == 200


def test_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(dict(QUICK, methods=["oracle"])))
    assert main(["run", "--scenario", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "unknown method" in capsys.readouterr().err
    bad.write_text("{not json")
    assert main(["run", "--scenario", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert main(["run", "--scenario", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_runtime_errors(tmp_path, scenario, capsys):
    out = tmp_path / "out"
    main(["gen-trace", "--scenario", str(scenario), "--out", str(out)])
    trace = next((out / "traces").iterdir())
    trace.write_bytes(trace.read_bytes()[:-3])
    assert main(["run", "--scenario", str(scenario), "--out", str(out)]) == EXIT_RUNTIME
    assert "offset" in capsys.readouterr().err
    empty = tmp_path / "empty.csv"
    empty.write_text("scenario,seed,mission,method,mission_time,opposite_decisions,relative_increase,trace_checksum\n")
    assert main(["summarize", "--results", str(empty)]) == EXIT_RUNTIME


def test_module_entry_point(tmp_path, scenario):
    proc = subprocess.run(
        [sys.executable, "-m", "staygo", "gen-trace", "--scenario", str(scenario), "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr


def test_shipped_scenarios_parse():
    from staygo.harness import Scenario

    root = Path(__file__).resolve().parents[1] / "scenarios"
    files = sorted(root.glob("*.json"))
    assert files
    for f in files:
        Scenario.load(f)
