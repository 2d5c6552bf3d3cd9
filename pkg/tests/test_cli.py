"""CLI tests: exit codes, file outputs, and end-to-end subcommand wiring."""

import json

import numpy as np
import pytest

from firesale import examples
from firesale.cli import main


@pytest.fixture
def oscillator_file(tmp_path):
    path = tmp_path / "oscillator.json"
    examples.load_example("sync_oscillation").save(path)
    return path


@pytest.fixture
def cascade_file(tmp_path):
    path = tmp_path / "cascade.json"
    examples.load_example("cascade").save(path)
    return path


def test_validate_accepts_good_file(oscillator_file, capsys):
    assert main(["validate", str(oscillator_file)]) == 0
    assert "ok:" in capsys.readouterr().out


def test_validate_rejects_schema_violations(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({
        "agents": [
            {"illiquid_assets": 1.0, "liabilities": 0.0, "holdings": [0.7]},
            {"illiquid_assets": 1.0, "liabilities": 0.0, "holdings": [0.7]},
        ],
        "assets": [{"p0": 1.0, "impact": {"kind": "linear"}}],
        "alpha": 1.0,
        "lambda": 2.0,
    }))
    assert main(["validate", str(bad)]) == 1
    assert "oversubscribed" in capsys.readouterr().err


def test_validate_rejects_bad_json(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text("{ not json")
    assert main(["validate", str(path)]) == 1
    assert "line" in capsys.readouterr().err


def test_run_cycle_exit_code_and_outputs(oscillator_file, tmp_path, capsys):
    prefix = tmp_path / "osc"
    rc = main(["run", str(oscillator_file), "--start", "1,0",
               "--out-prefix", str(prefix)])
    assert rc == 2
    out = capsys.readouterr().out
    assert "cycle_detected" in out
    trace = (tmp_path / "osc_trace.csv").read_text().splitlines()
    assert trace[0].startswith("step,mover,y_0,y_1")
    verdict = json.loads((tmp_path / "osc_verdict.json").read_text())
    assert verdict["cycle_period"] == 2


def test_run_converged_exit_code(cascade_file, tmp_path):
    rc = main(["run", str(cascade_file), "--kind", "seq-exact",
               "--out-prefix", str(tmp_path / "cascade")])
    assert rc == 0
    verdict = json.loads((tmp_path / "cascade_verdict.json").read_text())
    assert verdict["verdict"] == "converged"
    assert verdict["final_profile"] == [0.0, 0.0, 0.0]


def test_run_budget_exit_code(cascade_file, tmp_path):
    rc = main(["run", str(cascade_file), "--max-steps", "1",
               "--out-prefix", str(tmp_path / "c")])
    assert rc == 3


def test_run_missing_file_exits_one(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "/nonexistent/game.json"])
    assert exc.value.code == 1


def test_reproduce_single_example(capsys):
    assert main(["reproduce", "sync_oscillation"]) == 0
    out = capsys.readouterr().out
    assert "reproduce sync_oscillation: PASS" in out


def test_reproduce_bad_equilibrium_with_n(capsys):
    assert main(["reproduce", "bad_equilibrium", "--n", "12"]) == 0


def test_analyze_maximal_equilibrium(cascade_file, capsys):
    assert main(["analyze", str(cascade_file)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["maximal"] is True
    assert doc["profile"] == [0.0, 0.0, 0.0]


def test_analyze_verify_profile(oscillator_file, capsys):
    assert main(["analyze", str(oscillator_file), "--profile", "1,1"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["is_exact"] is True
    assert doc["leverages"] == [6.0, 6.0]


def test_analyze_coalition_flag(tmp_path, capsys):
    path = tmp_path / "coalition.json"
    examples.load_example("bank_run_coalition").save(path)
    assert main(["analyze", str(path), "--coalition", "--grid", "26"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["coalition"] is not None
    assert doc["coalition"]["coalition"] == [0, 1]


def test_analyze_bailout(tmp_path, capsys):
    path = tmp_path / "bailout.json"
    examples.load_example("bailout").save(path)
    assert main(["analyze", str(path), "--bailout", "0", "1", "0", "0.1"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["before"]["equities"][0] == pytest.approx(1000.64, abs=0.01)
    assert doc["after"]["equities"][0] == pytest.approx(1000.7, abs=0.01)


def test_analyze_unsupported_regime_errors(tmp_path, capsys):
    path = tmp_path / "tipping.json"
    examples.load_example("tipping_br").save(path)
    assert main(["analyze", str(path)]) == 1
    assert "convex" in capsys.readouterr().err


def test_experiment_subcommand(tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({
        "n": 5, "runs": 30, "taus": [0.0, 0.5], "seed": 1}))
    out_dir = tmp_path / "out"
    assert main(["experiment", str(config), "--out-dir", str(out_dir)]) == 0
    assert (out_dir / "convergence.csv").exists()
    assert (out_dir / "decay_tau0.50.csv").exists()


def test_experiment_rejects_bad_config(tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"param_set": "nope"}))
    assert main(["experiment", str(config)]) == 1
