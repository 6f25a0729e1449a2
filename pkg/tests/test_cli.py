"""Tests for CLI module."""

import subprocess
import sys

import numpy as np
import pytest

from adaptive_kmpc.cli import main
from adaptive_kmpc.export import write_json
from adaptive_kmpc.metrics import Metrics

SHORT_RUN = {
    "name": "1r_cli_linearization",
    "plant": {"joints": 1},
    "controller": {"mode": "linearization"},
    "mpc": {"horizon": 10},
    "reference": {"kind": "constant", "state": [0.3, 0.0], "duration": 1.0},
    "episode_duration": 0.2,
    "metric_window_start": 0.0,
}


def _metrics_file(tmp_path, scenario, mode):
    path = tmp_path / f"{scenario}.json"
    metrics = Metrics(
        scenario=scenario,
        mode=mode,
        seed=0,
        tmse=np.array([2e-3]),
        energy_pos=1.0,
        energy_neg=-0.25,
        goal_time=1.2,
        cycles=500,
        refits=500,
        solver_iters_mean=18.0,
        solver_iters_max=35,
        max_iter_cycles=0,
        window_start=0.75,
    )
    write_json(metrics.to_dict(), path)
    return path


def test_list_prints_bundled_scenarios(capsys):
    """Test the list command."""
    assert main(["list"]) == 0

    output = capsys.readouterr().out.splitlines()
    assert "1r_tracking_adaptive" in output
    assert "2r_tracking_static" in output


def test_validate_bundled_scenario(capsys):
    """Test validating a scenario by name."""
    assert main(["validate", "1r_tracking_adaptive"]) == 0

    output = capsys.readouterr().out
    assert "1r_tracking_adaptive: 1R plant, adaptive controller" in output


def test_validate_malformed_scenario(scenario_file, capsys):
    """Test that an invalid scenario exits with the configuration code."""
    path = scenario_file({"plant": {"joints": 3}})

    assert main(["validate", str(path)]) == 2

    assert "Invalid" in capsys.readouterr().err


def test_validate_unknown_scenario(capsys):
    """Test an unknown scenario name."""
    assert main(["validate", "does_not_exist"]) == 2


def test_run_writes_outputs(scenario_file, tmp_path, capsys):
    """Test a short run through the CLI."""
    path = scenario_file(SHORT_RUN)
    out = tmp_path / "out"

    assert main(["run", str(path), "--out", str(out)]) == 0

    assert (out / "1r_cli_linearization" / "metrics.json").exists()
    output = capsys.readouterr().out
    assert "Running 1 scenario(s)" in output
    assert "1r_cli_linearization [linearization] ok" in output


def test_run_reports_worst_exit_code(scenario_file, tmp_path):
    """Test that one malformed scenario fails the whole run."""
    good = scenario_file(SHORT_RUN, name="good.json")
    bad = scenario_file({"controller": {"mode": "pid"}}, name="bad.json")

    assert main(["run", str(good), str(bad), "--out", str(tmp_path / "out")]) == 2


def test_run_rejects_zero_jobs(capsys):
    """Test the worker count check."""
    assert main(["run", "1r_tracking_adaptive", "--jobs", "0"]) == 2

    assert "--jobs" in capsys.readouterr().err


def test_run_uses_output_environment(scenario_file, tmp_path, monkeypatch):
    """Test the output directory environment variable."""
    monkeypatch.setenv("KMPC_OUTPUT_DIR", str(tmp_path / "env_out"))
    path = scenario_file(SHORT_RUN)

    assert main(["run", str(path)]) == 0

    assert (tmp_path / "env_out" / "1r_cli_linearization" / "trajectory.csv").exists()


def test_compare_writes_csv(tmp_path, capsys):
    """Test comparing two controllers on one scenario."""
    first = _metrics_file(tmp_path, "1r_tracking_adaptive", "adaptive")
    second = _metrics_file(tmp_path, "1r_tracking_static", "static")
    csv_path = tmp_path / "comparison.csv"

    assert main(["compare", str(first), str(second), "--csv", str(csv_path)]) == 0

    output = capsys.readouterr().out
    assert "1r_tracking_static" in output
    assert "WARNING" not in output
    assert csv_path.read_text().startswith("scenario,mode,seed,tmse_q1")


def test_compare_single_file(tmp_path, capsys):
    """Test that one metrics file is not enough to compare."""
    path = _metrics_file(tmp_path, "1r_tracking_adaptive", "adaptive")

    assert main(["compare", str(path)]) == 2

    assert "at least two" in capsys.readouterr().err


def test_missing_command_exits():
    """Test that a subcommand is required."""
    with pytest.raises(SystemExit) as exc_info:
        main([])

    assert exc_info.value.code == 2


def test_invalid_log_level():
    """Test the log level choices."""
    with pytest.raises(SystemExit):
        main(["--log-level", "LOUD", "list"])


def test_cli_as_module():
    """Test running the CLI as a module."""
    result = subprocess.run(
        [sys.executable, "-m", "adaptive_kmpc.cli", "list"],
        capture_output=True,
        text=True,
        check=False,
    )

    assert result.returncode == 0
    assert "1r_setpoint_adaptive" in result.stdout


def test_compare_malformed_metrics(tmp_path, capsys):
    """Test that a corrupt metrics value exits with the configuration code."""
    good = _metrics_file(tmp_path, "1r_tracking_adaptive", "adaptive")
    bad = tmp_path / "bad.json"
    bad.write_text(
        '{"scenario": "x", "mode": "static", "seed": "one", "tmse": [0.1],'
        ' "energy_pos": 1.0, "energy_neg": 0.0, "cycles": 3}'
    )

    assert main(["compare", str(good), str(bad)]) == 2

    assert "invalid value" in capsys.readouterr().err
