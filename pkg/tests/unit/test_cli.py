"""
Tests for the command line
"""

import json

import pytest
from click.testing import CliRunner

from main import EXIT_CERTIFICATE, EXIT_USAGE, cli, cli_main


@pytest.fixture
def runner():
    return CliRunner()


def test_help_exits_zero():
    assert cli_main(["--help"]) == 0


def test_run_help_lists_options(runner):
    result = runner.invoke(cli, ["run", "--help"])
    assert result.exit_code == 0
    for flag in ("--preset", "--b2", "--lambda-w", "--allow-uncertified", "--workers"):
        assert flag in result.output


def test_unknown_flag_is_usage_error():
    assert cli_main(["run", "--no-such-flag"]) == EXIT_USAGE


def test_bad_estimator_is_usage_error():
    assert cli_main(["run", "--estimators", "ukf"]) == EXIT_USAGE


def test_uncertified_b2_exits_three(tmp_path):
    code = cli_main(["run", "--preset", "paper-exp", "--b2", "0.5", "--output-dir", str(tmp_path)])
    assert code == EXIT_CERTIFICATE
    assert not (tmp_path / "summary.json").exists()


def test_certify_command():
    assert cli_main(["certify", "--preset", "paper-exp"]) == 0
    assert cli_main(["certify", "--preset", "paper-poly"]) == 0
    assert cli_main(["certify", "--preset", "paper-exp", "--b2", "0.8"]) == EXIT_CERTIFICATE


def test_presets_command(runner):
    result = runner.invoke(cli, ["presets"])
    assert result.exit_code == 0
    assert "convergence" in result.output


def test_end_to_end_run(tmp_path):
    code = cli_main([
        "run", "--preset", "paper-exp", "--b2", "0.81", "--lambda-w", "1", "--lambda-v", "1",
        "--instances", "2", "--horizon", "2", "--seed", "42", "--restarts", "1",
        "--output-dir", str(tmp_path),
    ])
    assert code == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["preset"] == "paper-exp"
    assert summary["instances"] == 2


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("FIE_BENCH_OUTPUT_DIR", str(tmp_path / "env"))
    code = cli_main(["run", "--instances", "1", "--horizon", "1", "--estimators", "ekf"])
    assert code == 0
    assert (tmp_path / "env" / "records.csv").exists()
