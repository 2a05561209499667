"""Tests for the ehdn command line"""

import pytest
import yaml
from typer.testing import CliRunner

from ehdn import __version__
from ehdn.cli import app, parse_levels

runner = CliRunner()


@pytest.fixture(autouse=True)
def _no_defaults_file(tmp_path, monkeypatch):
    """Run every command away from any ehdn.yaml in the working tree"""
    monkeypatch.chdir(tmp_path)


def _summary(out) -> dict:
    with open(out / "summary.yaml") as f:
        return yaml.safe_load(f)


def test_version():
    """Test --version"""
    result = runner.invoke(app, ["--version"])

    assert result.exit_code == 0
    assert __version__ in result.output


def test_unknown_flag_is_usage_error():
    """Test bad usage exits with 2"""
    assert runner.invoke(app, ["harden", "--no-such-flag"]).exit_code == 2
    assert runner.invoke(app, ["evaluate"]).exit_code == 2  # --plan is required


def test_parse_levels():
    """Test level lists"""
    assert parse_levels("2") == [2]
    assert parse_levels("1,2,3,4") == [1, 2, 3, 4]
    assert parse_levels(None) is None


def test_harden_writes_results(tmp_path):
    """Test a hardening run leaves plan, trace, manifest and summary"""
    out = tmp_path / "run"
    result = runner.invoke(app, ["harden", "--instance", "toy3", "--eps", "0.05", "--kcc", "1",
                                 "--n-l", "1", "-o", str(out)])

    assert result.exit_code == 0, result.output
    for name in ("plan.yaml", "trace.csv", "hardening.csv", "dispatch.csv", "manifest.yaml",
                 "summary.yaml"):
        assert (out / name).exists()
    summary = _summary(out)
    assert summary["status"] == "ok"
    assert summary["levels"][1]["converged"]
    assert "worst_case_scenario" in summary["levels"][1]


def test_invalid_defaults_file_writes_summary(tmp_path):
    """Test a bad defaults file still leaves an error summary"""
    defaults = tmp_path / "bad.yaml"
    defaults.write_text("eps: 1.5\n")
    out = tmp_path / "cfg"
    result = runner.invoke(app, ["harden", "-c", str(defaults), "-o", str(out)])

    assert result.exit_code == 1
    summary = _summary(out)
    assert summary["status"] == "error"
    assert "eps" in summary["error"]


def test_min_budget_mildest_level(tmp_path):
    """Test toy3 needs no SSA hardening at level 1"""
    out = tmp_path / "mb"
    result = runner.invoke(app, ["min-budget", "-i", "toy3", "-l", "1", "-o", str(out)])

    assert result.exit_code == 0, result.output
    assert _summary(out)["levels"][1]["budget"] == 0.0


def test_missing_instance(tmp_path):
    """Test an unknown instance exits with 1 and an error summary"""
    out = tmp_path / "bad"
    result = runner.invoke(app, ["harden", "-i", "nowhere.instance.yaml", "-o", str(out)])

    assert result.exit_code == 1
    summary = _summary(out)
    assert summary["status"] == "error"
    assert (out / "manifest.yaml").exists()


def test_report_empty_directory(tmp_path):
    """Test report on a directory without results"""
    assert runner.invoke(app, ["report", str(tmp_path)]).exit_code == 1


def test_instances_lists_bundled():
    """Test the bundled instance listing"""
    result = runner.invoke(app, ["instances"])

    assert result.exit_code == 0
    assert "toy3" in result.output
    assert "ieee33-like" in result.output
