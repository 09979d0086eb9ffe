"""
Test CLI help rendering (regression test for argparse % escaping).

Help strings mention percentages and Greek-letter parameter names; every
subcommand must render --help without crashing.
"""
import subprocess
import sys

import pytest


def _help(*command):
    return subprocess.run(
        [sys.executable, "-m", "fasris.cli", *command, "--help"],
        capture_output=True,
        text=True,
    )


def test_cli_main_help():
    """Test that main --help renders without crashing."""
    result = _help()
    assert result.returncode == 0, f"--help failed: {result.stderr}"
    assert "fasris" in result.stdout
    assert "Outage probability" in result.stdout


@pytest.mark.parametrize("command", ["point", "sweep-ports", "sweep-size", "sweep-elements", "blockfit"])
def test_cli_subcommand_help(command):
    """Test that each subcommand --help renders without crashing."""
    result = _help(command)
    assert result.returncode == 0, f"{command} --help failed: {result.stderr}"
    assert "--config" in result.stdout
    assert "--no-timing" in result.stdout


def test_cli_sweep_help_lists_values():
    result = _help("sweep-ports")
    assert "--values" in result.stdout
