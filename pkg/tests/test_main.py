"""Tests for the command-line entry point."""

import pytest
from diffblocks.__main__ import build_parser, main
from diffblocks.core.errors import ParseError, SizeError


def test_compare_subcommand(tmp_path):
    """Test the compare subcommand with a positional mode."""
    code = main(["compare", "fsi_vs_explicit", "--n", "16", "--cycles", "2", "--output", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "compare.csv").exists()


def test_selftest_subcommand(tmp_path):
    """Test one self-test suite from the command line."""
    report = tmp_path / "report.csv"
    assert main(["selftest", "--suite", "4", "--report", str(report)]) == 0
    assert report.read_text().startswith("suite,check,value,threshold,passed\n")


def test_even_size_multigrid(tmp_path):
    """Test that multigrid on an even grid is a size error."""
    code = main(["run", "--scheme", "multigrid", "--n", "64", "--output", str(tmp_path / "x.txt")])
    assert code == SizeError.exit_code


def test_malformed_config_line(tmp_path, capsys):
    """Test a configuration line without an equals sign."""
    config = tmp_path / "bad.cfg"
    config.write_text("scheme = explicit\nsteps 4\n")
    assert main(["run", "--config", str(config)]) == ParseError.exit_code
    assert "line 2" in capsys.readouterr().err


def test_invalid_utf8_signal_file(tmp_path, capsys):
    """Test that an undecodable input signal exits with the parse error code."""
    signal = tmp_path / "in.txt"
    signal.write_bytes(b"0.0\n\xff\n0.0\n")
    code = main(["run", "--scheme", "explicit", "--input", str(signal), "--output", str(tmp_path / "out.txt")])
    assert code == ParseError.exit_code
    assert "line 2" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    """Test an unreadable configuration file."""
    assert main(["run", "--config", str(tmp_path / "absent.cfg")]) == 1


def test_unknown_subcommand():
    """Test argparse rejection of unknown commands."""
    with pytest.raises(SystemExit):
        build_parser().parse_args(["train"])
