"""Tests for the configuration file parser."""

import pytest
from diffblocks.core.errors import ConfigError, ParameterError, ParseError
from diffblocks.core.parser import parse_config, parse_config_text
from diffblocks.core.types import FluxKind, Scheme


def test_parse_empty_input():
    """Test parsing empty input."""
    assert parse_config_text("") == {}
    assert parse_config_text("# only a comment\n\n") == {}


def test_parse_key_values():
    """Test the documented example file."""
    text = "scheme = explicit\nflux = pm_exp\nlambda = 1.0\ntau = auto\nsteps = 100"
    assert parse_config_text(text) == {
        "scheme": "explicit",
        "flux": "pm_exp",
        "lambda": "1.0",
        "tau": "auto",
        "steps": "100",
    }


def test_quoted_values():
    """Test that double quotes are stripped."""
    assert parse_config_text('input = "data/signal.txt"') == {"input": "data/signal.txt"}


def test_invalid_line():
    """Test a line without '='."""
    with pytest.raises(ParseError) as exc_info:
        parse_config_text("scheme = fsi\n  cycle_length 4\n")
    assert exc_info.value.line == 2
    assert exc_info.value.column == 3


def test_unknown_key_named():
    """Test that unknown keys raise an error naming them."""
    with pytest.raises(ConfigError, match="'stepz'"):
        parse_config_text("stepz = 3")


def test_duplicate_key():
    """Test a key given twice."""
    with pytest.raises(ConfigError, match="twice"):
        parse_config_text("steps = 3\nsteps = 4")


def test_parse_config_file(tmp_path):
    """Test a full file."""
    path = tmp_path / "run.cfg"
    path.write_text("scheme = explicit\nflux = pm_exp\nlambda = 1.0\ntau = auto\nsteps = 100\n")
    cfg = parse_config(path)
    assert cfg.scheme is Scheme.EXPLICIT
    assert cfg.flux is FluxKind.PERONA_MALIK_EXP
    assert cfg.steps == 100


def test_fsi_cycle_length_zero(tmp_path):
    """Test that L = 0 in a file is a parameter error."""
    path = tmp_path / "fsi.cfg"
    path.write_text("scheme = fsi\ncycle_length = 0\n")
    with pytest.raises(ParameterError):
        parse_config(path)


def test_flags_override_file(tmp_path):
    """Test precedence of flags over the file."""
    path = tmp_path / "run.cfg"
    path.write_text("scheme = explicit\nsteps = 10\n")
    cfg = parse_config(path, {"steps": 3, "tau": None})
    assert cfg.steps == 3
    assert cfg.tau == "auto"


def test_empty_file_with_flags(tmp_path):
    """Test an empty file completed by flags."""
    path = tmp_path / "empty.cfg"
    path.write_text("")
    cfg = parse_config(path, {"scheme": "implicit", "inner_iters": 5})
    assert cfg.scheme is Scheme.IMPLICIT
    assert cfg.inner_iters == 5


def test_config_file_invalid_utf8(tmp_path):
    """Test that a byte that is not UTF-8 is a parse error at its position."""
    path = tmp_path / "bad.cfg"
    path.write_bytes(b"scheme = explicit\nsteps = 4\nflux = p\xe9rona\n")
    with pytest.raises(ParseError) as exc_info:
        parse_config(path)
    assert exc_info.value.line == 3
    assert exc_info.value.column == 9
