"""Tests for JSON logging."""

import json
import logging

import numpy as np
from diffblocks.core.logging import JSONFormatter, get_logger, setup_logging


def _record(**extra):
    record = logging.LogRecord("diffblocks.test", logging.INFO, __file__, 1, "hello", None, None)
    record.__dict__.update(extra)
    return record


def test_extras_are_serialized():
    """Test that numpy extras become plain JSON values."""
    line = JSONFormatter().format(_record(tau=np.float64(0.25), steps=np.int64(3), u=np.ones(2)))
    data = json.loads(line)
    assert data["message"] == "hello"
    assert data["level"] == "INFO"
    assert data["tau"] == 0.25
    assert data["steps"] == 3
    assert data["u"] == [1.0, 1.0]


def test_setup_logging_writes_file(tmp_path):
    """Test the optional log file."""
    log_file = tmp_path / "logs" / "run.log"
    setup_logging("INFO", str(log_file))
    get_logger("diffblocks.test").info("Written", extra={"cycle": 2})
    for handler in logging.getLogger().handlers:
        handler.flush()
    data = json.loads(log_file.read_text().splitlines()[-1])
    assert data["message"] == "Written"
    assert data["cycle"] == 2
    setup_logging()
