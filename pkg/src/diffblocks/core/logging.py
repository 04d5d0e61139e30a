"""Logging configuration for diffblocks."""
import json
import logging
import logging.handlers
import sys
from datetime import datetime
from pathlib import Path
from typing import Any, Optional

import numpy as np

# Attributes every LogRecord has; anything else was passed through ``extra``.
_RESERVED = frozenset(
    logging.LogRecord("", 0, "", 0, "", None, None).__dict__
) | {"message", "asctime", "taskName"}


def _to_json(value: Any) -> Any:
    """Fallback encoder for numpy scalars, arrays and other odd types."""
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


class JSONFormatter(logging.Formatter):
    """Format log records as one JSON object per line."""

    def format(self, record: logging.LogRecord) -> str:
        json_record: dict[str, Any] = {
            "timestamp": datetime.fromtimestamp(record.created).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            "function": record.funcName,
            "line": record.lineno,
        }

        for key, value in record.__dict__.items():
            if key not in _RESERVED:
                json_record[key] = value

        if record.exc_info:
            json_record["exception"] = self.formatException(record.exc_info)

        return json.dumps(json_record, default=_to_json)


def setup_logging(
    log_level: str = "WARNING",
    log_file: Optional[str] = None,
    max_bytes: int = 10 * 1024 * 1024,
    backup_count: int = 5,
) -> None:
    """Set up root logging for the command-line harness.

    Console output goes to stderr so that stdout stays usable for data.

    Args:
        log_level: Logging level name
        log_file: Optional path of a rotating log file
        max_bytes: Maximum size of each log file
        backup_count: Number of rotated files to keep
    """
    root = logging.getLogger()
    root.setLevel(log_level.upper())
    for handler in root.handlers[:]:
        root.removeHandler(handler)

    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(
            logging.handlers.RotatingFileHandler(
                log_file, maxBytes=max_bytes, backupCount=backup_count
            )
        )

    formatter = JSONFormatter()
    for handler in handlers:
        handler.setFormatter(formatter)
        root.addHandler(handler)


def get_logger(name: str) -> logging.Logger:
    """Get a logger instance with the given name.

    Args:
        name: Name of the logger

    Returns:
        Logger instance
    """
    return logging.getLogger(name)
