"""Parser for ``key = value`` experiment configuration files."""

import re
from pathlib import Path
from typing import Any

from .errors import ConfigError, ParseError
from .logging import get_logger
from .schema import ExperimentConfig, config_keys, validate_config
from .signal import read_text

logger = get_logger(__name__)

_LINE = re.compile(r"^\s*([A-Za-z_]\w*)\s*=\s*(.*?)\s*$")


def parse_config_text(text: str) -> dict[str, str]:
    """Parse configuration text into raw string settings.

    One ``key = value`` pair per line; blank lines and lines starting with
    ``#`` are ignored. Values may be wrapped in double quotes.

    Raises:
        ParseError: If a line is not a key/value pair
        ConfigError: If a key is unknown or given twice
    """
    known = config_keys()
    settings: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        match = _LINE.match(raw)
        if match is None:
            column = raw.find(stripped) + 1
            raise ParseError("Invalid line format. Expected key = value", lineno, column)
        key, value = match.group(1), match.group(2)
        if len(value) >= 2 and value[0] == value[-1] == '"':
            value = value[1:-1]
        if key not in known:
            raise ConfigError(f"unknown key on line {lineno}", key)
        if key in settings:
            raise ConfigError(f"given twice (again on line {lineno})", key)
        settings[key] = value
    return settings


def parse_config(
    path: str | Path | None = None, overrides: dict[str, Any] | None = None
) -> ExperimentConfig:
    """Build a validated config from an optional file and flag overrides.

    Flags win over the file; ``None`` overrides are treated as absent.

    Raises:
        ParseError: If the file is malformed
        ConfigError: If a key is unknown, a value invalid or settings conflict
    """
    settings: dict[str, Any] = {}
    if path is not None:
        settings.update(parse_config_text(read_text(path)))
        logger.debug("Read config file", extra={"path": str(path), "keys": sorted(settings)})
    known = config_keys()
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in known:
            raise ConfigError("unknown key", key)
        settings[key] = value
    return validate_config(settings)
