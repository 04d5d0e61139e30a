"""Uniform-grid 1D signals and their plain-text format.

A signal file holds one decimal value per line; blank lines and lines
starting with ``#`` are ignored. The grid spacing is not stored in the file.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ParameterError, ParseError, SizeError
from .logging import get_logger
from .types import FloatArray

logger = get_logger(__name__)

MIN_LENGTH = 2


@dataclass(frozen=True, eq=False)
class Signal:
    """Sampled 1D function on a uniform grid with spacing ``h``.

    ``values`` is stored as a read-only float64 copy; arithmetic never
    mutates a signal, it builds a new one with the same ``h``.
    """

    values: FloatArray
    h: float = 1.0

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64).ravel()
        if values.size < MIN_LENGTH:
            raise SizeError(f"signal needs at least {MIN_LENGTH} samples, got {values.size}")
        if not np.isfinite(values).all():
            raise ParameterError("signal samples must be finite")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ParameterError(f"grid spacing must be positive, got {self.h}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "h", float(self.h))

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def n(self) -> int:
        """Number of samples."""
        return len(self)

    def with_values(self, values: Iterable[float] | FloatArray) -> Signal:
        """New signal on the same grid."""
        return Signal(np.asarray(values, dtype=np.float64), self.h)

    def l2_norm(self) -> float:
        return l2_norm(self)

    def mean(self) -> float:
        return mean(self)


def l2_norm(s: Signal) -> float:
    """Unweighted Euclidean norm sqrt(sum of squares)."""
    return float(np.linalg.norm(s.values))


def mean(s: Signal) -> float:
    """Arithmetic mean of the samples."""
    return float(np.mean(s.values))


def zeros(n: int, h: float = 1.0) -> Signal:
    return Signal(np.zeros(n), h)


def read_text(path: str | Path) -> str:
    """Read a UTF-8 text file.

    Raises:
        ParseError: At the line and column of the first byte that is not UTF-8
        OSError: If the file cannot be read
    """
    data = Path(path).read_bytes()
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as e:
        line_start = data.rfind(b"\n", 0, e.start) + 1
        line = data.count(b"\n", 0, e.start) + 1
        raise ParseError(
            f"invalid UTF-8 byte 0x{data[e.start]:02x} in {path}", line, e.start - line_start + 1
        ) from e


def parse_signal_text(text: str, h: float = 1.0) -> Signal:
    """Parse the one-value-per-line format.

    Raises:
        ParseError: If a line holds anything but a single finite number
        SizeError: If fewer than two samples are present
    """
    samples: list[float] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        column = raw.find(line) + 1
        try:
            value = float(line)
        except ValueError as e:
            raise ParseError(f"not a number: {line!r}", lineno, column) from e
        if not math.isfinite(value):
            raise ParseError(f"sample must be finite, got {line!r}", lineno, column)
        samples.append(value)
    if len(samples) < MIN_LENGTH:
        raise SizeError(f"signal needs at least {MIN_LENGTH} samples, got {len(samples)}")
    return Signal(np.array(samples), h)


def format_signal_text(s: Signal) -> str:
    # 17 significant digits round-trip every double exactly
    return "".join(f"{v:.17g}\n" for v in s.values)


def read_signal(path: str | Path, h: float = 1.0) -> Signal:
    """Read a signal file."""
    path = Path(path)
    signal = parse_signal_text(read_text(path), h)
    logger.debug("Read signal", extra={"path": str(path), "samples": signal.n})
    return signal


def write_signal(s: Signal, path: str | Path) -> None:
    """Write a signal file, creating parent directories as needed."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_signal_text(s))
    logger.debug("Wrote signal", extra={"path": str(path), "samples": s.n})
