"""Deterministic built-in test signals."""

import numpy as np

from ..core.errors import ParameterError
from ..core.signal import Signal

SIGNAL_NAMES = ("step", "ramp", "sine", "random")


def builtin_signals(name: str, n: int, seed: int = 0, h: float = 1.0) -> Signal:
    """Generate a named signal with ``n`` samples.

    * ``step``: 0 on the first half, 1 from the midpoint on
    * ``ramp``: linear from 0 to 1
    * ``sine``: one period of sin over the grid
    * ``random``: uniform in [0, 1), seeded

    Raises:
        ParameterError: If ``name`` is unknown
    """
    if name == "step":
        values = (np.arange(n) >= n // 2).astype(np.float64)
    elif name == "ramp":
        values = np.linspace(0.0, 1.0, n)
    elif name == "sine":
        values = np.sin(2.0 * np.pi * np.linspace(0.0, 1.0, n))
    elif name == "random":
        values = np.random.default_rng(seed).uniform(0.0, 1.0, n)
    else:
        raise ParameterError(f"unknown signal {name!r}, expected one of {list(SIGNAL_NAMES)}")
    return Signal(values, h)
