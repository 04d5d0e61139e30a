"""Pytest configuration file."""

import numpy as np
import pytest
from diffblocks.core.flux import FluxFunction
from diffblocks.core.operators import StencilOp
from diffblocks.core.signal import Signal
from diffblocks.core.types import FluxKind


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def forward_op() -> StencilOp:
    """Forward differences on 32 samples, h = 1."""
    return StencilOp(((1, 1.0),), 1.0, 32)


@pytest.fixture
def linear_flux() -> FluxFunction:
    return FluxFunction(FluxKind.LINEAR)


@pytest.fixture
def pm_flux() -> FluxFunction:
    return FluxFunction(FluxKind.PERONA_MALIK_EXP, 0.5)


@pytest.fixture
def random_signal(rng: np.random.Generator) -> Signal:
    return Signal(rng.standard_normal(32))
