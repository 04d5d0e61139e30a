"""Tests for FSI cycles."""

import math
from fractions import Fraction

import numpy as np
import pytest
from diffblocks.core.errors import ParameterError
from diffblocks.core.explicit import BlockParams, diffusion_block, run_chain
from diffblocks.core.flux import FluxFunction
from diffblocks.core.fsi import FsiCycle, fsi_cycle, fsi_weights, run_fsi, super_time
from diffblocks.core.operators import build_operator
from diffblocks.core.signal import Signal
from diffblocks.experiment.generators import builtin_signals

from tests.oracles import heat_semigroup


def test_weights_are_exact_rationals():
    """Test α for L = 3."""
    assert fsi_weights(3) == [Fraction(2, 3), Fraction(6, 5), Fraction(10, 7)]


def test_weights_need_positive_length():
    """Test L < 1."""
    with pytest.raises(ParameterError):
        fsi_weights(0)
    with pytest.raises(ParameterError):
        FsiCycle(BlockParams(build_operator([(1, 1.0)], 1.0, 8), FluxFunction(), 0.1), 0)


@pytest.mark.parametrize("length", [1, 2, 3, 4, 8, 15])
def test_super_time(length):
    """Test L(L+1)/3 · τ."""
    p = BlockParams(build_operator([(1, 1.0)], 1.0, 8), FluxFunction(), 0.25)
    assert super_time(FsiCycle(p, length)) == length * (length + 1) / 3 * 0.25


@pytest.mark.parametrize("flux_name", ["linear_flux", "pm_flux"])
def test_length_one_closed_form(forward_op, random_signal, flux_name, request):
    """Test that a one-step cycle is ⅔ of a diffusion block plus ⅓ of the input."""
    p = BlockParams.stable(forward_op, request.getfixturevalue(flux_name))
    u = random_signal.values
    expected = (2.0 / 3.0) * diffusion_block(p, random_signal).values + (1.0 / 3.0) * u
    out = fsi_cycle(FsiCycle(p, 1), random_signal).values
    assert np.max(np.abs(out - expected)) <= 1e-14 * max(1.0, float(np.max(np.abs(u))))


def test_constant_is_fixed(forward_op, pm_flux):
    """Test that constants pass unchanged."""
    u = Signal(np.full(32, -1.25))
    out = fsi_cycle(FsiCycle(BlockParams.stable(forward_op, pm_flux), 6), u)
    assert np.allclose(out.values, u.values, atol=1e-14)


def test_linear_cycle_tracks_heat_flow(linear_flux):
    """Test one L = 4 cycle against exp(−tKᵀK) and a fine explicit run."""
    op = build_operator([(1, 1.0)], 1.0, 64)
    p = BlockParams.stable(op, linear_flux)
    u = builtin_signals("sine", 64)
    cycle = FsiCycle(p, 4)
    out = fsi_cycle(cycle, u)
    substeps = math.ceil(100 * cycle.super_time / p.tau)
    reference, _ = run_chain(BlockParams(op, linear_flux, cycle.super_time / substeps), u, substeps)
    exact = heat_semigroup(op, cycle.super_time, u.values)
    assert np.linalg.norm(out.values - reference.values) <= 0.05 * reference.l2_norm()
    assert np.linalg.norm(out.values - exact) <= 0.05 * np.linalg.norm(exact)


def test_long_cycle_beats_plain_steps(linear_flux):
    """Test that one L = 8 cycle smooths more than 8 explicit steps."""
    op = build_operator([(1, 1.0)], 1.0, 129)
    p = BlockParams.stable(op, linear_flux)
    u = builtin_signals("step", 129)
    cycle_out = fsi_cycle(FsiCycle(p, 8), u)
    plain, _ = run_chain(p, u, 8)
    steady = u.mean()
    assert np.linalg.norm(cycle_out.values - steady) < np.linalg.norm(plain.values - steady)


def test_run_fsi_time_column(forward_op, linear_flux, random_signal):
    """Test rows once per cycle at multiples of the super time."""
    cycle = FsiCycle(BlockParams(forward_op, linear_flux, 0.2), 3)
    _, record = run_fsi(cycle, random_signal, 4)
    assert record.column("step") == [0, 1, 2, 3, 4]
    assert record.column("time") == pytest.approx([k * 0.8 for k in range(5)])


def test_run_fsi_is_stable(forward_op, linear_flux, random_signal):
    """Test norm decay across whole linear cycles at the explicit bound."""
    _, record = run_fsi(FsiCycle(BlockParams.stable(forward_op, linear_flux), 10), random_signal, 20)
    norms = np.array(record.column("l2_norm"))
    assert np.all(norms[1:] <= norms[:-1] * (1 + 1e-10))


def test_cycle_converges_to_heat_flow_as_tau_shrinks(linear_flux):
    """Test that the error at the super time falls over three decreasing τ."""
    n = 32
    op = build_operator([(1, 1.0)], 1.0, n)
    grid = (np.arange(n) + 0.5) / n
    u = Signal(np.cos(np.pi * grid) + 0.5 * np.cos(2 * np.pi * grid))
    stable = BlockParams.stable(op, linear_flux).tau
    errors = []
    for tau in (stable, stable / 2, stable / 4):
        cycle = FsiCycle(BlockParams(op, linear_flux, tau), 4)
        exact = heat_semigroup(op, cycle.super_time, u.values)
        out = fsi_cycle(cycle, u).values
        errors.append(float(np.linalg.norm(out - exact) / np.linalg.norm(exact)))
    assert errors[0] > errors[1] > errors[2]
    assert errors[2] < 1e-2
