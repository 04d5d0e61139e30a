"""Tests for explicit diffusion blocks."""

import math

import numpy as np
import pytest
from diffblocks.core.errors import DivergenceError, ParameterError, SizeError
from diffblocks.core.explicit import (
    BlockParams,
    ResidualBlock,
    TrajectoryRecord,
    diffusion_block,
    run_chain,
    stable_tau,
    step_continuity_bound,
)
from diffblocks.core.flux import FluxFunction, energy
from diffblocks.core.operators import DenseOp, build_operator, spectral_norm_sq
from diffblocks.core.signal import Signal
from diffblocks.core.types import FluxKind

from tests.oracles import dense, top_eigenvalue


def test_stable_tau_forward_difference(forward_op, linear_flux):
    """Test τ = 2/(L‖K‖²) up to the safety factor."""
    tau = stable_tau(forward_op, linear_flux)
    assert tau == pytest.approx(2.0 / top_eigenvalue(forward_op), rel=1e-8)
    assert tau * top_eigenvalue(forward_op) <= 2.0


def test_stable_tau_zero_operator(linear_flux):
    """Test that the zero operator has no bound."""
    assert math.isinf(stable_tau(build_operator([(1, 0.0)], 1.0, 8), linear_flux))


def test_block_params_validation(forward_op, linear_flux):
    """Test rejected time steps."""
    with pytest.raises(ParameterError):
        BlockParams(forward_op, linear_flux, 0.0)
    with pytest.raises(ParameterError, match="exceeds"):
        BlockParams.stable(forward_op, linear_flux, tau=1.0)
    p = BlockParams.stable(forward_op, linear_flux)
    assert p.tau == stable_tau(forward_op, linear_flux)


@pytest.mark.parametrize("kind", list(FluxKind))
def test_residual_block_equals_diffusion_step(kind, rng):
    """Test the literal residual block against the diffusion step."""
    op = build_operator([(0, 0.2), (1, 1.0), (2, 0.4)], 0.9, 21)
    f = FluxFunction(kind, 0.6)
    p = BlockParams.stable(op, f)
    for _ in range(20):
        u = Signal(rng.standard_normal(21), 0.9)
        literal = ResidualBlock.from_diffusion(p)(u.values)
        assert np.max(np.abs(literal - diffusion_block(p, u).values)) <= 1e-14


def test_diffusion_step_against_dense(forward_op, linear_flux, random_signal):
    """Test u − τKᵀKu for the linear flux."""
    p = BlockParams(forward_op, linear_flux, 0.3)
    k = dense(forward_op)
    expected = random_signal.values - 0.3 * k.T @ (k @ random_signal.values)
    assert np.allclose(diffusion_block(p, random_signal).values, expected, atol=1e-14)


def test_step_of_constant_is_constant(forward_op, pm_flux):
    """Test that constants are steady states."""
    p = BlockParams.stable(forward_op, pm_flux)
    u = Signal(np.full(32, 2.5))
    assert np.array_equal(diffusion_block(p, u).values, u.values)


def test_size_mismatch(forward_op, linear_flux):
    """Test a signal of the wrong length."""
    with pytest.raises(SizeError):
        diffusion_block(BlockParams(forward_op, linear_flux, 0.1), Signal(np.ones(5)))


@pytest.mark.parametrize("kind", list(FluxKind))
def test_chain_is_norm_nonincreasing(kind, rng):
    """Test Euclidean stability at the bound for stencils and dense K."""
    for op in (
        build_operator([(1, 1.0), (2, 0.3)], 1.0, 40),
        DenseOp(rng.standard_normal((30, 40)) / 6.0),
    ):
        f = FluxFunction(kind, 0.4)
        p = BlockParams.stable(op, f)
        _, record = run_chain(p, Signal(rng.standard_normal(40)), 200)
        norms = np.array(record.column("l2_norm"))
        assert np.all(norms[1:] <= norms[:-1] * (1 + 1e-12))


def test_chain_grows_beyond_bound(linear_flux):
    """Test the converse: twice the bound on the top eigenvector grows."""
    op = build_operator([(1, 1.0)], 1.0, 64)
    k = dense(op)
    lam, vectors = np.linalg.eigh(k.T @ k)
    tau = 2.0 * stable_tau(op, linear_flux)
    final, record = run_chain(BlockParams(op, linear_flux, tau), Signal(vectors[:, -1]), 100)
    assert final.l2_norm() > 10.0
    rate = (record.rows[-1].l2_norm / record.rows[0].l2_norm) ** (1 / 100)
    assert rate == pytest.approx(tau * lam[-1] - 1.0, rel=0.05)


def test_chain_mean_preserved(forward_op, pm_flux, random_signal):
    """Test mass conservation without an identity part."""
    _, record = run_chain(BlockParams.stable(forward_op, pm_flux), random_signal, 50)
    means = np.array(record.column("mean"))
    assert np.max(np.abs(means - means[0])) <= 1e-12


@pytest.mark.parametrize("kind", list(FluxKind))
def test_energy_nonincreasing_at_half_bound(kind, rng):
    """Test energy decay for τ ≤ stable_tau/2."""
    op = build_operator([(1, 1.0)], 1.0, 48)
    f = FluxFunction(kind, 0.5)
    p = BlockParams(op, f, 0.5 * stable_tau(op, f))
    u = Signal(rng.standard_normal(48))
    for _ in range(50):
        following = diffusion_block(p, u)
        assert energy(f, op, following) <= energy(f, op, u) * (1 + 1e-10)
        u = following


def test_chain_zero_steps(forward_op, linear_flux, random_signal):
    """Test that zero steps return the input."""
    final, record = run_chain(BlockParams(forward_op, linear_flux, 0.1), random_signal, 0)
    assert np.array_equal(final.values, random_signal.values)
    assert len(record) == 1


def test_chain_divergence_reports_step():
    """Test that overflow stops the chain with its step index."""
    op = build_operator([(1, 1.0)], 1.0, 16)
    p = BlockParams(op, FluxFunction(), 100.0)
    u = Signal(np.where(np.arange(16) % 2 == 0, 1.0, -1.0))
    with pytest.raises(DivergenceError) as exc_info:
        run_chain(p, u, 1000)
    assert exc_info.value.step is not None and exc_info.value.step > 1


def test_step_continuity_bound(forward_op, linear_flux):
    """Test 1 + τL‖K‖²."""
    p = BlockParams(forward_op, linear_flux, 0.2)
    assert step_continuity_bound(p) == pytest.approx(1 + 0.2 * spectral_norm_sq(forward_op))


@pytest.mark.parametrize("kind", list(FluxKind))
@pytest.mark.parametrize("scale", [0.5, 1.0, 3.0])
def test_step_is_lipschitz_in_its_input(forward_op, rng, kind, scale):
    """Test ‖step(u) − step(v)‖ ≤ (1 + τL‖K‖²)‖u − v‖, also past the stability bound."""
    flux = FluxFunction(kind, 0.5)
    p = BlockParams(forward_op, flux, scale * stable_tau(forward_op, flux))
    bound = step_continuity_bound(p)
    for _ in range(20):
        u = Signal(rng.standard_normal(32))
        v = Signal(u.values + rng.normal(scale=float(rng.choice([1e-3, 1.0])), size=32))
        gap = np.linalg.norm(diffusion_block(p, u).values - diffusion_block(p, v).values)
        assert gap <= bound * np.linalg.norm(u.values - v.values) * (1 + 1e-9)


def test_trajectory_csv(forward_op, linear_flux, random_signal):
    """Test the CSV layout of a trajectory."""
    _, record = run_chain(BlockParams(forward_op, linear_flux, 0.25), random_signal, 3)
    lines = record.to_csv_text().splitlines()
    assert lines[0] == "step,time,l2_norm,energy,mean"
    assert len(lines) == 5
    assert lines[2].split(",")[:2] == ["1", "0.25"]
    assert isinstance(record, TrajectoryRecord)
