"""Tests for difference operators and spectral norms."""

import math

import numpy as np
import pytest
from diffblocks.core.errors import CapabilityError, ParameterError, SizeError
from diffblocks.core.explicit import stable_tau
from diffblocks.core.flux import FluxFunction
from diffblocks.core.operators import (
    DenseOp,
    StencilOp,
    apply,
    apply_adjoint,
    build_operator,
    model_weights,
    spectral_norm_sq,
)
from diffblocks.core.signal import Signal

from tests.oracles import dense, top_eigenvalue


def test_forward_difference_of_constant():
    """Test that d/dx annihilates constants."""
    op = build_operator([(1, 1.0)], 1.0, 5)
    assert np.array_equal(apply(op, Signal(np.full(5, 3.0))), np.zeros(4))
    assert op.annihilates_constants


def test_forward_difference_of_ramp():
    """Test the forward difference of a ramp."""
    op = build_operator([(1, 1.0)], 0.5, 4)
    assert np.allclose(apply(op, Signal([0.0, 1.0, 2.0, 3.0], 0.5)), [2.0, 2.0, 2.0])


def test_identity_part_and_stacking():
    """Test that mixed orders stack their outputs."""
    op = build_operator([(1, 2.0), (0, 1.0)], 1.0, 3)
    assert op.n_out == 3 + 2
    out = op.apply(np.array([1.0, 2.0, 4.0]))
    assert np.allclose(out, [1.0, 2.0, 4.0, 2.0, 4.0])
    assert not op.annihilates_constants


def test_second_difference_reflecting():
    """Test mirrored second differences at both ends."""
    op = build_operator([(2, 1.0)], 1.0, 4)
    assert np.allclose(op.apply(np.array([1.0, 2.0, 4.0, 8.0])), [1.0, 1.0, 2.0, -4.0])


def test_order_above_two_is_unsupported():
    """Test that third derivatives are rejected."""
    with pytest.raises(CapabilityError, match="order 3"):
        build_operator([(3, 1.0)], 1.0, 8)


def test_duplicate_and_empty_weights():
    """Test weight validation."""
    with pytest.raises(ParameterError, match="twice"):
        build_operator([(1, 1.0), (1, 2.0)], 1.0, 8)
    with pytest.raises(ParameterError):
        build_operator([], 1.0, 8)
    with pytest.raises(SizeError):
        build_operator([(1, 1.0)], 1.0, 1)


def test_size_mismatch():
    """Test that wrong input lengths raise size errors."""
    op = build_operator([(1, 1.0)], 1.0, 6)
    with pytest.raises(SizeError):
        op.apply(np.ones(5))
    with pytest.raises(SizeError):
        apply_adjoint(op, np.ones(6))


@pytest.mark.parametrize(
    "weights", [[(0, 1.0)], [(1, 1.0)], [(2, 0.7)], [(0, 0.3), (1, 1.2), (2, 0.5)]]
)
def test_adjoint_identity(weights, rng):
    """Test ⟨Ku, v⟩ = ⟨u, Kᵀv⟩."""
    op = build_operator(weights, 0.7, 23)
    u = rng.standard_normal(op.n_in)
    v = rng.standard_normal(op.n_out)
    lhs = float(op.apply(u) @ v)
    rhs = float(u @ op.apply_adjoint(v))
    assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)


def test_gram_diagonal_matches_dense(rng):
    """Test the closed-form diagonal of KᵀK."""
    op = build_operator([(0, 0.5), (1, 1.5), (2, 0.25)], 0.8, 11)
    k = dense(op)
    assert np.allclose(op.gram_diagonal(), np.diag(k.T @ k), rtol=1e-13)


def test_forward_difference_norm_n4():
    """Test ‖K‖² = 4 sin²(3π/8) for forward differences on 4 samples."""
    op = build_operator([(1, 1.0)], 1.0, 4)
    assert spectral_norm_sq(op) == pytest.approx(4 * math.sin(3 * math.pi / 8) ** 2, abs=1e-12)


def test_forward_difference_norm_approaches_four():
    """Test that ‖K‖² rises towards 4 from below as the grid is refined."""
    norms = [spectral_norm_sq(build_operator([(1, 1.0)], 1.0, n)) for n in (64, 256)]
    assert norms[0] < norms[1] < 4.0
    for n, norm in zip((64, 256), norms):
        assert norm == pytest.approx(4 * math.sin(math.pi * (n - 1) / (2 * n)) ** 2, rel=1e-9)


def test_identity_norm():
    """Test that the identity has norm one."""
    assert spectral_norm_sq(build_operator([(0, 1.0)], 1.0, 10)) == pytest.approx(1.0, rel=1e-10)


def test_zero_operator_norm():
    """Test the all-zero stencil."""
    assert spectral_norm_sq(build_operator([(1, 0.0)], 1.0, 16)) == 0.0


@pytest.mark.parametrize("method", ["lanczos", "power"])
@pytest.mark.parametrize("shape", [(3, 4), (3, 10), (40, 40)])
def test_zero_matrix_norm(shape, method):
    """Test an all-zero matrix, including sizes that take the iterative path."""
    op = DenseOp(np.zeros(shape))
    assert spectral_norm_sq(op, method=method) == 0.0
    assert math.isinf(stable_tau(op, FluxFunction()))


@pytest.mark.parametrize("n", [8, 17, 64])
@pytest.mark.parametrize("method", ["lanczos", "power"])
def test_spectral_norm_against_dense(n, method):
    """Test the iterative estimates against the dense eigenvalue."""
    op = build_operator([(1, 1.0), (2, 0.5)], 1.0, n)
    tol = 1e-10 if method == "lanczos" else 1e-6
    estimate = spectral_norm_sq(op, tol=1e-10 if method == "lanczos" else 1e-12, method=method)
    exact = top_eigenvalue(op)
    assert estimate <= exact * (1 + 1e-12)
    assert estimate == pytest.approx(exact, rel=tol)


def test_spectral_norm_rejects_bad_tolerance():
    """Test tol ≤ 0."""
    with pytest.raises(ParameterError):
        spectral_norm_sq(build_operator([(1, 1.0)], 1.0, 8), tol=0.0)


def test_dense_op(rng):
    """Test an arbitrary matrix as operator."""
    m = rng.standard_normal((5, 12))
    op = DenseOp(m)
    u = rng.standard_normal(12)
    assert np.allclose(op.apply(u), m @ u)
    assert np.allclose(op.apply_adjoint(np.ones(5)), m.T @ np.ones(5))
    assert spectral_norm_sq(op) == pytest.approx(np.linalg.norm(m, 2) ** 2, rel=1e-9)


def test_rediscretize_keeps_interval():
    """Test that coarsening doubles the spacing."""
    op = build_operator([(1, 1.0)], 0.5, 9)
    coarse = op.rediscretize(5)
    assert coarse.h == 1.0
    assert coarse.weights == op.weights


def test_model_weights():
    """Test named models."""
    assert model_weights("perona_malik") == ((1, 1.0),)
    assert model_weights("you_kaveh") == ((2, 1.0),)
    with pytest.raises(ParameterError, match="unknown model"):
        model_weights("heat")
