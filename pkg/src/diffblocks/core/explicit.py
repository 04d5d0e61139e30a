"""Explicit diffusion steps as residual blocks.

One explicit step u ← u − τ Kᵀ Φ(K u) is a residual block
σ₂(f + W₂ σ₁(W₁ f + b₁) + b₂) with σ₁ = τΦ, σ₂ = Id, W₁ = K, W₂ = −Kᵀ and
zero biases. The chain of such blocks is Euclidean-stable whenever
τ ≤ 2 / (L ‖K‖₂²), L being the Lipschitz constant of Φ.
"""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DivergenceError, ParameterError, SizeError
from .flux import FluxFunction, energy
from .logging import get_logger
from .operators import DEFAULT_NORM_TOL, spectral_norm_sq
from .signal import Signal
from .types import FloatArray, Operator

logger = get_logger(__name__)

SAFETY_MULTIPLIER = 10.0

TRAJECTORY_HEADER = ("step", "time", "l2_norm", "energy", "mean")


def stable_tau(op: Operator, flux: FluxFunction, tol: float = DEFAULT_NORM_TOL) -> float:
    """Largest time step with guaranteed Euclidean stability.

    Returns ``inf`` for the zero operator.
    """
    norm_sq = spectral_norm_sq(op, tol)
    if norm_sq == 0.0:
        return math.inf
    return 2.0 / (flux.lipschitz * norm_sq * (1.0 + SAFETY_MULTIPLIER * tol))


@dataclass(frozen=True)
class BlockParams:
    """Parameters of one diffusion block."""

    op: Operator
    flux: FluxFunction
    tau: float

    def __post_init__(self) -> None:
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ParameterError(f"time step must be positive and finite, got {self.tau}")

    @classmethod
    def stable(
        cls,
        op: Operator,
        flux: FluxFunction,
        tau: float | None = None,
        tol: float = DEFAULT_NORM_TOL,
    ) -> BlockParams:
        """Block whose time step respects the stability bound.

        Without ``tau`` the bound itself is used.

        Raises:
            ParameterError: If ``tau`` exceeds the bound
        """
        bound = stable_tau(op, flux, tol)
        if tau is None:
            if math.isinf(bound):
                raise ParameterError("operator is zero, no time step bound to pick")
            tau = bound
        elif tau > bound:
            raise ParameterError(f"time step {tau} exceeds the stability bound {bound}")
        return cls(op, flux, tau)

    def flux_term(self, values: FloatArray) -> FloatArray:
        """Kᵀ σ₁(K u) with σ₁ = τΦ."""
        return self.op.apply_adjoint(self.tau * self.flux.flux(self.op.apply(values)))


def _check_input(p: BlockParams, u: Signal) -> None:
    if u.n != p.op.n_in:
        raise SizeError(f"signal has {u.n} samples, operator expects {p.op.n_in}")


def _finite_or_raise(values: FloatArray, step: int | None) -> FloatArray:
    if not np.isfinite(values).all():
        raise DivergenceError("non-finite samples", step)
    return values


def diffusion_block(p: BlockParams, u: Signal) -> Signal:
    """One explicit step u − τ Kᵀ Φ(K u)."""
    _check_input(p, u)
    return u.with_values(_finite_or_raise(u.values - p.flux_term(u.values), None))


Activation = Callable[[FloatArray], FloatArray]
Linear = Callable[[FloatArray], FloatArray]


def _identity(x: FloatArray) -> FloatArray:
    return x


@dataclass(frozen=True, eq=False)
class ResidualBlock:
    """Generic residual block σ₂(f + W₂ σ₁(W₁ f + b₁) + b₂)."""

    w1: Linear
    w2: Linear
    sigma1: Activation
    b1: FloatArray
    b2: FloatArray
    sigma2: Activation = _identity

    def __call__(self, f: FloatArray) -> FloatArray:
        return self.sigma2(f + self.w2(self.sigma1(self.w1(f) + self.b1)) + self.b2)

    @classmethod
    def from_diffusion(cls, p: BlockParams) -> ResidualBlock:
        """The diffusion block written as a residual block."""
        op, flux, tau = p.op, p.flux, p.tau
        return cls(
            w1=op.apply,
            w2=lambda z: -op.apply_adjoint(z),
            sigma1=lambda z: tau * flux.flux(z),
            b1=np.zeros(op.n_out),
            b2=np.zeros(op.n_in),
        )


def step_continuity_bound(p: BlockParams, tol: float = DEFAULT_NORM_TOL) -> float:
    """Lipschitz bound 1 + τ·L·‖K‖² of the step map."""
    return 1.0 + p.tau * p.flux.lipschitz * spectral_norm_sq(p.op, tol)


@dataclass(frozen=True)
class TrajectoryRow:
    step: int
    time: float
    l2_norm: float
    energy: float
    mean: float


@dataclass
class TrajectoryRecord:
    """Per-step diagnostics of a run."""

    rows: list[TrajectoryRow] = field(default_factory=list)

    def record(self, step: int, time: float, u: Signal, p: BlockParams) -> None:
        self.rows.append(
            TrajectoryRow(step, time, u.l2_norm(), energy(p.flux, p.op, u), u.mean())
        )

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list[float]:
        return [getattr(row, name) for row in self.rows]

    def to_csv_text(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(TRAJECTORY_HEADER)
        for row in self.rows:
            writer.writerow(
                [row.step] + [f"{v:.17g}" for v in (row.time, row.l2_norm, row.energy, row.mean)]
            )
        return buffer.getvalue()

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv_text())


def run_chain(p: BlockParams, u0: Signal, steps: int) -> tuple[Signal, TrajectoryRecord]:
    """Apply ``steps`` diffusion blocks, recording diagnostics after each.

    Raises:
        DivergenceError: With the step index at which samples stopped being finite
    """
    if steps < 0:
        raise ParameterError(f"step count must be nonnegative, got {steps}")
    _check_input(p, u0)
    record = TrajectoryRecord()
    record.record(0, 0.0, u0, p)
    values = u0.values
    for k in range(1, steps + 1):
        values = _finite_or_raise(values - p.flux_term(values), k)
        u = u0.with_values(values)
        record.record(k, k * p.tau, u, p)
        logger.debug("Explicit step", extra={"step": k, "l2_norm": record.rows[-1].l2_norm})
    u_final = u0.with_values(values)
    logger.info(
        "Explicit chain finished",
        extra={"steps": steps, "tau": p.tau, "l2_norm": u_final.l2_norm()},
    )
    return u_final, record
