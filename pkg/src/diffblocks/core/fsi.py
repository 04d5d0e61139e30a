"""Fast semi-iterative (FSI) cycles of extrapolated diffusion blocks.

A cycle of length L runs

    v[l+1] = α_l · (v[l] − τ Kᵀ Φ(K v[l])) + (1 − α_l) · v[l−1],
    α_l = (4l + 2) / (2l + 3),   v[−1] = v[0] = u,

and covers a super step of L(L+1)/3 · τ with only L flux evaluations. The
second skip connection (weight 1 − α_l) is what turns a chain of diffusion
blocks into an FSI block. The iterates are not norm-monotone inside a cycle.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .errors import ParameterError
from .explicit import BlockParams, TrajectoryRecord, _check_input, _finite_or_raise
from .logging import get_logger
from .signal import Signal

logger = get_logger(__name__)


def fsi_weights(cycle_length: int) -> list[Fraction]:
    """Exact extrapolation weights α_0 .. α_{L−1}."""
    if cycle_length < 1:
        raise ParameterError(f"cycle length must be at least 1, got {cycle_length}")
    return [Fraction(4 * ell + 2, 2 * ell + 3) for ell in range(cycle_length)]


@dataclass(frozen=True)
class FsiCycle:
    base: BlockParams
    cycle_length: int

    def __post_init__(self) -> None:
        if self.cycle_length < 1:
            raise ParameterError(f"cycle length must be at least 1, got {self.cycle_length}")

    @property
    def weights(self) -> list[float]:
        return [float(alpha) for alpha in fsi_weights(self.cycle_length)]

    @property
    def super_time(self) -> float:
        return super_time(self)


def super_time(c: FsiCycle) -> float:
    """L(L+1)/3 · τ."""
    steps = Fraction(c.cycle_length * (c.cycle_length + 1), 3)
    return float(steps * Fraction(c.base.tau))


def fsi_cycle(c: FsiCycle, u: Signal) -> Signal:
    """One FSI cycle starting from ``u``.

    Raises:
        DivergenceError: With the inner index l of the first non-finite iterate
    """
    p = c.base
    _check_input(p, u)
    previous = current = u.values
    for ell, alpha in enumerate(c.weights):
        explicit = current - p.flux_term(current)
        following = alpha * explicit + (1.0 - alpha) * previous
        previous, current = current, _finite_or_raise(following, ell)
    return u.with_values(current)


def run_fsi(c: FsiCycle, u0: Signal, cycles: int) -> tuple[Signal, TrajectoryRecord]:
    """Run ``cycles`` FSI cycles, recording diagnostics once per cycle."""
    if cycles < 0:
        raise ParameterError(f"cycle count must be nonnegative, got {cycles}")
    _check_input(c.base, u0)
    record = TrajectoryRecord()
    record.record(0, 0.0, u0, c.base)
    span = c.super_time
    u = u0
    for k in range(1, cycles + 1):
        u = fsi_cycle(c, u)
        record.record(k, k * span, u, c.base)
        logger.debug("FSI cycle", extra={"cycle": k, "l2_norm": record.rows[-1].l2_norm})
    logger.info(
        "FSI run finished",
        extra={"cycles": cycles, "cycle_length": c.cycle_length, "super_time": span},
    )
    return u, record
