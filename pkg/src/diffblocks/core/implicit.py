"""Implicit diffusion steps solved by fixed-point iteration.

The implicit step v = u − τ Kᵀ Φ(K v) is solved by

    v[l+1] = u − τ Kᵀ Φ(K v[l]),   v[0] = u,

so every inner iterate is fed by the original ``u``: unrolled, the solver is
a recurrent network whose input skip connection reaches all inner layers.
With one iteration this is exactly the explicit diffusion block. The map
contracts when τ·L·‖K‖² < 1; outside that regime the step still runs but
only reports the residual it achieved.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .explicit import BlockParams, TrajectoryRecord, _check_input, _finite_or_raise
from .logging import get_logger
from .operators import DEFAULT_NORM_TOL, spectral_norm_sq
from .signal import Signal

logger = get_logger(__name__)

DEFAULT_RELATIVE_TOL = 1e-12


@dataclass(frozen=True)
class ImplicitStep:
    """Fixed-point solver settings for one implicit step.

    ``residual_tol`` is absolute; when omitted each call uses
    ``1e-12 * ‖u‖``.
    """

    base: BlockParams
    inner_iters: int
    residual_tol: float | None = None
    margin: float = field(init=False, compare=False)

    def __post_init__(self) -> None:
        if self.inner_iters < 1:
            raise ParameterError(f"inner iterations must be at least 1, got {self.inner_iters}")
        if self.residual_tol is not None and not self.residual_tol > 0:
            raise ParameterError(f"residual tolerance must be positive, got {self.residual_tol}")
        margin = contraction_margin_of(self.base)
        object.__setattr__(self, "margin", margin)
        if margin >= 1.0:
            logger.warning(
                "Fixed-point map is not guaranteed to contract",
                extra={"contraction_margin": margin, "tau": self.base.tau},
            )


def contraction_margin_of(p: BlockParams, tol: float = DEFAULT_NORM_TOL) -> float:
    return p.tau * p.flux.lipschitz * spectral_norm_sq(p.op, tol)


def contraction_margin(s: ImplicitStep) -> float:
    """τ·L·‖K‖²; below 1 the fixed-point map is a contraction."""
    return s.margin


@dataclass
class ImplicitResult:
    signal: Signal
    iterations: int
    residual: float
    history: list[float] = field(default_factory=list)


def implicit_step(s: ImplicitStep, u: Signal) -> ImplicitResult:
    """Solve one implicit step by at most ``inner_iters`` fixed-point iterations.

    The residual of an iterate v is ‖v − (u − τKᵀΦ(Kv))‖, which is the
    distance to the next iterate. Stops early once it drops to the
    tolerance; otherwise returns the iterate with the smallest residual.

    Raises:
        DivergenceError: With the inner index of the first non-finite iterate
    """
    p = s.base
    _check_input(p, u)
    tol = s.residual_tol if s.residual_tol is not None else DEFAULT_RELATIVE_TOL * u.l2_norm()

    def fixed_point_map(v: np.ndarray) -> np.ndarray:
        return u.values - p.flux_term(v)

    history: list[float] = []
    current = _finite_or_raise(fixed_point_map(u.values), 0)
    best, best_residual, best_iteration = current, np.inf, 1
    for ell in range(1, s.inner_iters + 1):
        following = _finite_or_raise(fixed_point_map(current), ell)
        residual = float(np.linalg.norm(current - following))
        history.append(residual)
        if residual < best_residual:
            best, best_residual, best_iteration = current, residual, ell
        if residual <= tol or ell == s.inner_iters:
            break
        current = following

    if best_residual > tol:
        logger.info(
            "Implicit step stopped above tolerance",
            extra={"iterations": best_iteration, "residual": best_residual, "tol": tol},
        )
    return ImplicitResult(u.with_values(best), best_iteration, best_residual, history)


def run_implicit(s: ImplicitStep, u0: Signal, steps: int) -> tuple[Signal, TrajectoryRecord]:
    """Chain ``steps`` implicit steps."""
    if steps < 0:
        raise ParameterError(f"step count must be nonnegative, got {steps}")
    _check_input(s.base, u0)
    record = TrajectoryRecord()
    record.record(0, 0.0, u0, s.base)
    u = u0
    for k in range(1, steps + 1):
        result = implicit_step(s, u)
        u = result.signal
        record.record(k, k * s.base.tau, u, s.base)
        logger.debug(
            "Implicit step",
            extra={"step": k, "iterations": result.iterations, "residual": result.residual},
        )
    logger.info("Implicit run finished", extra={"steps": steps, "tau": s.base.tau})
    return u, record
