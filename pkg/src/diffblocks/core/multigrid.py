"""Linear multigrid for A x = b and its reading as an additive U-net.

The default system is the implicit linear diffusion operator
A = I + τ KᵀK, symmetric positive definite under reflecting boundaries.
Grids are vertex-centred: a fine grid of N = 2·N_c − 1 samples (N_c − 1
intervals doubled) coarsens to N_c samples at spacing 2h.

A two-level cycle works on three channels (x, b, r):

1. pre-smooth x on the fine grid,
2. downsample the residual channel into the coarse right-hand side,
3. solve the coarse residual equation,
4. upsample the coarse iterate (the error estimate),
5. add it to the fine iterate,
6. post-smooth.

``two_grid_cycle`` and ``v_cycle`` write this as a classic recursive routine;
``unet_form_cycle`` routes whole ``UNetState`` triples through
``ChannelTransfer`` block matrices and channel addition and produces the same
floating-point result.
"""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, ParameterError, SingularityError, SizeError
from .logging import get_logger
from .operators import StencilOp
from .schema import CycleConfig
from .signal import Signal
from .types import CoarseSolver, FloatArray

logger = get_logger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_CYCLES = 100
MIN_COARSE_SIZE = 3
HISTORY_HEADER = ("cycle", "residual_norm", "reduction_factor")


@dataclass(frozen=True)
class DiffusionSystem:
    """Matrix-free A = I + τ KᵀK on the grid of ``op``."""

    op: StencilOp
    tau: float

    def __post_init__(self) -> None:
        if not (self.tau >= 0 and math.isfinite(self.tau)):
            raise ParameterError(f"time step must be nonnegative and finite, got {self.tau}")

    @property
    def n(self) -> int:
        return self.op.n

    @property
    def h(self) -> float:
        return self.op.h

    def apply(self, x: FloatArray) -> FloatArray:
        return x + self.tau * self.op.apply_adjoint(self.op.apply(x))

    def __call__(self, x: FloatArray) -> FloatArray:
        return self.apply(x)

    def diagonal(self) -> FloatArray:
        return 1.0 + self.tau * self.op.gram_diagonal()

    def coarsen(self) -> DiffusionSystem:
        """Rediscretization at twice the spacing."""
        return self._coarse

    @cached_property
    def _coarse(self) -> DiffusionSystem:
        return DiffusionSystem(self.op.rediscretize(coarse_size(self.n)), self.tau)

    @cached_property
    def matrix(self) -> FloatArray:
        """Dense A = I + τ KᵀK for the direct coarse solve and diagnostics."""
        k = self.op.to_matrix()
        return np.eye(self.n) + self.tau * (k.T @ k)

    @cached_property
    def cholesky(self) -> tuple[FloatArray, bool]:
        try:
            return scipy.linalg.cho_factor(self.matrix)
        except np.linalg.LinAlgError as e:
            raise SingularityError(f"coarse matrix of size {self.n} is not positive definite") from e


@dataclass(frozen=True)
class LinearProblem:
    system: DiffusionSystem
    rhs: Signal

    def __post_init__(self) -> None:
        if self.rhs.n != self.system.n:
            raise SizeError(
                f"right-hand side has {self.rhs.n} samples, system expects {self.system.n}"
            )

    @classmethod
    def implicit_diffusion(cls, op: StencilOp, tau: float, rhs: Signal) -> LinearProblem:
        """(I + τKᵀK) x = rhs."""
        return cls(DiffusionSystem(op, tau), rhs)

    @property
    def n(self) -> int:
        return self.system.n

    def residual(self, x: FloatArray) -> FloatArray:
        return self.rhs.values - self.system.apply(x)

    def symmetry_defect(self, trials: int = 5, seed: int = 0) -> float:
        """Largest relative |⟨Ax,y⟩ − ⟨x,Ay⟩| over random pairs."""
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(trials):
            x, y = rng.standard_normal(self.n), rng.standard_normal(self.n)
            ax_y = float(self.system.apply(x) @ y)
            x_ay = float(x @ self.system.apply(y))
            scale = max(abs(ax_y), abs(x_ay), np.finfo(float).tiny)
            worst = max(worst, abs(ax_y - x_ay) / scale)
        return worst

    def is_positive(self, trials: int = 5, seed: int = 0) -> bool:
        rng = np.random.default_rng(seed)
        for _ in range(trials):
            x = rng.standard_normal(self.n)
            if not float(x @ self.system.apply(x)) > 0:
                return False
        return True


@dataclass(frozen=True)
class UNetState:
    """Iterate, right-hand side and residual channels on one grid."""

    x: Signal
    b: Signal
    r: Signal

    def __post_init__(self) -> None:
        if not (self.x.n == self.b.n == self.r.n):
            raise SizeError(
                f"channel lengths differ: x={self.x.n}, b={self.b.n}, r={self.r.n}"
            )

    @property
    def n(self) -> int:
        return self.x.n

    @property
    def h(self) -> float:
        return self.x.h

    def channels(self) -> tuple[Signal, Signal, Signal]:
        return (self.x, self.b, self.r)

    def __add__(self, other: UNetState) -> UNetState:
        if other.n != self.n:
            raise SizeError(f"cannot add states of length {self.n} and {other.n}")
        return UNetState(
            *(
                mine.with_values(mine.values + theirs.values)
                for mine, theirs in zip(self.channels(), other.channels())
            )
        )

    @classmethod
    def zeros(cls, n: int, h: float) -> UNetState:
        zero = Signal(np.zeros(n), h)
        return cls(zero, zero, zero)


def _state(system: DiffusionSystem, b: Signal, x: FloatArray) -> UNetState:
    return UNetState(b.with_values(x), b, b.with_values(b.values - system.apply(x)))


def smoother(
    system: DiffusionSystem, b: Signal, x: Signal, sweeps: int, omega: float
) -> UNetState:
    """``sweeps`` damped Jacobi sweeps x ← x + ωD⁻¹(b − Ax).

    Raises:
        SingularityError: If a diagonal entry of A vanishes
    """
    if not 0 < omega <= 1:
        raise ParameterError(f"damping must lie in (0, 1], got {omega}")
    if sweeps < 0:
        raise ParameterError(f"sweep count must be nonnegative, got {sweeps}")
    if b.n != system.n or x.n != system.n:
        raise SizeError(f"system has {system.n} unknowns, got b={b.n}, x={x.n}")
    diag = system.diagonal()
    if np.any(diag == 0.0):
        raise SingularityError(f"zero diagonal entry at index {int(np.argmin(np.abs(diag)))}")
    values = x.values
    for _ in range(sweeps):
        values = values + omega * (b.values - system.apply(values)) / diag
    return _state(system, b, values)


def coarse_size(n: int) -> int:
    """Number of coarse samples for ``n`` fine samples.

    Raises:
        SizeError: If ``n`` is not of the form 2·m + 1 with m ≥ 1
    """
    if n < 3 or n % 2 == 0:
        raise SizeError(f"a grid of {n} samples cannot be coarsened (need odd N >= 3)")
    return (n + 1) // 2


def check_coarsenable(n: int, levels: int) -> int:
    """Require ``levels - 1`` halvings of an ``n``-sample grid; returns the coarsest size.

    Every grid that is coarsened must have odd N ≥ 3, and the coarsest grid
    must still hold at least three samples, so ``levels`` grids need
    N = 2^(levels−1)·(N_c − 1) + 1 with N_c ≥ 3.

    Raises:
        SizeError: If a grid along the way cannot be halved or the coarsest
            grid is too small
    """
    size = n
    for _ in range(levels - 1):
        size = coarse_size(size)
    if size < MIN_COARSE_SIZE:
        raise SizeError(
            f"{levels} levels on {n} samples leave a coarsest grid of {size} samples "
            f"(need at least {MIN_COARSE_SIZE})"
        )
    return size


def restrict(v: Signal) -> Signal:
    """Full weighting (¼, ½, ¼), mirroring v across both end samples."""
    n_coarse = coarse_size(v.n)
    values = v.values
    ext = np.concatenate((values[1:2], values, values[-2:-1]))
    coarse = 0.25 * ext[0:-2:2] + 0.5 * ext[1:-1:2] + 0.25 * ext[2::2]
    return Signal(coarse[:n_coarse], 2.0 * v.h)


def prolong(v: Signal) -> Signal:
    """Linear interpolation onto the grid with half the spacing."""
    fine = np.empty(2 * v.n - 1)
    fine[0::2] = v.values
    fine[1::2] = 0.5 * (v.values[:-1] + v.values[1:])
    return Signal(fine, 0.5 * v.h)


def grid_inner(v: Signal, w: Signal) -> float:
    """Trapezoidal inner product h·Σ cᵢ vᵢ wᵢ with c = ½ at both ends.

    Restriction and prolongation are adjoint in it:
    ``grid_inner(restrict(v), w) == grid_inner(v, prolong(w))``.
    """
    if v.n != w.n:
        raise SizeError(f"cannot pair signals of length {v.n} and {w.n}")
    products = v.values * w.values
    return float(v.h * (products.sum() - 0.5 * (products[0] + products[-1])))


def _coarsest_solve(system: DiffusionSystem, b: Signal, cfg: CycleConfig) -> UNetState:
    if cfg.coarse_solver is CoarseSolver.DIRECT:
        x = scipy.linalg.cho_solve(system.cholesky, b.values)
        return _state(system, b, x)
    return smoother(system, b, b.with_values(np.zeros(b.n)), cfg.coarse_sweeps, cfg.damping)


def _cycle(
    system: DiffusionSystem, b: Signal, x0: Signal, cfg: CycleConfig, levels: int
) -> UNetState:
    pre = smoother(system, b, x0, cfg.pre_smooth, cfg.damping)
    coarse_system = system.coarsen()
    b_coarse = restrict(pre.r)
    if levels > 2:
        zero = b_coarse.with_values(np.zeros(b_coarse.n))
        coarse = _cycle(coarse_system, b_coarse, zero, cfg, levels - 1)
    else:
        coarse = _coarsest_solve(coarse_system, b_coarse, cfg)
    corrected = pre.x.with_values(pre.x.values + prolong(coarse.x).values)
    return smoother(system, b, corrected, cfg.post_smooth, cfg.damping)


def _initial(p: LinearProblem, x0: Signal | None) -> Signal:
    if x0 is None:
        return p.rhs.with_values(np.zeros(p.n))
    if x0.n != p.n:
        raise SizeError(f"initial guess has {x0.n} samples, system expects {p.n}")
    return x0


def two_grid_cycle(
    p: LinearProblem, x0: Signal | None = None, cfg: CycleConfig | None = None
) -> UNetState:
    """One two-level cycle; ``cfg.levels`` is ignored."""
    cfg = cfg or CycleConfig()
    check_coarsenable(p.n, 2)
    return _cycle(p.system, p.rhs, _initial(p, x0), cfg, 2)


def v_cycle(
    p: LinearProblem, x0: Signal | None = None, cfg: CycleConfig | None = None
) -> UNetState:
    """One V-cycle over ``cfg.levels`` grids.

    The fine grid must have N = 2^(levels−1)·(N_c − 1) + 1 samples with a
    coarsest size N_c ≥ 3, e.g. N = 9 allows at most three levels.

    Raises:
        SizeError: If the grid does not support ``cfg.levels - 1`` halvings
    """
    cfg = cfg or CycleConfig()
    check_coarsenable(p.n, cfg.levels)
    return _cycle(p.system, p.rhs, _initial(p, x0), cfg, cfg.levels)


# U-net form


@dataclass(frozen=True)
class ChannelTransfer:
    """3×3 block matrix over the (x, b, r) channels.

    ``blocks[i][j]`` maps input channel j into output channel i; ``None`` is
    a zero block. Rows without any block produce zero channels.
    """

    blocks: tuple[tuple[Callable[[Signal], Signal] | None, ...], ...]

    def __post_init__(self) -> None:
        if len(self.blocks) != 3 or any(len(row) != 3 for row in self.blocks):
            raise SizeError("channel transfer needs a 3x3 block layout")

    @classmethod
    def downsampling(cls) -> ChannelTransfer:
        """Residual channel restricted into the coarse right-hand side."""
        return cls(((None, None, None), (None, None, restrict), (None, None, None)))

    @classmethod
    def upsampling(cls) -> ChannelTransfer:
        """Coarse iterate prolonged into the fine iterate channel."""
        return cls(((prolong, None, None), (None, None, None), (None, None, None)))

    def __call__(self, state: UNetState, n: int, h: float) -> UNetState:
        inputs = state.channels()
        outputs = []
        for row in self.blocks:
            acc = np.zeros(n)
            for block, channel in zip(row, inputs):
                if block is not None:
                    acc = acc + block(channel).values
            outputs.append(Signal(acc, h))
        return UNetState(*outputs)


@dataclass(frozen=True)
class JacobiStage:
    """Smoother acting on a whole state: reads x and b, emits (x, b, r)."""

    system: DiffusionSystem
    sweeps: int
    omega: float

    def __call__(self, state: UNetState) -> UNetState:
        return smoother(self.system, state.b, state.x, self.sweeps, self.omega)


@dataclass(frozen=True)
class CoarseStage:
    system: DiffusionSystem
    cfg: CycleConfig

    def __call__(self, state: UNetState) -> UNetState:
        return _coarsest_solve(self.system, state.b, self.cfg)


def _unet(system: DiffusionSystem, state: UNetState, cfg: CycleConfig, levels: int) -> UNetState:
    pre = JacobiStage(system, cfg.pre_smooth, cfg.damping)(state)
    coarse_system = system.coarsen()
    down = ChannelTransfer.downsampling()(pre, coarse_system.n, 2.0 * pre.h)
    if levels > 2:
        coarse = _unet(coarse_system, down, cfg, levels - 1)
    else:
        coarse = CoarseStage(coarse_system, cfg)(down)
    up = ChannelTransfer.upsampling()(coarse, system.n, pre.h)
    return JacobiStage(system, cfg.post_smooth, cfg.damping)(pre + up)


def unet_form_cycle(
    p: LinearProblem, x0: Signal | None = None, cfg: CycleConfig | None = None
) -> UNetState:
    """The V-cycle over ``cfg.levels`` grids as an additive three-channel U-net.

    Each level nests the next one between its downsampling and upsampling
    transfers; the result equals ``v_cycle`` (``two_grid_cycle`` for two
    levels) bit for bit.

    Raises:
        SizeError: If the grid does not support ``cfg.levels - 1`` halvings
    """
    cfg = cfg or CycleConfig()
    check_coarsenable(p.n, cfg.levels)
    x = _initial(p, x0)
    state = UNetState(x, p.rhs, p.rhs.with_values(p.residual(x.values)))
    return _unet(p.system, state, cfg, cfg.levels)


# iteration


@dataclass(frozen=True)
class CycleRow:
    cycle: int
    residual_norm: float
    reduction_factor: float


@dataclass
class CycleHistory:
    """Residual norm after every cycle; row 0 is the initial guess."""

    rows: list[CycleRow] = field(default_factory=list)
    converged: bool = False

    def record(self, cycle: int, residual_norm: float) -> None:
        if self.rows and self.rows[-1].residual_norm > 0:
            factor = residual_norm / self.rows[-1].residual_norm
        else:
            factor = math.nan
        self.rows.append(CycleRow(cycle, residual_norm, factor))

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def reduction_factors(self) -> list[float]:
        return [row.reduction_factor for row in self.rows[1:]]

    def asymptotic_factor(self, tail: int = 5) -> float:
        """Geometric mean of the last ``tail`` reduction factors."""
        factors = [f for f in self.reduction_factors if math.isfinite(f) and f > 0]
        if not factors:
            return math.nan
        window = factors[-tail:]
        return float(np.exp(np.mean(np.log(window))))

    def to_csv_text(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(HISTORY_HEADER)
        for row in self.rows:
            writer.writerow(
                [row.cycle, f"{row.residual_norm:.17g}", f"{row.reduction_factor:.17g}"]
            )
        return buffer.getvalue()

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv_text())


def solve(
    p: LinearProblem,
    cfg: CycleConfig | None = None,
    tol: float = DEFAULT_TOL,
    max_cycles: int = DEFAULT_MAX_CYCLES,
    x0: Signal | None = None,
    require_convergence: bool = True,
) -> tuple[UNetState, CycleHistory]:
    """Repeat V-cycles until ‖r‖ ≤ tol·‖b‖.

    Raises:
        ConvergenceError: If ``require_convergence`` and the tolerance is not
            met within ``max_cycles``
    """
    cfg = cfg or CycleConfig()
    if not tol > 0:
        raise ParameterError(f"tolerance must be positive, got {tol}")
    if max_cycles < 0:
        raise ParameterError(f"cycle count must be nonnegative, got {max_cycles}")
    check_coarsenable(p.n, cfg.levels)
    x = _initial(p, x0)
    state = UNetState(x, p.rhs, p.rhs.with_values(p.residual(x.values)))
    target = tol * p.rhs.l2_norm()
    history = CycleHistory()
    history.record(0, state.r.l2_norm())
    for k in range(1, max_cycles + 1):
        if history.rows[-1].residual_norm <= target:
            break
        state = _cycle(p.system, p.rhs, state.x, cfg, cfg.levels)
        history.record(k, state.r.l2_norm())
        logger.debug(
            "Multigrid cycle",
            extra={"cycle": k, "residual_norm": history.rows[-1].residual_norm},
        )
    history.converged = history.rows[-1].residual_norm <= target
    if not history.converged and require_convergence:
        raise ConvergenceError(
            f"residual {history.rows[-1].residual_norm:.3e} above {target:.3e}", max_cycles
        )
    logger.info(
        "Multigrid solve finished",
        extra={
            "cycles": len(history) - 1,
            "residual_norm": history.rows[-1].residual_norm,
            "converged": history.converged,
        },
    )
    return state, history


def jacobi_reduction(
    p: LinearProblem,
    sweeps: int,
    cycles: int,
    cfg: CycleConfig | None = None,
    x0: Signal | None = None,
) -> CycleHistory:
    """Plain damped Jacobi, recorded every ``sweeps`` sweeps."""
    cfg = cfg or CycleConfig()
    x = _initial(p, x0)
    history = CycleHistory()
    history.record(0, float(np.linalg.norm(p.residual(x.values))))
    for k in range(1, cycles + 1):
        state = smoother(p.system, p.rhs, x, sweeps, cfg.damping)
        x = state.x
        history.record(k, state.r.l2_norm())
    return history


def _power_reduction(
    system: DiffusionSystem, step: Callable[[Signal, Signal], UNetState], cycles: int, seed: int
) -> float:
    rng = np.random.default_rng(seed)
    zero = Signal(np.zeros(system.n), system.h)
    x = zero.with_values(rng.standard_normal(system.n))
    factors: list[float] = []
    for _ in range(cycles):
        residual = float(np.linalg.norm(system.apply(x.values)))
        if residual == 0.0:
            break
        state = step(zero, x.with_values(x.values / residual))
        factors.append(state.r.l2_norm())
        x = state.x
    if not factors:
        return 0.0
    tail = np.array(factors[-5:])
    if np.any(tail == 0.0):
        return 0.0
    return float(np.exp(np.mean(np.log(tail))))


def cycle_reduction(
    system: DiffusionSystem, cfg: CycleConfig | None = None, cycles: int = 20, seed: int = 0
) -> float:
    """Asymptotic residual reduction per V-cycle.

    Power iteration on the homogeneous problem A x = 0 with the residual
    renormalized to one before every cycle.
    """
    cfg = cfg or CycleConfig()
    check_coarsenable(system.n, cfg.levels)
    return _power_reduction(
        system, lambda b, x: _cycle(system, b, x, cfg, cfg.levels), cycles, seed
    )


def jacobi_cycle_reduction(
    system: DiffusionSystem,
    sweeps: int,
    omega: float = 2.0 / 3.0,
    cycles: int = 20,
    seed: int = 0,
) -> float:
    """Asymptotic residual reduction per ``sweeps`` plain Jacobi sweeps."""
    return _power_reduction(
        system, lambda b, x: smoother(system, b, x, sweeps, omega), cycles, seed
    )
