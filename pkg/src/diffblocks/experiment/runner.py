"""Single-scheme runs driven by an ``ExperimentConfig``."""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from pathlib import Path

from ..core.errors import DiffBlocksError, ParameterError
from ..core.explicit import BlockParams, run_chain, stable_tau
from ..core.flux import FluxFunction
from ..core.fsi import FsiCycle, run_fsi
from ..core.implicit import ImplicitStep, run_implicit
from ..core.logging import get_logger
from ..core.multigrid import LinearProblem, solve
from ..core.operators import StencilOp, build_operator
from ..core.schema import ExperimentConfig
from ..core.signal import Signal, read_signal, write_signal
from ..core.types import Scheme
from .generators import builtin_signals

logger = get_logger(__name__)

DEFAULT_OUTPUT_DIR = Path("diffblocks-out")

DEFAULT_STEPS = 100
DEFAULT_CYCLE_LENGTH = 4
DEFAULT_CYCLES = 10
DEFAULT_IMPLICIT_STEPS = 10
DEFAULT_INNER_ITERS = 50
DEFAULT_MG_TOL = 1e-10
DEFAULT_MG_CYCLES = 50


@dataclass
class RunOutcome:
    """Final signal plus the CSV diagnostics of one run."""

    scheme: Scheme
    signal: Signal
    csv_text: str
    tau: float


def load_signal(cfg: ExperimentConfig) -> Signal:
    if cfg.input is not None:
        return read_signal(cfg.input, cfg.h)
    return builtin_signals(cfg.signal or "step", cfg.n, cfg.seed, cfg.h)


def build_flux(cfg: ExperimentConfig) -> FluxFunction:
    return FluxFunction(cfg.flux, cfg.lam)


def build_op(cfg: ExperimentConfig, n: int) -> StencilOp:
    return build_operator(cfg.operator_weights(), cfg.h, n)


def resolve_tau(cfg: ExperimentConfig, op: StencilOp, flux: FluxFunction) -> float:
    """Configured τ, or the stability bound for ``"auto"``.

    Raises:
        ParameterError: If ``"auto"`` is asked of the zero operator
    """
    if cfg.tau != "auto":
        return float(cfg.tau)
    tau = stable_tau(op, flux)
    if math.isinf(tau):
        raise ParameterError("operator is zero, 'auto' time step is undefined")
    logger.info("Resolved automatic time step", extra={"tau": tau})
    return tau


def output_paths(cfg: ExperimentConfig, name: str) -> tuple[Path, Path]:
    """Final-signal and CSV paths of a run."""
    signal_path = cfg.output or DEFAULT_OUTPUT_DIR / f"{name}.txt"
    csv_path = cfg.trajectory or signal_path.with_suffix(".csv")
    return signal_path, csv_path


def execute(cfg: ExperimentConfig, u0: Signal | None = None) -> RunOutcome:
    """Run the configured scheme without touching the filesystem.

    Raises:
        DiffBlocksError: Whatever the scheme raises
    """
    if cfg.scheme is None:
        raise ParameterError("no scheme configured")
    u0 = u0 if u0 is not None else load_signal(cfg)
    flux = build_flux(cfg)
    op = build_op(cfg, u0.n)
    tau = resolve_tau(cfg, op, flux)

    if cfg.scheme is Scheme.MULTIGRID:
        problem = LinearProblem.implicit_diffusion(op, tau, u0)
        state, history = solve(
            problem,
            cfg.cycle_config(),
            tol=cfg.tol or DEFAULT_MG_TOL,
            max_cycles=DEFAULT_MG_CYCLES if cfg.cycles is None else cfg.cycles,
            require_convergence=cfg.tol is not None,
        )
        return RunOutcome(cfg.scheme, state.x, history.to_csv_text(), tau)

    bound = stable_tau(op, flux)
    if tau > bound and cfg.scheme is not Scheme.IMPLICIT:
        logger.warning(
            "Time step exceeds the stability bound", extra={"tau": tau, "bound": bound}
        )
    params = BlockParams(op, flux, tau)
    if cfg.scheme is Scheme.EXPLICIT:
        steps = DEFAULT_STEPS if cfg.steps is None else cfg.steps
        u, record = run_chain(params, u0, steps)
    elif cfg.scheme is Scheme.FSI:
        cycle = FsiCycle(params, cfg.cycle_length or DEFAULT_CYCLE_LENGTH)
        u, record = run_fsi(cycle, u0, DEFAULT_CYCLES if cfg.cycles is None else cfg.cycles)
    else:
        step = ImplicitStep(params, cfg.inner_iters or DEFAULT_INNER_ITERS, cfg.residual_tol)
        steps = DEFAULT_IMPLICIT_STEPS if cfg.steps is None else cfg.steps
        u, record = run_implicit(step, u0, steps)
    return RunOutcome(cfg.scheme, u, record.to_csv_text(), tau)


def run_experiment(cfg: ExperimentConfig) -> int:
    """Run one scheme and write the final signal and its CSV.

    Returns:
        0 on success, otherwise the ``exit_code`` of the error that stopped
        the run
    """
    try:
        outcome = execute(cfg)
        signal_path, csv_path = output_paths(cfg, outcome.scheme.value)
        write_signal(outcome.signal, signal_path)
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        csv_path.write_text(outcome.csv_text)
    except DiffBlocksError as e:
        logger.error("Run failed", extra={"error": str(e), "exit_code": e.exit_code})
        print(str(e), file=sys.stderr)
        return e.exit_code
    except OSError as e:
        logger.error("Run failed", extra={"error": str(e)})
        print(f"Error: {e}", file=sys.stderr)
        return 1
    logger.info(
        "Run finished",
        extra={"scheme": outcome.scheme.value, "signal": str(signal_path), "csv": str(csv_path)},
    )
    return 0
