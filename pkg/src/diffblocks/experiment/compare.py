"""Named scheme comparisons.

Each mode runs its member schemes concurrently in worker threads, writes one
CSV per member and then a merged ``compare.csv`` whose rows are ordered by
member name, so the merged file does not depend on completion order.
"""

from __future__ import annotations

import asyncio
import math
import sys
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from ..core.errors import DiffBlocksError
from ..core.explicit import BlockParams, TrajectoryRecord, TrajectoryRow, run_chain, stable_tau
from ..core.flux import FluxFunction
from ..core.fsi import FsiCycle, run_fsi
from ..core.implicit import ImplicitStep, run_implicit
from ..core.logging import get_logger
from ..core.multigrid import LinearProblem, jacobi_reduction, solve
from ..core.operators import assemble_matrix
from ..core.schema import ExperimentConfig
from ..core.signal import Signal
from ..core.types import CompareMode, FluxKind
from .runner import DEFAULT_OUTPUT_DIR, build_flux, build_op, load_signal, resolve_tau

logger = get_logger(__name__)

# default problem of the multigrid comparison: A = I + 10 KᵀK
MULTIGRID_TAU = 10.0
# fine explicit steps per FSI super step / implicit step
REFERENCE_SUBSTEPS = 4
IMPLICIT_TAU_FRACTION = 0.25
CONVERSE_STEPS = 100
CONVERSE_FACTOR = 2.0

Member = Callable[[], str]


@dataclass
class ComparisonResult:
    mode: CompareMode
    outputs: dict[str, str] = field(default_factory=dict)

    def merged_csv(self) -> str:
        """Member CSVs stacked under one header with a leading ``scheme`` column."""
        lines: list[str] = []
        for name in sorted(self.outputs):
            header, *rows = self.outputs[name].splitlines()
            if not lines:
                lines.append(f"scheme,{header}")
            lines.extend(f"{name},{row}" for row in rows)
        return "".join(f"{line}\n" for line in lines)


def _subsample(record: TrajectoryRecord, every: int, span: float) -> TrajectoryRecord:
    """Every ``every``-th row, re-indexed to step k at time k·span."""
    rows = [
        TrajectoryRow(k, k * span, row.l2_norm, row.energy, row.mean)
        for k, row in enumerate(record.rows[::every])
    ]
    return TrajectoryRecord(rows)


def _fsi_vs_explicit(cfg: ExperimentConfig, u0: Signal) -> dict[str, Member]:
    flux = build_flux(cfg)
    op = build_op(cfg, u0.n)
    tau = resolve_tau(cfg, op, flux)
    cycle = FsiCycle(BlockParams(op, flux, tau), cfg.cycle_length or 4)
    cycles = 5 if cfg.cycles is None else cfg.cycles
    span = cycle.super_time
    substeps = max(1, math.ceil(span / tau))
    fine = BlockParams(op, flux, span / substeps)

    def fsi() -> str:
        _, record = run_fsi(cycle, u0, cycles)
        return record.to_csv_text()

    def explicit() -> str:
        _, record = run_chain(fine, u0, cycles * substeps)
        return _subsample(record, substeps, span).to_csv_text()

    return {"fsi": fsi, "explicit": explicit}


def _implicit_vs_explicit(cfg: ExperimentConfig, u0: Signal) -> dict[str, Member]:
    flux = build_flux(cfg)
    op = build_op(cfg, u0.n)
    if cfg.tau == "auto":
        tau = IMPLICIT_TAU_FRACTION * stable_tau(op, flux)
    else:
        tau = float(cfg.tau)
    step = ImplicitStep(BlockParams(op, flux, tau), cfg.inner_iters or 100, cfg.residual_tol)
    steps = 10 if cfg.steps is None else cfg.steps
    fine = BlockParams(op, flux, tau / REFERENCE_SUBSTEPS)

    def implicit() -> str:
        _, record = run_implicit(step, u0, steps)
        return record.to_csv_text()

    def explicit() -> str:
        _, record = run_chain(fine, u0, steps * REFERENCE_SUBSTEPS)
        return _subsample(record, REFERENCE_SUBSTEPS, tau).to_csv_text()

    return {"explicit": explicit, "implicit": implicit}


def _multigrid_vs_jacobi(cfg: ExperimentConfig, u0: Signal) -> dict[str, Member]:
    op = build_op(cfg, u0.n)
    tau = MULTIGRID_TAU if cfg.tau == "auto" else float(cfg.tau)
    problem = LinearProblem.implicit_diffusion(op, tau, u0)
    cycle_cfg = cfg.cycle_config()
    cycles = 10 if cfg.cycles is None else cfg.cycles

    def multigrid() -> str:
        _, history = solve(
            problem, cycle_cfg, tol=cfg.tol or 1e-300, max_cycles=cycles,
            require_convergence=False,
        )
        return history.to_csv_text()

    def jacobi() -> str:
        sweeps = cycle_cfg.pre_smooth + cycle_cfg.post_smooth
        return jacobi_reduction(problem, sweeps, cycles, cycle_cfg).to_csv_text()

    return {"jacobi": jacobi, "multigrid": multigrid}


def worst_case_input(op_matrix: np.ndarray, h: float) -> Signal:
    """Unit eigenvector of KᵀK for its largest eigenvalue."""
    _, vectors = scipy.linalg.eigh(op_matrix.T @ op_matrix)
    top = vectors[:, -1]
    # fix the sign so the input does not depend on the LAPACK build
    if top[np.argmax(np.abs(top))] < 0:
        top = -top
    return Signal(top, h)


def _stability_converse(cfg: ExperimentConfig, u0: Signal) -> dict[str, Member]:
    flux = FluxFunction(FluxKind.LINEAR)
    op = build_op(cfg, u0.n)
    bound = stable_tau(op, flux)
    start = worst_case_input(assemble_matrix(op), u0.h)
    steps = CONVERSE_STEPS if cfg.steps is None else cfg.steps

    def run_at(tau: float) -> Member:
        def member() -> str:
            _, record = run_chain(BlockParams(op, flux, tau), start, steps)
            return record.to_csv_text()

        return member

    return {"stable": run_at(bound), "unstable": run_at(CONVERSE_FACTOR * bound)}


_MODES: dict[CompareMode, Callable[[ExperimentConfig, Signal], dict[str, Member]]] = {
    CompareMode.FSI_VS_EXPLICIT: _fsi_vs_explicit,
    CompareMode.IMPLICIT_VS_EXPLICIT: _implicit_vs_explicit,
    CompareMode.MULTIGRID_VS_JACOBI: _multigrid_vs_jacobi,
    CompareMode.STABILITY_CONVERSE: _stability_converse,
}


async def run_comparison(cfg: ExperimentConfig) -> ComparisonResult:
    """Run all members of ``cfg.compare`` concurrently.

    Raises:
        DiffBlocksError: The first error raised by any member
    """
    if cfg.compare is None:
        raise DiffBlocksError("no comparison mode configured")
    members = _MODES[cfg.compare](cfg, load_signal(cfg))
    names = sorted(members)
    logger.info("Starting comparison", extra={"mode": cfg.compare.value, "members": names})
    texts = await asyncio.gather(*(asyncio.to_thread(members[name]) for name in names))
    return ComparisonResult(cfg.compare, dict(zip(names, texts)))


def write_comparison(result: ComparisonResult, out_dir: Path) -> Path:
    """Write one CSV per member and the merged file; returns the merged path."""
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in result.outputs.items():
        (out_dir / f"{name}.csv").write_text(text)
    merged = out_dir / "compare.csv"
    merged.write_text(result.merged_csv())
    return merged


def run_compare(cfg: ExperimentConfig) -> int:
    """CLI entry for ``compare``; returns an exit code."""
    try:
        result = asyncio.run(run_comparison(cfg))
        out_dir = cfg.output or DEFAULT_OUTPUT_DIR / result.mode.value
        merged = write_comparison(result, out_dir)
    except DiffBlocksError as e:
        logger.error("Comparison failed", extra={"error": str(e), "exit_code": e.exit_code})
        print(str(e), file=sys.stderr)
        return e.exit_code
    except OSError as e:
        logger.error("Comparison failed", extra={"error": str(e)})
        print(f"Error: {e}", file=sys.stderr)
        return 1
    logger.info("Comparison finished", extra={"mode": result.mode.value, "merged": str(merged)})
    return 0
