"""Acceptance self-test: eight seeded suites with a CSV report.

Every check records the measured value next to its threshold. The report
holds no timings, so two runs on the same machine are byte-identical.
"""

from __future__ import annotations

import csv
import io
import math
import sys
from collections.abc import Callable
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
import scipy.linalg

from ..core.errors import DiffBlocksError, ResourceError
from ..core.explicit import (
    BlockParams,
    ResidualBlock,
    diffusion_block,
    run_chain,
    stable_tau,
)
from ..core.flux import FluxFunction, energy, sampled_lipschitz
from ..core.fsi import FsiCycle, fsi_cycle, fsi_weights, super_time
from ..core.implicit import ImplicitStep, contraction_margin, implicit_step
from ..core.logging import get_logger
from ..core.multigrid import (
    DiffusionSystem,
    LinearProblem,
    cycle_reduction,
    jacobi_cycle_reduction,
    solve,
    two_grid_cycle,
    unet_form_cycle,
)
from ..core.operators import (
    DEFAULT_NORM_TOL,
    DenseOp,
    StencilOp,
    assemble_matrix,
    spectral_norm_sq,
)
from ..core.resources import ResourceTracker
from ..core.schema import CycleConfig, ResourceLimits
from ..core.signal import Signal
from ..core.types import FluxKind, Operator
from .compare import worst_case_input
from .generators import builtin_signals

logger = get_logger(__name__)

REPORT_HEADER = ("suite", "check", "value", "threshold", "passed")
SUITE_SEED = 20210401


@dataclass(frozen=True)
class Check:
    suite: int
    name: str
    value: float
    threshold: float
    passed: bool


def _at_most(suite: int, name: str, value: float, threshold: float) -> Check:
    return Check(suite, name, value, threshold, bool(value <= threshold))


def _at_least(suite: int, name: str, value: float, threshold: float) -> Check:
    return Check(suite, name, value, threshold, bool(value >= threshold))


def _random_stencil(rng: np.random.Generator, n: int, constant_free: bool = False) -> StencilOp:
    orders = [1, 2] if constant_free else [0, 1, 2]
    chosen = [m for m in orders if rng.random() < 0.6] or [int(rng.choice(orders))]
    weights = tuple((m, float(rng.uniform(0.2, 2.0))) for m in chosen)
    return StencilOp(weights, float(rng.uniform(0.5, 2.0)), n)


def _random_flux(rng: np.random.Generator) -> FluxFunction:
    kinds = list(FluxKind)
    return FluxFunction(kinds[int(rng.integers(len(kinds)))], float(rng.uniform(0.3, 3.0)))


def _random_signal(rng: np.random.Generator, n: int, h: float = 1.0) -> Signal:
    return Signal(rng.standard_normal(n), h)


# 1: residual block equivalence


def suite_equivalence(rng: np.random.Generator) -> list[Check]:
    worst = 0.0
    for _ in range(500):
        n = int(rng.integers(4, 65))
        op = _random_stencil(rng, n)
        flux = _random_flux(rng)
        tau = stable_tau(op, flux) * float(rng.uniform(0.1, 1.0))
        p = BlockParams(op, flux, tau)
        u = _random_signal(rng, n, op.h)
        literal = ResidualBlock.from_diffusion(p)(u.values)
        worst = max(worst, float(np.max(np.abs(literal - diffusion_block(p, u).values))))
    return [_at_most(1, "residual_block_vs_step_max_abs", worst, 1e-14)]


# 2: stability and its converse


def _random_operator(rng: np.random.Generator, n: int) -> Operator:
    if rng.random() < 0.5:
        return _random_stencil(rng, n)
    rows = int(rng.integers(1, n + 4))
    return DenseOp(rng.standard_normal((rows, n)) / math.sqrt(n))


def suite_stability(rng: np.random.Generator) -> list[Check]:
    worst_ratio = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 258))
        op = _random_operator(rng, n)
        flux = _random_flux(rng)
        p = BlockParams(op, flux, stable_tau(op, flux))
        values = rng.standard_normal(n)
        norm = float(np.linalg.norm(values))
        for _ in range(200):
            values = values - p.flux_term(values)
            following = float(np.linalg.norm(values))
            if norm > 0:
                worst_ratio = max(worst_ratio, following / norm)
            norm = following

    op = StencilOp(((1, 1.0),), 1.0, 64)
    linear = FluxFunction(FluxKind.LINEAR)
    matrix = assemble_matrix(op)
    lam_max = float(scipy.linalg.eigvalsh(matrix.T @ matrix)[-1])
    tau = 2.0 * stable_tau(op, linear)
    start = worst_case_input(matrix, op.h)
    final, record = run_chain(BlockParams(op, linear, tau), start, 100)
    growth = final.l2_norm() / start.l2_norm()
    norms = record.column("l2_norm")
    rate = (norms[-1] / norms[0]) ** (1.0 / (len(norms) - 1))
    oracle = tau * lam_max - 1.0
    return [
        _at_most(2, "stable_norm_ratio_minus_one", worst_ratio - 1.0, 1e-12),
        _at_least(2, "converse_growth_100_steps", growth, 10.0),
        _at_most(2, "converse_rate_rel_error", abs(rate - oracle) / oracle, 0.05),
    ]


# 3: adjoints and spectral norms


def suite_spectral(rng: np.random.Generator) -> list[Check]:
    worst_adjoint = 0.0
    worst_norm = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 65))
        op = _random_stencil(rng, n)
        u = rng.standard_normal(op.n_in)
        v = rng.standard_normal(op.n_out)
        ku, ktv = op.apply(u), op.apply_adjoint(v)
        scale = np.linalg.norm(ku) * np.linalg.norm(v) + np.linalg.norm(u) * np.linalg.norm(ktv)
        if scale > 0:
            worst_adjoint = max(worst_adjoint, abs(float(ku @ v) - float(u @ ktv)) / scale)
        matrix = assemble_matrix(op)
        dense = float(scipy.linalg.eigvalsh(matrix.T @ matrix)[-1])
        estimate = spectral_norm_sq(op)
        worst_norm = max(worst_norm, abs(estimate - dense) / dense)
    forward4 = spectral_norm_sq(StencilOp(((1, 1.0),), 1.0, 4))
    expected = 4.0 * math.sin(3.0 * math.pi / 8.0) ** 2
    return [
        _at_most(3, "adjoint_identity_rel", worst_adjoint, 1e-12),
        _at_most(3, "spectral_norm_vs_dense_rel", worst_norm, DEFAULT_NORM_TOL),
        _at_most(3, "forward_difference_n4_abs", abs(forward4 - expected), 1e-12),
    ]


# 4: nonmonotone activation


def suite_activation(rng: np.random.Generator) -> list[Check]:
    checks = []
    lam = float(rng.uniform(0.5, 2.0))
    pm = FluxFunction(FluxKind.PERONA_MALIK_EXP, lam)
    s = np.linspace(-5.0 * lam, 5.0 * lam, 100_001)
    resolution = float(s[1] - s[0])
    phi = pm.flux(s)
    checks.append(_at_most(4, "pm_argmax_offset", abs(float(s[np.argmax(phi)]) - lam), resolution))
    checks.append(_at_most(4, "pm_argmin_offset", abs(float(s[np.argmin(phi)]) + lam), resolution))
    checks.append(
        _at_most(4, "pm_antisymmetry_max_abs", float(np.max(np.abs(pm.flux(-s) + phi))), 0.0)
    )
    for kind in FluxKind:
        f = FluxFunction(kind, lam)
        checks.append(
            _at_most(4, f"lipschitz_{kind.value}_abs", abs(sampled_lipschitz(f) - f.lipschitz), 1e-6)
        )
    return checks


# 5: FSI


def suite_fsi(rng: np.random.Generator) -> list[Check]:
    exact = fsi_weights(3) == [Fraction(2, 3), Fraction(6, 5), Fraction(10, 7)]
    op = StencilOp(((1, 1.0),), 1.0, 64)
    linear = FluxFunction(FluxKind.LINEAR)
    base = BlockParams(op, linear, 0.25)
    super_ok = all(
        super_time(FsiCycle(base, length)) == length * (length + 1) / 3 * 0.25
        for length in range(1, 21)
    )

    p = BlockParams.stable(op, linear)
    u0 = builtin_signals("sine", 64)
    cycle = FsiCycle(p, 4)
    fsi = fsi_cycle(cycle, u0)
    substeps = math.ceil(100 * cycle.super_time / p.tau)
    reference, _ = run_chain(BlockParams(op, linear, cycle.super_time / substeps), u0, substeps)
    rel = float(np.linalg.norm(fsi.values - reference.values)) / reference.l2_norm()

    fine_op = StencilOp(((1, 1.0),), 1.0, 129)
    fine_p = BlockParams.stable(fine_op, linear)
    step = builtin_signals("step", 129)
    steady = step.mean()
    long_cycle = fsi_cycle(FsiCycle(fine_p, 8), step)
    plain, _ = run_chain(fine_p, step, 8)
    ratio = float(np.linalg.norm(long_cycle.values - steady)) / float(
        np.linalg.norm(plain.values - steady)
    )
    return [
        Check(5, "weights_l3_exact", float(exact), 1.0, exact),
        Check(5, "super_time_exact", float(super_ok), 1.0, super_ok),
        _at_most(5, "fsi_l4_vs_fine_explicit_rel", rel, 0.05),
        _at_most(5, "fsi_l8_vs_8_steps_distance_ratio", ratio, 1.0),
    ]


# 6: implicit steps


def _newton_oracle(p: BlockParams, u: np.ndarray) -> np.ndarray:
    """Damped Newton on v − u + τKᵀΦ(Kv) = 0 for the Perona–Malik flux."""
    k = assemble_matrix(p.op)
    lam2 = p.flux.lam**2

    def residual(v: np.ndarray) -> np.ndarray:
        return v - u + p.tau * k.T @ p.flux.flux(k @ v)

    v = u.copy()
    for _ in range(100):
        r = residual(v)
        if np.linalg.norm(r) <= 1e-15 * max(np.linalg.norm(u), 1.0):
            break
        s = k @ v
        slope = np.exp(-s * s / (2.0 * lam2)) * (1.0 - s * s / lam2)
        jacobian = np.eye(u.size) + p.tau * k.T @ (slope[:, None] * k)
        delta = np.linalg.solve(jacobian, r)
        step = 1.0
        while np.linalg.norm(residual(v - step * delta)) > np.linalg.norm(r) and step > 1e-4:
            step *= 0.5
        v = v - step * delta
    return v


def suite_implicit(rng: np.random.Generator) -> list[Check]:
    worst_single = 0.0
    for _ in range(50):
        n = int(rng.integers(4, 65))
        op = _random_stencil(rng, n)
        flux = _random_flux(rng)
        p = BlockParams(op, flux, stable_tau(op, flux) * float(rng.uniform(0.05, 0.45)))
        u = _random_signal(rng, n, op.h)
        single = implicit_step(ImplicitStep(p, 1), u).signal
        worst_single = max(worst_single, float(np.max(np.abs(single.values - diffusion_block(p, u).values))))

    op = StencilOp(((1, 1.0),), 1.0, 32)
    linear = FluxFunction(FluxKind.LINEAR)
    p = BlockParams(op, linear, 0.25 * stable_tau(op, linear))
    u = _random_signal(rng, 32)
    matrix = assemble_matrix(op)
    dense = scipy.linalg.solve(np.eye(32) + p.tau * matrix.T @ matrix, u.values, assume_a="pos")
    step = ImplicitStep(p, 500)
    result = implicit_step(step, u)
    linear_err = float(np.max(np.abs(result.signal.values - dense)))
    history = np.array(result.history)
    significant = history[history > 1e-10 * u.l2_norm()]
    ratios = significant[1:] / significant[:-1]
    worst_rate = float(np.max(ratios)) if ratios.size else 0.0

    pm_op = StencilOp(((1, 1.0),), 1.0, 16)
    pm = FluxFunction(FluxKind.PERONA_MALIK_EXP, 0.5)
    pm_p = BlockParams(pm_op, pm, 0.25 * stable_tau(pm_op, pm))
    pm_u = Signal(builtin_signals("step", 16).values + 0.1 * rng.standard_normal(16))
    pm_result = implicit_step(ImplicitStep(pm_p, 500), pm_u)
    newton_err = float(np.max(np.abs(pm_result.signal.values - _newton_oracle(pm_p, pm_u.values))))

    big_op = StencilOp(((1, 1.0),), 1.0, 65)
    big_tau = 10.0 * stable_tau(big_op, linear)
    v = _random_signal(rng, 65)
    worst_growth = 0.0
    for _ in range(20):
        state, _ = solve(LinearProblem.implicit_diffusion(big_op, big_tau, v), tol=1e-13)
        worst_growth = max(worst_growth, state.x.l2_norm() / v.l2_norm())
        v = state.x
    return [
        _at_most(6, "single_iteration_vs_explicit_max_abs", worst_single, 1e-14),
        _at_most(6, "linear_fixed_point_vs_dense_max_abs", linear_err, 1e-10),
        _at_most(6, "pm_fixed_point_vs_newton_max_abs", newton_err, 1e-8),
        _at_most(
            6, "residual_decay_rate", worst_rate, contraction_margin(step) * (1.0 + 1e-8)
        ),
        _at_most(6, "implicit_10x_norm_ratio", worst_growth, 1.0 + 1e-10),
    ]


# 7: multigrid and the U-net form


def _dense_two_grid(system: DiffusionSystem, cfg: CycleConfig) -> np.ndarray:
    """Error propagation matrix of the two-grid cycle, assembled densely."""
    n = system.n
    coarse = system.coarsen()
    a, a_coarse = system.matrix, coarse.matrix
    restriction = np.zeros(((n + 1) // 2, n))
    for i in range(restriction.shape[0]):
        for offset, weight in ((-1, 0.25), (0, 0.5), (1, 0.25)):
            j = 2 * i + offset
            j = -j if j < 0 else (2 * (n - 1) - j if j > n - 1 else j)
            restriction[i, j] += weight
    prolongation = np.zeros((n, (n + 1) // 2))
    for j in range(prolongation.shape[1]):
        prolongation[2 * j, j] = 1.0
        if 2 * j + 1 < n:
            prolongation[2 * j + 1, j] += 0.5
            prolongation[2 * j + 1, j + 1] += 0.5
    jacobi = np.eye(n) - cfg.damping * a / np.diag(a)[:, None]
    correction = np.eye(n) - prolongation @ np.linalg.solve(a_coarse, restriction @ a)
    return (
        np.linalg.matrix_power(jacobi, cfg.post_smooth)
        @ correction
        @ np.linalg.matrix_power(jacobi, cfg.pre_smooth)
    )


def suite_multigrid(rng: np.random.Generator) -> list[Check]:
    cfg = CycleConfig()
    worst_unet = 0.0
    for _ in range(100):
        op = StencilOp(((1, 1.0),), 1.0, 33)
        problem = LinearProblem.implicit_diffusion(
            op, float(rng.uniform(0.5, 20.0)), _random_signal(rng, 33)
        )
        x0 = _random_signal(rng, 33)
        classic = two_grid_cycle(problem, x0, cfg)
        unet = unet_form_cycle(problem, x0, cfg)
        worst_unet = max(worst_unet, float(np.max(np.abs(classic.x.values - unet.x.values))))

    factors = {}
    for n in (33, 65, 129, 257):
        system = DiffusionSystem(StencilOp(((1, 1.0),), 1.0, n), 10.0)
        factors[n] = cycle_reduction(system, cfg)
    spread = (max(factors.values()) - min(factors.values())) / max(factors.values())
    system_129 = DiffusionSystem(StencilOp(((1, 1.0),), 1.0, 129), 10.0)
    jacobi = jacobi_cycle_reduction(system_129, cfg.pre_smooth + cfg.post_smooth, cfg.damping)

    system_33 = DiffusionSystem(StencilOp(((1, 1.0),), 1.0, 33), 10.0)
    b = _random_signal(rng, 33)
    problem = LinearProblem(system_33, b)
    one = two_grid_cycle(problem, None, cfg)
    error_matrix = _dense_two_grid(system_33, cfg)
    exact = np.linalg.solve(system_33.matrix, b.values)
    oracle_x = exact - error_matrix @ exact
    oracle_factor = float(np.linalg.norm(b.values - system_33.matrix @ oracle_x)) / b.l2_norm()
    measured = one.r.l2_norm() / b.l2_norm()

    checks = [_at_most(7, "unet_vs_two_grid_max_abs", worst_unet, 1e-14)]
    checks += [_at_most(7, f"reduction_factor_n{n}", rho, 1.0) for n, rho in factors.items()]
    checks.append(_at_most(7, "reduction_factor_spread_rel", spread, 0.2))
    checks.append(_at_most(7, "jacobi_factor_n129", jacobi, 1.0))
    checks.append(_at_least(7, "jacobi_over_multigrid_n129", jacobi / factors[129], 5.0))
    checks.append(_at_most(7, "two_grid_vs_dense_oracle_abs", abs(measured - oracle_factor), 1e-10))
    return checks


# 8: conservation and energy


def suite_conservation(rng: np.random.Generator) -> list[Check]:
    worst_mean = 0.0
    worst_energy = 0.0
    for _ in range(200):
        n = int(rng.integers(4, 129))
        op = _random_stencil(rng, n, constant_free=True)
        flux = _random_flux(rng)
        tau_bound = stable_tau(op, flux)
        u = _random_signal(rng, n, op.h)

        p = BlockParams(op, flux, tau_bound)
        v = u
        for _ in range(20):
            following = diffusion_block(p, v)
            worst_mean = max(worst_mean, abs(following.mean() - v.mean()))
            v = following

        half = BlockParams(op, flux, 0.5 * tau_bound)
        v = u
        e = energy(flux, op, v)
        for _ in range(20):
            v = diffusion_block(half, v)
            following_energy = energy(flux, op, v)
            if e > 0:
                worst_energy = max(worst_energy, following_energy / e)
            e = following_energy

    worst_psi = 0.0
    for kind in FluxKind:
        f = FluxFunction(kind, float(rng.uniform(0.5, 2.0)))
        s2 = np.linspace(0.01, 10.0, 200) * f.lam**2
        delta = 1e-6 * s2
        derivative = (f.psi(s2 + delta) - f.psi(s2 - delta)) / (2.0 * delta)
        g = f.diffusivity(s2)
        worst_psi = max(worst_psi, float(np.max(np.abs(derivative - g) / g)))
    return [
        _at_most(8, "mean_drift_per_step_abs", worst_mean, 1e-12),
        _at_most(8, "energy_ratio_minus_one", worst_energy - 1.0, 1e-10),
        _at_most(8, "psi_derivative_vs_g_rel", worst_psi, 1e-6),
    ]


SUITES: dict[int, Callable[[np.random.Generator], list[Check]]] = {
    1: suite_equivalence,
    2: suite_stability,
    3: suite_spectral,
    4: suite_activation,
    5: suite_fsi,
    6: suite_implicit,
    7: suite_multigrid,
    8: suite_conservation,
}


def run_suites(
    suites: list[int] | None = None, limits: ResourceLimits | None = None
) -> list[Check]:
    """Run the selected suites, each under its own time budget."""
    tracker = ResourceTracker(limits or ResourceLimits())
    checks: list[Check] = []
    for number in suites or sorted(SUITES):
        rng = np.random.default_rng(SUITE_SEED + number)
        try:
            with tracker.track_resources(f"suite {number}"):
                found = SUITES[number](rng)
        except ResourceError as e:
            logger.error("Suite over budget", extra={"suite": number, "error": str(e)})
            usage = tracker.get_usage()
            checks.append(
                Check(number, "within_budget", usage["execution_time"],
                      tracker.limits.timeout_sec, False)
            )
            continue
        except DiffBlocksError as e:
            logger.error("Suite failed", extra={"suite": number, "error": str(e)})
            checks.append(Check(number, "completed", 0.0, 1.0, False))
            continue
        checks.extend(found)
        logger.info(
            "Suite finished",
            extra={"suite": number, "failed": [c.name for c in found if not c.passed]},
        )
    return checks


def format_report(checks: list[Check]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    for c in checks:
        writer.writerow(
            [c.suite, c.name, f"{c.value:.17g}", f"{c.threshold:.17g}", str(c.passed).lower()]
        )
    return buffer.getvalue()


def run_selftest(
    report: str | Path | None = None,
    suites: list[int] | None = None,
    limits: ResourceLimits | None = None,
) -> int:
    """Run the suites and write the report (stdout without a path).

    Returns:
        0 iff every check passed, 1 otherwise
    """
    checks = run_suites(suites, limits)
    text = format_report(checks)
    if report is None:
        sys.stdout.write(text)
    else:
        path = Path(report)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    failed = [c for c in checks if not c.passed]
    for c in failed:
        print(f"FAILED suite {c.suite} {c.name}: {c.value:.6g} vs {c.threshold:.6g}",
              file=sys.stderr)
    return 0 if not failed else 1
