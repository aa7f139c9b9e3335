"""
Convergence study.

Runs a scenario at N_xi * 2^k for both backends concurrently, measures the
self-convergence order, the rk4/picard distance and run determinism.
"""

import asyncio
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.solver_core.config import StepperConfig
from src.solver_core.scenarios import Scenario, make_scenario
from src.solver_core.stepper import Trajectory, run
from src.solver_core.transform import LagrangianState
from src.validation_systems.config import ValidationConfig
from src.validation_systems.report import InvariantResult, RunReport

logger = logging.getLogger(__name__)


@dataclass
class ConvergenceResult:
    """Outcome of a convergence study."""
    table: List[Dict[str, Any]] = field(default_factory=list)
    order: Optional[float] = None
    backend_distance: Optional[float] = None
    backend_distance_final: Optional[float] = None
    comparison_time: Optional[float] = None
    deterministic: Optional[bool] = None
    breaking_spread: Optional[float] = None
    event_tol: Optional[float] = None


def level_scenario(scenario: Scenario, k: int) -> Scenario:
    """The scenario refined to N_xi * 2^k."""
    return make_scenario(
        scenario.datum, scenario.D, scenario.N_xi * 2 ** k, scenario.N_x, scenario.T, scenario.dt_safety
    )


def xi_distance(coarse: LagrangianState, fine: LagrangianState) -> float:
    """Sup distance in u and y after interpolating the fine state onto the coarse xi nodes."""
    xi_c, xi_f = coarse.grid.xi, fine.grid.xi
    du = np.abs(coarse.u - np.interp(xi_c, xi_f, fine.u))
    dy = np.abs(coarse.y - np.interp(xi_c, xi_f, fine.y))
    return float(max(np.max(du), np.max(dy)))


def state_distance(a: LagrangianState, b: LagrangianState) -> float:
    """Sup distance over (u, v, q) on a shared grid."""
    return float(max(np.max(np.abs(a.u - b.u)), np.max(np.abs(a.v - b.v)), np.max(np.abs(a.q - b.q))))


def identical(a: Trajectory, b: Trajectory) -> bool:
    """Bitwise equality of every snapshot."""
    if len(a.snapshots) != len(b.snapshots):
        return False
    return all(
        sa.t == sb.t
        and np.array_equal(sa.as_array(), sb.as_array())
        and np.array_equal(sa.t_br, sb.t_br)
        for sa, sb in zip(a.snapshots, b.snapshots)
    )


def observed_order(errors: List[float]) -> Optional[float]:
    """log2 ratio of the last two errors; None if undefined."""
    if len(errors) < 2:
        return None
    prev, last = errors[-2], errors[-1]
    if prev <= 0 or last <= 0:
        return None if prev <= 0 else math.inf
    return math.log2(prev / last)


def backend_comparison(rk4: Trajectory, picard: Trajectory) -> Tuple[float, float, float]:
    """
    Distance between the backends before the first breaking and at the final time.

    Returns:
        Tuple of (pre-breaking distance, final distance, comparison time)
    """
    first = min(
        [t for t in (rk4.breaking_summary()["min"], picard.breaking_summary()["min"]) if t is not None],
        default=math.inf,
    )
    index = 0
    for k, (a, b) in enumerate(zip(rk4.snapshots, picard.snapshots)):
        if a.t < first and b.t < first:
            index = k
    pre = state_distance(rk4.snapshots[index], picard.snapshots[index])
    final = state_distance(rk4.final, picard.final)
    return pre, final, float(rk4.snapshots[index].t)


async def _run_level(semaphore: asyncio.Semaphore, scenario: Scenario, config: StepperConfig) -> Trajectory:
    async with semaphore:
        return await asyncio.to_thread(run, scenario, config)


async def convergence_study(
    scenario: Scenario,
    config: StepperConfig,
    levels: int,
    threads: int = 1,
) -> ConvergenceResult:
    """
    Run the refinement levels with both backends.

    Args:
        scenario: Base scenario (level 0)
        config: Stepper configuration; the backend field is overridden per run
        levels: Number of levels, at least 2
        threads: Maximum number of concurrent runs

    Returns:
        ConvergenceResult

    Raises:
        ValueError: If levels < 2
    """
    if levels < 2:
        raise ValueError(f"Convergence needs at least 2 levels, got {levels}")
    semaphore = asyncio.Semaphore(max(1, threads))
    scenarios = [level_scenario(scenario, k) for k in range(levels)]
    rk4_cfg = StepperConfig.from_dict({**config.to_dict(), "backend": "rk4"})
    picard_cfg = StepperConfig.from_dict({**config.to_dict(), "backend": "picard"})

    jobs = [_run_level(semaphore, s, rk4_cfg) for s in scenarios]
    jobs += [_run_level(semaphore, s, picard_cfg) for s in scenarios]
    jobs.append(_run_level(semaphore, scenarios[0], rk4_cfg))
    results = await asyncio.gather(*jobs)
    rk4_runs, picard_runs, rerun = results[:levels], results[levels:2 * levels], results[-1]

    result = ConvergenceResult()
    errors = []
    for k, (traj, picard) in enumerate(zip(rk4_runs, picard_runs)):
        row = {
            "N_xi": traj.scenario.N_xi,
            "error": None,
            "picard_error": None,
            "E_H1half_final": traj.energy_series[-1][1],
            "first_breaking": traj.breaking_summary()["min"],
        }
        if k > 0:
            error = xi_distance(rk4_runs[k - 1].final, traj.final)
            errors.append(error)
            row["error"] = error
            row["picard_error"] = xi_distance(picard_runs[k - 1].final, picard.final)
        result.table.append(row)
    result.order = observed_order(errors)

    picard_run = picard_runs[-1]
    pre, final, t_cmp = backend_comparison(rk4_runs[-1], picard_run)
    result.backend_distance = pre
    result.backend_distance_final = final
    result.comparison_time = t_cmp
    result.deterministic = identical(rk4_runs[0], rerun)
    result.event_tol = config.event_tol

    rk4_br, picard_br = rk4_runs[-1].final.t_br, picard_run.final.t_br
    both = np.isfinite(rk4_br) & np.isfinite(picard_br)
    if np.any(both):
        result.breaking_spread = float(np.max(np.abs(rk4_br[both] - picard_br[both])))

    logger.info(
        "Convergence: errors %s, order %s, backend distance %.3g at t=%.4g",
        [f"{e:.3g}" for e in errors], result.order, pre, t_cmp,
    )
    return result


def record_convergence(report: RunReport, result: ConvergenceResult, config: ValidationConfig) -> RunReport:
    """Record self-convergence, backend agreement, determinism and breaking-time agreement in a report."""
    report.convergence = result.table
    report.diagnostics.update({
        "backend_distance_final": result.backend_distance_final,
        "backend_comparison_time": result.comparison_time,
        "breaking_time_spread": result.breaking_spread,
    })

    errors = [row["error"] for row in result.table if row["error"] is not None]
    if errors and max(errors) <= 1e-12:
        report.record(InvariantResult("self_convergence", True, 0.0, config.min_order, "errors at round-off level"))
    elif result.order is None:
        report.skip("self_convergence", "order needs at least two errors")
    else:
        report.record(InvariantResult(
            "self_convergence", bool(result.order >= config.min_order), result.order, config.min_order,
            "observed order must be at least the tolerance",
        ))

    report.check(
        "backend_agreement", result.backend_distance, config.backend_tol,
        f"sup over (u, v, q) at t={result.comparison_time}",
    )
    report.check("determinism", 0.0 if result.deterministic else 1.0, 0.0, "bitwise rerun of level 0")
    if result.breaking_spread is None:
        report.skip("breaking_time_agreement", "no node broke under both backends")
    else:
        event_tol = result.event_tol if result.event_tol is not None else StepperConfig().event_tol
        report.check(
            "breaking_time_agreement", result.breaking_spread, event_tol,
            "max |t_br(rk4) - t_br(picard)| over nodes broken in both",
        )
    return report
