"""
Invariant suite.

Each check_* function evaluates the invariants of one solver module on a
trajectory and records them in a RunReport. validate_trajectory runs all of
them; stepper_checks is the subset a plain solve reports.
"""

import logging
from typing import List, Optional, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from src.solver_core.dynamics import (
    breaking_approach_rates,
    energy_rate,
    rhs,
    rhs_q_alternate,
    state_energy,
)
from src.solver_core.exceptions import InsufficientDataError
from src.solver_core.kernel import (
    KernelWorkspace,
    build_workspace,
    eval_P_Px,
    eval_P_Px_brute,
    eval_P_physical,
)
from src.solver_core.reconstruct import (
    check_dissipative,
    distance_identity,
    interpolation_tolerance,
    jacobian_identity,
    physical_grid,
    to_physical,
)
from src.solver_core.scenarios import AntipeakonPair, Scenario, initial_energy
from src.solver_core.stepper import Trajectory
from src.solver_core.transform import LagrangianState, XiGrid, initial_state, xi_round_trip_error
from src.validation_systems.characteristics import (
    FieldProvider,
    backward_forward_distance,
    check_riccati,
    jacobian_check,
    omega_bound_check,
    thick_pushforward,
    trace,
    u_along_gap,
)
from src.validation_systems.config import ValidationConfig
from src.validation_systems.report import InvariantResult, RunReport

logger = logging.getLogger(__name__)

# Approach window below which v rates must be <= -1/2.
APPROACH_DELTA = 0.1


def _pre_breaking(trajectory: Trajectory) -> List[LagrangianState]:
    return [s for s in trajectory.snapshots if np.all(s.active)]


def _x_grid(trajectory: Trajectory) -> np.ndarray:
    umax = max(float(np.max(np.abs(s.u))) for s in trajectory.snapshots)
    return physical_grid(trajectory.scenario, umax)


def check_scenarios(report: RunReport, scenario: Scenario) -> None:
    """Energy quadrature convergence on nested grids and antipeakon oddness."""
    n = scenario.N_x
    c1, c2, c4 = (initial_energy(scenario.datum, scenario.D, m) for m in (n, 2 * n - 1, 4 * n - 3))
    e1, e2 = abs(c1 - c2), abs(c2 - c4)
    if e1 <= 1e-10 * max(1.0, c1):
        report.check("energy_quadrature_convergence", 0.0, 0.6, f"converged: |dC| = {e1:.3g}")
    else:
        report.check("energy_quadrature_convergence", e2 / e1, 0.6, f"|dC| = {e1:.3g}, {e2:.3g}")

    if isinstance(scenario.datum, AntipeakonPair):
        x = np.linspace(0.0, scenario.D, n)
        u_pos, _ = scenario.datum.evaluate(x)
        u_neg, _ = scenario.datum.evaluate(-x)
        report.check("datum_odd_symmetry", float(np.max(np.abs(u_pos + u_neg))), 0.0)
    else:
        report.skip("datum_odd_symmetry", f"datum kind {scenario.datum.kind} is not an antipeakon pair")


def check_transform(report: RunReport, scenario: Scenario, grid: XiGrid) -> LagrangianState:
    """Round trip of the xi transform and the initial energy in xi variables."""
    error, bound = xi_round_trip_error(grid, scenario.datum)
    report.check("xi_round_trip", error, 10.0 * bound)

    state0 = initial_state(grid, scenario.datum)
    e_xi, _ = state_energy(state0)
    report.check(
        "initial_energy_consistency",
        abs(e_xi - scenario.C),
        2.0 * grid.dxi * max(1.0, scenario.C),
        f"xi-space {e_xi:.8g} vs C {scenario.C:.8g}",
    )
    return state0


def check_nonlocal(report: RunReport, trajectory: Trajectory, config: ValidationConfig) -> None:
    """xi/physical P agreement, kernel domination and the brute-force oracle."""
    pre = _pre_breaking(trajectory)
    if pre:
        state = pre[-1]
        x_grid = _x_grid(trajectory)
        P_xi, _ = eval_P_Px(build_workspace(state))
        P_x, _ = eval_P_physical(to_physical(state, x_grid))
        P_at_y = np.interp(state.y, x_grid, P_x)
        tol = 5.0 * (state.grid.dxi + (x_grid[1] - x_grid[0])) * max(1.0, float(np.max(P_xi)))
        report.check(
            "xi_physical_P_consistency", float(np.max(np.abs(P_xi - P_at_y))), tol, f"t={state.t:.4g}"
        )
    else:
        report.skip("xi_physical_P_consistency", "no pre-breaking snapshot")

    worst = 0.0
    scale = 0.0
    for state in trajectory.snapshots:
        P, Px = eval_P_Px(build_workspace(state))
        worst = max(worst, float(-np.min(P)), float(np.max(np.abs(Px) - P)))
        scale = max(scale, float(np.max(P)))
    report.check("P_positivity_domination", max(worst, 0.0), 1e-12 * max(1.0, scale))

    ws = build_workspace(trajectory.final)
    stride = max(1, int(np.ceil(ws.d.size / config.brute_force_max_n)))
    sub = KernelWorkspace(d=ws.d[::stride], w=ws.w[::stride], active=ws.active[::stride])
    P_fast, Px_fast = eval_P_Px(sub)
    P_ref, Px_ref = eval_P_Px_brute(sub)
    ref_scale = float(np.max(np.abs(P_ref)))
    error = max(float(np.max(np.abs(P_fast - P_ref))), float(np.max(np.abs(Px_fast - Px_ref))))
    report.check(
        "recursion_brute_force",
        error / ref_scale if ref_scale > 0 else error,
        config.brute_force_rel_tol,
        f"N={sub.d.size}",
    )


def random_active_state(grid_size: int, rng: np.random.Generator) -> LagrangianState:
    """Random state with every node active and |v| at least 0.01 away from pi."""
    xi = np.linspace(-1.0, 1.0, grid_size)
    grid = XiGrid(xi=xi, ybar=xi.copy(), dybar_dxi=np.ones(grid_size), D=1.0)
    v = rng.uniform(-np.pi + 0.01, np.pi - 0.01, grid_size)
    q = rng.uniform(0.1, 10.0, grid_size)
    c = q * np.cos(0.5 * v) ** 2
    y = np.concatenate(([-1.0], -1.0 + np.cumsum(0.5 * (c[:-1] + c[1:]) * grid.dxi)))
    return LagrangianState(t=0.0, grid=grid, u=rng.uniform(-2.0, 2.0, grid_size), v=v, q=q, y=y)


def q_form_mismatch(state: LagrangianState) -> Tuple[float, float]:
    """(max |dq_alt - dq| over guarded nodes, max |dq|)."""
    P, _ = eval_P_Px(build_workspace(state))
    dq = rhs(state).dq
    alt = rhs_q_alternate(state, P)
    guarded = ~np.isnan(alt)
    if not np.any(guarded):
        return 0.0, 0.0
    return float(np.max(np.abs(alt[guarded] - dq[guarded]))), float(np.max(np.abs(dq[guarded])))


def check_dynamics(report: RunReport, trajectory: Trajectory, config: ValidationConfig) -> None:
    """Branch exactness, q-form equivalence, energy derivative and approach sign."""
    sample = trajectory.snapshots[0].copy()
    sample.v[:: max(1, sample.v.size // 8)] = -np.pi
    sample.v[1 :: max(1, sample.v.size // 5)] = -np.pi - 0.5
    branch_error = 0.0
    for state in trajectory.snapshots + [sample]:
        inactive = ~state.active
        if np.any(inactive):
            deriv = rhs(state)
            branch_error = max(
                branch_error,
                float(np.max(np.abs(deriv.dv[inactive] + 1.0))),
                float(np.max(np.abs(deriv.dq[inactive]))),
            )
    report.check("branch_exactness", branch_error, 0.0)

    rng = np.random.default_rng(config.seed)
    diff, scale = q_form_mismatch(random_active_state(config.q_form_samples, rng))
    for state in trajectory.snapshots:
        d, s = q_form_mismatch(state)
        diff, scale = max(diff, d), max(scale, s)
    report.check(
        "q_form_equivalence", diff / scale if scale > 0 else diff, config.q_form_rel_tol,
        f"{config.q_form_samples} random nodes plus every snapshot",
    )

    pre = _pre_breaking(trajectory)
    if pre:
        rates = [abs(energy_rate(s)) / max(1.0, state_energy(s)[1]) for s in pre]
        report.check(
            "energy_derivative_active", max(rates), config.distance_factor * pre[0].grid.dxi,
            f"{len(pre)} pre-breaking snapshot(s)",
        )
    else:
        report.skip("energy_derivative_active", "no pre-breaking snapshot")

    approach = [breaking_approach_rates(s, APPROACH_DELTA) for s in trajectory.snapshots]
    approach = np.concatenate(approach) if approach else np.zeros(0)
    if approach.size:
        report.check(
            "breaking_approach_sign", float(np.max(approach)), -0.5,
            f"{approach.size} node sample(s) within {APPROACH_DELTA} of -pi",
        )
    else:
        logger.warning("No node came within %.3g of -pi; approach-sign check is vacuous", APPROACH_DELTA)
        report.skip("breaking_approach_sign", f"vacuous: no node within {APPROACH_DELTA} of -pi")


def check_stepper(report: RunReport, trajectory: Trajectory, config: ValidationConfig) -> None:
    """Snapshot order, energy monotonicity, q bounds and frozen-branch permanence."""
    times = trajectory.times
    report.check("snapshot_time_order", float(np.count_nonzero(np.diff(times) <= 0)), 0.0)

    norms = trajectory.h1_norms()
    rates = np.diff(norms) / np.diff(times) if times.size > 1 else np.zeros(0)
    growth = max(0.0, float(np.max(rates))) if rates.size else 0.0
    report.check(
        "energy_monotone", growth, config.energy_rate_tol,
        f"{len(trajectory.energy_violations(config.energy_rate_tol))} violation(s)",
    )

    g = []
    for state in trajectory.snapshots:
        g.append(np.abs(np.where(state.active, rhs(state).dq / state.q, 0.0)))
    G = cumulative_trapezoid(np.array(g), times, axis=0, initial=0.0) if times.size > 1 else np.zeros((1, 1))
    log_q = np.abs(np.log(np.array([s.q for s in trajectory.snapshots]).clip(min=1e-300)))
    q_min = min(float(np.min(s.q)) for s in trajectory.snapshots)
    excess = float(np.max(log_q - 1.1 * G))
    report.check(
        "q_bounds", excess if q_min > 0 else np.inf, 0.05, f"min q = {q_min:.4g}"
    )

    event_tol = trajectory.config.event_tol
    worst = 0.0
    for prev, cur in zip(trajectory.snapshots, trajectory.snapshots[1:]):
        frozen = prev.broken
        if np.any(frozen):
            dt = cur.t - prev.t
            worst = max(
                worst,
                float(np.max(np.abs(cur.v[frozen] - prev.v[frozen] + dt))),
                float(np.max(np.abs(cur.q[frozen] - prev.q[frozen]))),
                float(np.max(np.abs(cur.t_br[frozen] - prev.t_br[frozen]))),
            )
        newly = cur.broken & ~prev.broken
        if np.any(newly):
            worst = max(worst, float(np.max(cur.v[newly] + np.pi)))
    report.check("inactive_permanence", worst, event_tol)


def check_reconstruct(report: RunReport, trajectory: Trajectory, config: ValidationConfig) -> None:
    """Jacobian and distance identities, t=0 round trip, energy consistency, dissipativity."""
    dxi = trajectory.final.grid.dxi
    report.check(
        "jacobian_identity",
        max(jacobian_identity(s) for s in trajectory.snapshots),
        config.jacobian_factor * dxi,
    )
    report.check(
        "distance_identity",
        max(distance_identity(s) for s in trajectory.snapshots),
        config.distance_factor * dxi,
    )

    x_grid = _x_grid(trajectory)
    first = trajectory.snapshots[0]
    if first.t == 0.0 and not np.any(first.broken):
        inside = x_grid[(x_grid >= first.y[0]) & (x_grid <= first.y[-1])]
        u_rec = to_physical(first, inside).u
        u_exact, _ = trajectory.scenario.datum.evaluate(inside)
        report.check("round_trip_t0", float(np.max(np.abs(u_rec - u_exact))), interpolation_tolerance(first))
    else:
        report.skip("round_trip_t0", "trajectory does not start from the initial datum")

    pre = _pre_breaking(trajectory)
    if pre:
        dx = x_grid[1] - x_grid[0]
        worst = 0.0
        scale = 1.0
        for state in pre:
            e_xi = state_energy(state)[0]
            e_x = to_physical(state, x_grid).E_H1half
            worst = max(worst, abs(e_xi - e_x))
            scale = max(scale, e_xi)
        report.check("energy_consistency", worst, 5.0 * (dxi + dx) * scale)
    else:
        report.skip("energy_consistency", "no pre-breaking snapshot")

    horizon = max(1.0, trajectory.scenario.T)
    dissipative = check_dissipative(trajectory, tol=config.energy_rate_tol * horizon, x_grid=x_grid)
    report.check("weak_energy", dissipative.max_h1_increase, config.energy_rate_tol * horizon)
    report.record(InvariantResult(
        "oleinik", dissipative.oleinik_ok, dissipative.K_hat, None,
        "fitted K_hat = max_t [max_x u_x] / (1 + 1/t) over t >= 0.05 T",
    ))
    report.diagnostics["K_hat"] = dissipative.K_hat


def _smooth_start(trajectory: Trajectory) -> Tuple[float, float]:
    """Leftmost crest of |u0| and a start point two units right of the rightmost crest."""
    state = trajectory.snapshots[0]
    magnitude = np.abs(state.u)
    if float(np.max(magnitude)) <= 1e-14:
        return 0.0, 0.0
    crests = state.y[magnitude >= 0.999 * np.max(magnitude)]
    return float(crests[0]), float(crests[-1]) + 2.0


def check_characteristics(report: RunReport, trajectory: Trajectory, config: ValidationConfig) -> None:
    """Along-characteristic identities on the reconstructed field."""
    provider = FieldProvider.from_trajectory(trajectory, _x_grid(trajectory))
    t0, t1 = provider.t_range
    crest, start = _smooth_start(trajectory)
    broke = bool(trajectory.t_br_map)
    post = "diagnostic after breaking" if broke else ""
    dt = config.char_dt

    char = trace(provider, start, t0, t1, dt)
    gap = u_along_gap(char)
    if broke:
        report.record(InvariantResult("u_along_agreement", None, gap, config.u_along_tol, post))
    else:
        report.check("u_along_agreement", gap, config.u_along_tol, f"start {start:.4g}")

    residual = check_riccati(char)
    if broke:
        report.record(InvariantResult("riccati_residual", None, residual, config.riccati_tol, post))
    else:
        report.check("riccati_residual", residual, config.riccati_tol, f"start {start:.4g}")

    fd, expected = jacobian_check(provider, start, 1e-3, t1, t0, dt)
    rel = abs(fd - expected) / abs(expected)
    if broke:
        report.record(InvariantResult(
            "jacobian_characteristic", None, rel, config.characteristic_jacobian_rel_tol, post
        ))
    else:
        report.check("jacobian_characteristic", rel, config.characteristic_jacobian_rel_tol)

    report.check(
        "backward_forward_correspondence",
        backward_forward_distance(provider, start, t1, t0, dt),
        config.correspondence_tol,
    )

    h = 4.0 * provider.dx
    wide = thick_pushforward(provider, (start - 0.5, start + 0.5), t1, h, t0, dt)
    narrow = thick_pushforward(provider, (start - 0.5, start + 0.5), t1, 0.5 * h, t0, dt)
    if wide.excess <= 1e-14:
        report.check("forward_uniqueness_collapse", 0.0, config.collapse_ratio, "no spread")
    else:
        report.check(
            "forward_uniqueness_collapse", narrow.excess / wide.excess, config.collapse_ratio,
            f"excess {wide.excess:.3g} at h={h:.3g}, {narrow.excess:.3g} at h/2",
        )

    scenario = trajectory.scenario
    horizon = min(t1, 0.99 * scenario.T_max)
    if horizon <= t0:
        report.skip("omega_bound", "no time before T_max")
        return
    omega = omega_bound_check(provider, crest - 0.5, crest + 0.5, horizon, scenario.C, scenario.L, t0, dt)
    if omega.min_slack is None:
        report.skip("omega_bound", "curves merged or no valid pair")
    else:
        report.check(
            "omega_bound", -omega.min_slack, config.omega_slack_tol,
            f"{omega.pairs_checked} pairs, merged={omega.merged}",
        )


def stepper_checks(report: RunReport, trajectory: Trajectory, config: ValidationConfig) -> RunReport:
    """Checks recorded by a plain solve: stepper invariants and dissipativity."""
    check_stepper(report, trajectory, config)
    horizon = max(1.0, trajectory.scenario.T)
    if len(trajectory.snapshots) >= 2:
        dissipative = check_dissipative(trajectory, tol=config.energy_rate_tol * horizon)
        report.check("weak_energy", dissipative.max_h1_increase, config.energy_rate_tol * horizon)
        report.record(InvariantResult("oleinik", dissipative.oleinik_ok, dissipative.K_hat, None))
    return report


def validate_trajectory(
    trajectory: Trajectory,
    config: ValidationConfig,
    report: Optional[RunReport] = None,
) -> RunReport:
    """
    Run the full invariant suite on a trajectory.

    Args:
        trajectory: Trajectory with at least two snapshots
        config: Validation tolerances
        report: Report to fill; a new one is created when omitted

    Returns:
        The filled RunReport

    Raises:
        InsufficientDataError: If the trajectory has fewer than two snapshots
    """
    if len(trajectory.snapshots) < 2:
        raise InsufficientDataError(
            f"Validation needs at least two snapshots, got {len(trajectory.snapshots)}"
        )
    if report is None:
        report = RunReport(command="validate")
    trajectory.recompute_energies()
    scenario = trajectory.scenario
    report.scenario = scenario.to_dict()
    report.stepper = trajectory.config.to_dict()
    report.breaking = trajectory.breaking_summary()
    report.energy_series = [
        {"t": t, "E_H1half": e1, "E_conserved": e2} for t, e1, e2 in trajectory.energy_series
    ]

    check_scenarios(report, scenario)
    check_transform(report, scenario, trajectory.final.grid)
    check_nonlocal(report, trajectory, config)
    check_dynamics(report, trajectory, config)
    check_stepper(report, trajectory, config)
    check_reconstruct(report, trajectory, config)
    check_characteristics(report, trajectory, config)
    report.skip("determinism", "measured by converge")
    report.skip("backend_agreement", "measured by converge")
    report.skip("self_convergence", "measured by converge")
    report.skip("breaking_time_agreement", "measured by converge")
    logger.info("Validation finished with %d failure(s)", len(report.failed))
    return report
