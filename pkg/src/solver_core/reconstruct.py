"""
Reconstruction of the physical solution from Lagrangian snapshots.

Maps (y, u, v) back to u(t, x), u_x(t, x) on a uniform x grid, computes
energies and evaluates the identities a dissipative solution must satisfy.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from src.solver_core.dynamics import state_energy
from src.solver_core.exceptions import OrderViolationError
from src.solver_core.kernel import build_workspace
from src.solver_core.scenarios import Scenario
from src.solver_core.transform import LagrangianState

logger = logging.getLogger(__name__)

# Consecutive positions closer than this times D are one point.
CLUSTER_TOL = 1e-12
# Decrease of y beyond this fraction of dxi is an ordering failure.
ORDER_TOL = 0.1
# Oleinik fit ignores snapshots before this fraction of the horizon.
OLEINIK_T_MIN_FRACTION = 0.05


@dataclass(eq=False)
class PhysicalField:
    """u and u_x sampled on a uniform x grid at time t, with both energies."""
    t: float
    x: np.ndarray
    u: np.ndarray
    ux: np.ndarray
    E_H1half: float = field(init=False)
    E_conserved: float = field(init=False)

    def __post_init__(self):
        self.E_H1half = float(trapezoid(self.u ** 2 + 0.5 * self.ux ** 2, self.x))
        self.E_conserved = float(0.5 * trapezoid(self.u ** 2 + self.ux ** 2, self.x))

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"x": self.x, "u": self.u, "ux": self.ux})


def physical_grid(scenario: Scenario, umax: float) -> np.ndarray:
    """Uniform N_x-point grid on [-D - T umax, D + T umax]."""
    half = scenario.D + scenario.T * umax
    return np.linspace(-half, half, scenario.N_x)


def _collapse(state: LagrangianState) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Merge broken runs and coincident positions into single points.

    Returns:
        Tuple of (positions, mean u, tan(v/2) or NaN where the point is not one active node)

    Raises:
        OrderViolationError: If y decreases beyond tolerance
    """
    D = state.grid.D
    y = state.y
    active = state.active
    steps = np.diff(y)
    # Inside an inactive run all nodes share one physical point.
    checked = np.where(active[:-1] | active[1:], steps, 0.0)
    if checked.size and np.min(checked) < -ORDER_TOL * state.grid.dxi:
        i = int(np.argmin(checked))
        raise OrderViolationError(
            f"y decreases by {-steps[i]:.3g} between nodes {i} and {i + 1} at t={state.t:.6g}"
        )
    if steps.size and np.min(steps) < 0:
        if np.min(checked) < 0:
            logger.warning("Clamping y decreases of up to %.3g at t=%.6g", -np.min(checked), state.t)
        y = np.maximum.accumulate(y)

    same = (np.diff(y) <= CLUSTER_TOL * D) | (~active[:-1] & ~active[1:])
    group = np.concatenate(([0], np.cumsum(~same)))
    counts = np.bincount(group)
    y_c = np.bincount(group, weights=y) / counts
    u_c = np.bincount(group, weights=state.u) / counts

    tan_half = np.where(active, np.tan(0.5 * np.where(active, state.v, 0.0)), 0.0)
    single = (counts == 1) & (np.bincount(group, weights=active.astype(float)) == 1)
    tan_c = np.where(single, np.bincount(group, weights=tan_half), np.nan)
    return y_c, u_c, tan_c


def to_physical(state: LagrangianState, x_grid: np.ndarray) -> PhysicalField:
    """
    Reconstruct u and u_x on an x grid.

    u is the piecewise-linear interpolant of the collapsed graph (y, u), zero
    outside its hull. u_x is the slope of that interpolant on each cell; at a
    point that is exactly a single active node it is tan(v/2) of that node.

    Args:
        state: Lagrangian state
        x_grid: Uniform grid

    Returns:
        PhysicalField on x_grid

    Raises:
        OrderViolationError: If y decreases beyond tolerance
    """
    y_c, u_c, tan_c = _collapse(state)
    x = np.asarray(x_grid, dtype=float)
    u = np.interp(x, y_c, u_c, left=0.0, right=0.0)
    if y_c.size < 2:
        return PhysicalField(t=state.t, x=x, u=u, ux=np.zeros_like(x))

    k = np.clip(np.searchsorted(y_c, x, side="right") - 1, 0, y_c.size - 2)
    width = y_c[k + 1] - y_c[k]
    s = (x - y_c[k]) / width
    ux = (u_c[k + 1] - u_c[k]) / width
    at_left = (s == 0.0) & np.isfinite(tan_c[k])
    at_right = (s == 1.0) & np.isfinite(tan_c[k + 1])
    ux = np.where(at_left, tan_c[k], np.where(at_right, tan_c[k + 1], ux))
    inside = (x >= y_c[0]) & (x <= y_c[-1])
    return PhysicalField(t=state.t, x=x, u=u, ux=np.where(inside, ux, 0.0))


def energy(obj: Union[LagrangianState, PhysicalField]) -> Tuple[float, float]:
    """
    Energies of a state or field.

    Returns:
        Tuple (E_H1half, E_conserved): int (u^2 + u_x^2 / 2) and 1/2 int (u^2 + u_x^2)
    """
    if isinstance(obj, LagrangianState):
        return state_energy(obj)
    return obj.E_H1half, obj.E_conserved


def interpolation_tolerance(state: LagrangianState) -> float:
    """Bound on piecewise-linear interpolation error of u between nodes."""
    if state.y.size < 2:
        return 1e-12
    ux = np.tan(0.5 * np.clip(state.v, -np.pi + 1e-12, np.pi - 1e-12))
    spacing = float(np.max(np.diff(state.y)))
    jump = float(np.max(np.abs(np.diff(ux))))
    return spacing * jump + 1e-12


def jacobian_identity(state: LagrangianState) -> float:
    """
    Relative mismatch of dy/dxi against q cos^2(v/2) on active cells.

    Returns:
        max |(y_{i+1} - y_i) / dxi - (c_i + c_{i+1}) / 2| / max c over cells
        with both ends active, 0 if there are none
    """
    active = state.active
    c = np.where(active, state.q * np.cos(0.5 * state.v) ** 2, 0.0)
    cells = active[:-1] & active[1:]
    if not np.any(cells):
        return 0.0
    fd = np.diff(state.y) / state.grid.dxi
    avg = 0.5 * (c[:-1] + c[1:])
    return float(np.max(np.abs(fd - avg)[cells]) / max(np.max(avg[cells]), 1e-300))


def distance_identity(state: LagrangianState, window: float = 1.0) -> float:
    """
    Mismatch of |y(xi') - y(xi)| against the active-set integral of q cos^2(v/2).

    Compares all node pairs a fixed xi distance `window` apart.
    """
    ws = build_workspace(state)
    m = max(1, int(round(window / state.grid.dxi)))
    if m >= state.y.size:
        m = state.y.size - 1
    dy = state.y[m:] - state.y[:-m]
    dd = ws.d[m:] - ws.d[:-m]
    return float(np.max(np.abs(dy - dd)))


def strong_form_residual(
    field_a: PhysicalField,
    field_b: PhysicalField,
    window: Optional[Tuple[float, float]] = None,
) -> float:
    """
    Finite-difference residual of u_t - u_xxt + 3 u u_x - 2 u_x u_xx - u u_xxx.

    Time derivatives are forward differences between the two fields; spatial
    derivatives are centered differences of the mean of the two fields.

    Args:
        field_a: Field at the earlier time
        field_b: Field at the later time, same x grid
        window: (x_lo, x_hi) where the solution is smooth; defaults to the interior

    Returns:
        Max absolute residual over the window
    """
    dt = field_b.t - field_a.t
    x = field_a.x
    dx = field_a.dx

    def d(f):
        return np.gradient(f, dx)

    u = 0.5 * (field_a.u + field_b.u)
    ux = d(u)
    uxx = d(ux)
    uxxx = d(uxx)
    ut = (field_b.u - field_a.u) / dt
    uxxt = (d(d(field_b.u)) - d(d(field_a.u))) / dt
    residual = ut - uxxt + 3.0 * u * ux - 2.0 * ux * uxx - u * uxxx

    lo, hi = window if window is not None else (x[0], x[-1])
    mask = (x >= lo + 4 * dx) & (x <= hi - 4 * dx)
    if not np.any(mask):
        return 0.0
    return float(np.max(np.abs(residual[mask])))


@dataclass
class DissipativeReport:
    """Weak energy and Oleinik outcomes over a trajectory."""
    times: List[float]
    h1_norms: List[float]
    max_h1_increase: float
    weak_energy_ok: bool
    K_hat: Optional[float]
    oleinik_ok: Optional[bool]


def check_dissipative(trajectory: Any, tol: float = 1e-4, x_grid: Optional[np.ndarray] = None) -> DissipativeReport:
    """
    Check the weak energy condition and fit the Oleinik constant.

    Args:
        trajectory: Trajectory with at least two snapshots
        tol: Allowed H1-norm excess over its initial value
        x_grid: Reconstruction grid; defaults to physical_grid of the scenario

    Returns:
        DissipativeReport; K_hat is max over t >= 0.05 T of max_x u_x / (1 + 1/t)
    """
    snapshots = trajectory.snapshots
    norms = [float(np.sqrt(2.0 * state_energy(s)[1])) for s in snapshots]
    increase = max(n - norms[0] for n in norms)

    scenario = trajectory.scenario
    if x_grid is None:
        umax = max(float(np.max(np.abs(s.u))) for s in snapshots)
        x_grid = physical_grid(scenario, umax)

    t_min = OLEINIK_T_MIN_FRACTION * scenario.T
    K_hat = None
    for state in snapshots:
        if state.t <= 0 or state.t < t_min:
            continue
        ratio = float(np.max(to_physical(state, x_grid).ux)) / (1.0 + 1.0 / state.t)
        K_hat = ratio if K_hat is None else max(K_hat, ratio)
    if K_hat is not None:
        K_hat = max(K_hat, 0.0)

    return DissipativeReport(
        times=[s.t for s in snapshots],
        h1_norms=norms,
        max_h1_increase=float(increase),
        weak_energy_ok=bool(increase <= tol),
        K_hat=K_hat,
        oleinik_ok=None if K_hat is None else bool(np.isfinite(K_hat)),
    )
