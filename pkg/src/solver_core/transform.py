"""
Grid transform for the Camassa-Holm solver.

Builds the xi coordinate defined by  int_0^{ybar(xi)} (1 + u0'^2) dx = xi  and
assembles the initial Lagrangian state on a uniform xi grid.
"""

import logging
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
import pandas as pd

from src.solver_core.exceptions import TransformError
from src.solver_core.scenarios import InitialDatum, Scenario

logger = logging.getLogger(__name__)

# Fine x samples per xi node for the cumulative quadrature.
FINE_FACTOR = 8
# A node within this fraction of dxi of a kink sits on the kink.
KINK_SNAP = 1e-9
# Kinks closer than this many dxi share stencil nodes and are left uncorrected.
KINK_STENCIL = 2.0
# Gauss-Legendre points per interval of the round-trip oracle.
ORACLE_POINTS = 8

SNAPSHOT_COLUMNS = ["xi", "y", "u", "v", "q", "t_br"]


@dataclass(frozen=True, eq=False)
class XiGrid:
    """
    Uniform xi nodes with their initial positions ybar(xi).

    kinks holds the interior points where u0' jumps and kink_xi their xi
    coordinates. Both stay fixed for all time.
    """
    xi: np.ndarray
    ybar: np.ndarray
    dybar_dxi: np.ndarray
    D: float
    kinks: np.ndarray = field(default_factory=lambda: np.zeros(0))
    kink_xi: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def size(self) -> int:
        return int(self.xi.size)

    @property
    def dxi(self) -> float:
        return float(self.xi[1] - self.xi[0])


def nodes_on_kinks(xi: np.ndarray, kink_xi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Nodes lying on a kink, up to KINK_SNAP * dxi.

    Returns:
        Tuple of (node indices, indices into kink_xi)
    """
    kink_xi = np.asarray(kink_xi, dtype=float)
    if kink_xi.size == 0 or xi.size < 2:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    dxi = xi[1] - xi[0]
    i = np.clip(np.searchsorted(xi, kink_xi), 1, xi.size - 1)
    i = np.where(np.abs(xi[i - 1] - kink_xi) <= np.abs(xi[i] - kink_xi), i - 1, i)
    hit = np.abs(xi[i] - kink_xi) <= KINK_SNAP * dxi
    return i[hit], np.flatnonzero(hit)


def kink_cells(grid: XiGrid) -> Tuple[np.ndarray, np.ndarray]:
    """
    Cells of the isolated kinks of a grid.

    A kink is isolated when nodes k-1 .. k+2 around it exist and no other kink
    lies within KINK_STENCIL * dxi. A node on a kink is its own k with theta 0.

    Returns:
        Tuple of (k, theta) with the kink at xi_k + theta dxi, 0 <= theta < 1
    """
    kink_xi = np.asarray(grid.kink_xi, dtype=float)
    if kink_xi.size == 0:
        return np.zeros(0, dtype=int), np.zeros(0)
    dxi = grid.dxi
    s = (kink_xi - grid.xi[0]) / dxi
    k = np.floor(s + KINK_SNAP).astype(int)
    theta = np.clip(s - k, 0.0, 1.0)
    isolated = np.ones(kink_xi.size, dtype=bool)
    crowded = np.diff(kink_xi) < KINK_STENCIL * dxi
    isolated[:-1] &= ~crowded
    isolated[1:] &= ~crowded
    keep = isolated & (k >= 1) & (k + 2 <= grid.size - 1)
    return k[keep], theta[keep]


def one_sided_limits(f: np.ndarray, k: np.ndarray, theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Left and right limits of a nodal density at xi_k + theta dxi, extrapolated linearly."""
    left = f[k] + theta * (f[k] - f[k - 1])
    right = f[k + 1] - (1.0 - theta) * (f[k + 2] - f[k + 1])
    return left, right


def kink_weights(f: np.ndarray, grid: XiGrid) -> np.ndarray:
    """
    Node corrections that make sum(f) dxi a jump-aware quadrature of f.

    Each isolated kink contributes the Euler-Maclaurin jump terms
    -(theta - 1/2) [f] + dxi / 2 (theta^2 - theta + 1/6) [f'], split between
    nodes k and k+1 so that their first moment sits on the kink.

    Args:
        f: Nodal density, smooth between kinks
        grid: Grid carrying the kinks

    Returns:
        Array to add to f before summing
    """
    extra = np.zeros(f.shape)
    k, theta = kink_cells(grid)
    if k.size == 0:
        return extra
    left, right = one_sided_limits(f, k, theta)
    slope_jump = (f[k + 2] - f[k + 1] - f[k] + f[k - 1]) / grid.dxi
    mass = -(theta - 0.5) * (right - left) + 0.5 * grid.dxi * (theta ** 2 - theta + 1.0 / 6.0) * slope_jump
    np.add.at(extra, k, (1.0 - theta) * mass)
    np.add.at(extra, k + 1, theta * mass)
    return extra


def cell_integrals(f: np.ndarray, grid: XiGrid) -> np.ndarray:
    """
    Integrals of a nonnegative nodal density over each xi cell.

    Cells without a kink use the trapezoid rule; a kink cell is split at the
    kink and each part uses its own one-sided limit, clipped at zero.
    """
    out = 0.5 * (f[:-1] + f[1:]) * grid.dxi
    k, theta = kink_cells(grid)
    if k.size:
        left, right = one_sided_limits(f, k, theta)
        left, right = np.maximum(left, 0.0), np.maximum(right, 0.0)
        out[k] = 0.5 * grid.dxi * (theta * (f[k] + left) + (1.0 - theta) * (right + f[k + 1]))
    return out


@dataclass(eq=False)
class LagrangianState:
    """
    The triple (u, v, q) plus positions y on a fixed xi grid at time t.

    t_br holds each node's breaking time, np.inf while the node is unbroken.
    """
    t: float
    grid: XiGrid
    u: np.ndarray
    v: np.ndarray
    q: np.ndarray
    y: np.ndarray
    t_br: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.t_br is None:
            self.t_br = np.full(self.u.shape, np.inf)

    @property
    def broken(self) -> np.ndarray:
        return np.isfinite(self.t_br)

    @property
    def active(self) -> np.ndarray:
        return (self.v > -np.pi) & ~self.broken

    def as_array(self) -> np.ndarray:
        """Pack (u, v, q, y) into a (4, N) array."""
        return np.stack([self.u, self.v, self.q, self.y])

    def with_values(self, t: float, values: np.ndarray, t_br: np.ndarray = None) -> "LagrangianState":
        """New state at time t from a packed (4, N) array."""
        return LagrangianState(
            t=float(t),
            grid=self.grid,
            u=values[0].copy(),
            v=values[1].copy(),
            q=values[2].copy(),
            y=values[3].copy(),
            t_br=(self.t_br if t_br is None else t_br).copy(),
        )

    def copy(self) -> "LagrangianState":
        return self.with_values(self.t, self.as_array())


def _breakpoints(datum: InitialDatum, D: float) -> np.ndarray:
    """Interior kinks of the datum together with x = 0, sorted."""
    kinks = np.asarray(datum.kinks, dtype=float)
    return np.union1d(kinks[(kinks > -D) & (kinks < D)], [0.0])


def _fine_quadrature(datum: InitialDatum, D: float, n: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Cumulative integral of 1 + u0'^2 from x = 0 on a fine grid of [-D, D].

    The uniform n-point grid is merged with the kinks of the datum and with
    x = 0. Each cell evaluates the density at the inner neighbours of its ends,
    so a kink only ever contributes its one-sided slopes.

    Returns:
        Tuple of (fine x, xi at fine x, |density change| across each cell)
    """
    base = np.linspace(-D, D, n)
    h = base[1] - base[0]
    breaks = _breakpoints(datum, D)
    idx = np.searchsorted(breaks, base)
    nearest = np.minimum(
        np.abs(base - breaks[np.clip(idx - 1, 0, breaks.size - 1)]),
        np.abs(base - breaks[np.clip(idx, 0, breaks.size - 1)]),
    )
    keep = nearest > 1e-6 * h
    keep[[0, -1]] = True
    x = np.union1d(base[keep], breaks)

    _, ux_right = datum.evaluate(np.nextafter(x[:-1], np.inf))
    _, ux_left = datum.evaluate(np.nextafter(x[1:], -np.inf))
    f_right = 1.0 + ux_right ** 2
    f_left = 1.0 + ux_left ** 2
    xi = np.concatenate(([0.0], np.cumsum(0.5 * (f_right + f_left) * np.diff(x))))
    xi -= xi[np.searchsorted(x, 0.0)]
    return x, xi, np.abs(f_left - f_right)


def _node_slopes(datum: InitialDatum, grid: XiGrid) -> np.ndarray:
    """u0' at the nodes; a node on a kink takes the slope from its left."""
    _, ux = datum.evaluate(grid.ybar)
    nodes, which = nodes_on_kinks(grid.xi, grid.kink_xi)
    if nodes.size:
        _, left = datum.evaluate(np.nextafter(grid.kinks[which], -np.inf))
        ux[nodes] = left
    return ux


def build_xi_grid(scenario: Scenario) -> XiGrid:
    """
    Build the xi grid for a scenario.

    The nodes are spaced uniformly between the images of -D and D, so a datum
    symmetric about x = 0 has a node at x = 0 only when N_xi is odd. For even
    N_xi the two central nodes straddle it symmetrically.

    Args:
        scenario: The scenario

    Returns:
        XiGrid: Uniform xi nodes covering the image of [-D, D]

    Raises:
        TransformError: If the cumulative integral is not strictly increasing
    """
    datum = scenario.datum
    n_fine = FINE_FACTOR * scenario.N_xi + 1
    x_fine, xi_fine, _ = _fine_quadrature(datum, scenario.D, n_fine)
    if not np.all(np.diff(xi_fine) > 0):
        raise TransformError("Cumulative integral of 1 + u0'^2 is not strictly increasing")

    kinks = np.asarray(datum.kinks, dtype=float)
    kinks = kinks[(kinks > -scenario.D) & (kinks < scenario.D)]
    kink_xi = np.interp(kinks, x_fine, xi_fine)

    xi = np.linspace(xi_fine[0], xi_fine[-1], scenario.N_xi)
    ybar = np.interp(xi, xi_fine, x_fine)
    nodes, which = nodes_on_kinks(xi, kink_xi)
    ybar[nodes] = kinks[which]

    grid = XiGrid(xi=xi, ybar=ybar, dybar_dxi=np.ones_like(xi), D=scenario.D, kinks=kinks, kink_xi=kink_xi)
    ux = _node_slopes(datum, grid)
    logger.debug(
        "xi grid: N=%d, xi in [%.6g, %.6g], dxi=%.3g, %d kinks (%d on nodes)",
        scenario.N_xi, xi[0], xi[-1], xi[1] - xi[0], kinks.size, nodes.size,
    )
    return XiGrid(
        xi=xi, ybar=ybar, dybar_dxi=1.0 / (1.0 + ux ** 2), D=scenario.D, kinks=kinks, kink_xi=kink_xi,
    )


def xi_round_trip_error(grid: XiGrid, datum: InitialDatum) -> Tuple[float, float]:
    """
    Re-integrate 1 + u0'^2 up to each ybar by Gauss-Legendre quadrature.

    The integration intervals run between consecutive points of ybar, the
    kinks and x = 0, so the density is smooth on each of them.

    Returns:
        Tuple of (max_i |xi(ybar_i) - xi_i|, fine-grid error bound)
    """
    breaks = np.union1d(grid.ybar, _breakpoints(datum, grid.D))
    nodes, weights = np.polynomial.legendre.leggauss(ORACLE_POINTS)
    mid = 0.5 * (breaks[:-1] + breaks[1:])
    half = 0.5 * np.diff(breaks)
    points = mid[:, None] + half[:, None] * nodes[None, :]
    _, ux = datum.evaluate(points.ravel())
    pieces = half * ((1.0 + ux.reshape(points.shape) ** 2) @ weights)
    exact = np.concatenate(([0.0], np.cumsum(pieces)))
    exact -= exact[np.searchsorted(breaks, 0.0)]
    error = float(np.max(np.abs(np.interp(grid.ybar, breaks, exact) - grid.xi)))

    n_fine = FINE_FACTOR * grid.size + 1
    _, _, change = _fine_quadrature(datum, grid.D, n_fine)
    h = 2.0 * grid.D / (n_fine - 1)
    bound = float(h * max(np.max(change), h))
    return error, bound


def initial_state(grid: XiGrid, datum: InitialDatum) -> LagrangianState:
    """
    Assemble the Lagrangian state at t = 0.

    Args:
        grid: XiGrid built from the same datum
        datum: Initial datum

    Returns:
        LagrangianState with u = u0(ybar), v = 2 arctan u0'(ybar), q = 1, y = ybar;
        nodes on a kink take the left slope
    """
    u, _ = datum.evaluate(grid.ybar)
    return LagrangianState(
        t=0.0,
        grid=grid,
        u=u,
        v=2.0 * np.arctan(_node_slopes(datum, grid)),
        q=np.ones(grid.size),
        y=grid.ybar.copy(),
    )


def state_to_frame(state: LagrangianState) -> pd.DataFrame:
    """Snapshot table with columns xi, y, u, v, q, t_br."""
    return pd.DataFrame({
        "xi": state.grid.xi,
        "y": state.y,
        "u": state.u,
        "v": state.v,
        "q": state.q,
        "t_br": state.t_br,
    })


def state_from_frame(frame: pd.DataFrame, grid: XiGrid, t: float) -> LagrangianState:
    """
    Rebuild a state from a snapshot table.

    Raises:
        ValueError: If columns are missing or the node count does not match the grid
    """
    missing = [c for c in SNAPSHOT_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"Snapshot is missing columns {missing}")
    if len(frame) != grid.size:
        raise ValueError(f"Snapshot has {len(frame)} rows, grid has {grid.size} nodes")
    return LagrangianState(
        t=float(t),
        grid=grid,
        u=frame["u"].to_numpy(dtype=float),
        v=frame["v"].to_numpy(dtype=float),
        q=frame["q"].to_numpy(dtype=float),
        y=frame["y"].to_numpy(dtype=float),
        t_br=frame["t_br"].to_numpy(dtype=float),
    )
