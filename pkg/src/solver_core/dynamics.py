"""
Right-hand side of the (u, v, q, y) system.

Active nodes (v > -pi, not yet broken) follow
    u_t = -P_x,  v_t = (u^2 - P)(1 + cos v) - sin^2(v/2),  q_t = (u^2 + 1/2 - P) sin(v) q,
and inactive nodes take the frozen branch v_t = -1, q_t = 0. Positions move
with y_t = u everywhere.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy.integrate import cumulative_simpson

from src.solver_core.kernel import build_workspace, eval_P_Px
from src.solver_core.transform import LagrangianState, kink_weights

logger = logging.getLogger(__name__)

# Distance from +-pi below which the tan(v/2) form is not evaluated.
TAN_GUARD = 1e-6


@dataclass(frozen=True, eq=False)
class StateDerivative:
    """Time derivatives of u, v, q and y at every node."""
    du: np.ndarray
    dv: np.ndarray
    dq: np.ndarray
    dy: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.stack([self.du, self.dv, self.dq, self.dy])


def branch_rates(
    u: Union[float, np.ndarray],
    v: Union[float, np.ndarray],
    q: Union[float, np.ndarray],
    P: Union[float, np.ndarray],
    active: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Pointwise v and q rates for a given P.

    Args:
        u, v, q: Node values
        P: Nonlocal term at the nodes
        active: Branch mask; defaults to v > -pi

    Returns:
        Tuple (dv, dq); inactive entries are exactly -1 and 0
    """
    u, v, q, P = (np.asarray(a, dtype=float) for a in (u, v, q, P))
    if active is None:
        active = v > -np.pi
    dv = np.where(active, (u ** 2 - P) * (1.0 + np.cos(v)) - np.sin(0.5 * v) ** 2, -1.0)
    dq = np.where(active, (u ** 2 + 0.5 - P) * np.sin(v) * q, 0.0)
    return dv, dq


def rhs(state: LagrangianState) -> StateDerivative:
    """
    Evaluate the right-hand side at a state.

    Args:
        state: Lagrangian state

    Returns:
        StateDerivative with du = -P_x and dy = u
    """
    ws = build_workspace(state)
    P, Px = eval_P_Px(ws)
    dv, dq = branch_rates(state.u, state.v, state.q, P, ws.active)
    return StateDerivative(du=-Px, dv=dv, dq=dq, dy=state.u.copy())


def rhs_q_alternate(state: LagrangianState, P: Optional[np.ndarray] = None) -> np.ndarray:
    """
    q rate written through u_x = tan(v/2):  u_x q (1 + 2u^2 - 2P) / (1 + u_x^2).

    Args:
        state: Lagrangian state
        P: Nonlocal term; computed from the state when omitted

    Returns:
        dq values; NaN at inactive nodes and where |v| >= pi - 1e-6
    """
    if P is None:
        P, _ = eval_P_Px(build_workspace(state))
    guarded = state.active & (np.abs(state.v) < np.pi - TAN_GUARD)
    ux = np.tan(0.5 * np.where(guarded, state.v, 0.0))
    dq = ux * state.q * (1.0 + 2.0 * state.u ** 2 - 2.0 * P) / (1.0 + ux ** 2)
    return np.where(guarded, dq, np.nan)


def energy_density(state: LagrangianState) -> np.ndarray:
    """Conserved density 1/2 [u^2 cos^2(v/2) + sin^2(v/2)] q, zero on inactive nodes."""
    e = 0.5 * (state.u ** 2 * np.cos(0.5 * state.v) ** 2 + np.sin(0.5 * state.v) ** 2) * state.q
    return np.where(state.active, e, 0.0)


def state_energy(state: LagrangianState) -> Tuple[float, float]:
    """
    Energies of a state as xi-space sums over active nodes.

    Both sums carry the jump corrections of the grid's kinks, so a kink costs
    O(dxi^2) instead of O(dxi).

    Returns:
        Tuple (E_H1half, E_conserved): the kernel mass sum [u^2 cos^2 + sin^2/2] q dxi
        and the conserved energy sum 1/2 [u^2 cos^2 + sin^2] q dxi
    """
    e_h1half = build_workspace(state).mass
    e = energy_density(state)
    e_conserved = float(np.sum(e + kink_weights(e, state.grid)) * state.grid.dxi)
    return e_h1half, e_conserved


def energy_rate(state: LagrangianState, deriv: Optional[StateDerivative] = None) -> float:
    """
    Analytic time derivative of the E_conserved of state_energy, assembled from rhs.

    Vanishes up to discretization error while every node is active.
    """
    if deriv is None:
        deriv = rhs(state)
    u, v, q = state.u, state.v, state.q
    cos2 = np.cos(0.5 * v) ** 2
    sin2 = np.sin(0.5 * v) ** 2
    half_sin = 0.5 * np.sin(v)
    de = 0.5 * q * (2.0 * u * deriv.du * cos2 + (1.0 - u ** 2) * half_sin * deriv.dv)
    de += 0.5 * (u ** 2 * cos2 + sin2) * deriv.dq
    de = np.where(state.active, de, 0.0)
    return float(np.sum(de + kink_weights(de, state.grid)) * state.grid.dxi)


def breaking_approach_rates(state: LagrangianState, delta: float = 0.1) -> np.ndarray:
    """dv at active nodes with v in (-pi, -pi + delta]."""
    near = state.active & (state.v <= -np.pi + delta)
    return rhs(state).dv[near]


def picard_apply(
    state0: LagrangianState,
    guess: List[LagrangianState],
    dt: float,
) -> List[LagrangianState]:
    """
    One application of the Picard operator U -> U0 + int_0^tau rhs(U) ds.

    Args:
        state0: State at the start of the interval
        guess: States at n_sub + 1 uniform times on [t0, t0 + dt]
        dt: Interval length

    Returns:
        Updated states at the same times, integrals by cumulative Simpson in time
        (trapezoid for a single sub-interval)
    """
    taus = np.linspace(0.0, dt, len(guess))
    rates = np.stack([rhs(g).as_array() for g in guess])
    integrals = cumulative_simpson(rates, dx=dt / (len(guess) - 1), axis=0, initial=0.0)
    start = state0.as_array()
    return [
        state0.with_values(state0.t + tau, start + integral)
        for tau, integral in zip(taus, integrals)
    ]
