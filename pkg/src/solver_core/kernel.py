"""
Nonlocal kernel terms of the Camassa-Holm solver.

Evaluates P = 1/2 e^{-|x|} * (u^2 + u_x^2/2) and its derivative, both in xi
variables on a Lagrangian state and in physical space on a sampled field, with
an O(N) exponential scan and an O(N^2) reference sum.
"""

import logging
from dataclasses import dataclass
from typing import Any, Tuple

import numpy as np

from src.solver_core.transform import LagrangianState, cell_integrals, kink_weights

logger = logging.getLogger(__name__)

# Largest distance spanned by one scan chunk; keeps exp(offset) far from overflow.
CHUNK_SPAN = 30.0


@dataclass(frozen=True, eq=False)
class KernelWorkspace:
    """
    Distances and weights of the xi-space kernel sums.

    d is the cumulative active-set integral of cos^2(v/2) q, w the energy
    weights [u^2 cos^2(v/2) + sin^2(v/2)/2] q dxi with the kink corrections
    added. Away from kinks neither grows across inactive nodes; a cell with
    one inactive end adds half a trapezoid cell to d.
    """
    d: np.ndarray
    w: np.ndarray
    active: np.ndarray

    @property
    def mass(self) -> float:
        return float(np.sum(self.w))


def build_workspace(state: LagrangianState) -> KernelWorkspace:
    """
    Build the kernel workspace of a state.

    Both sums see the kinks of the grid: d splits each kink cell at the kink
    and w carries the jump corrections of kink_weights.

    Args:
        state: Lagrangian state

    Returns:
        KernelWorkspace with d(xi_0) = 0 and trapezoid increments in xi
    """
    grid = state.grid
    active = state.active
    cos2 = np.cos(0.5 * state.v) ** 2
    sin2 = np.sin(0.5 * state.v) ** 2
    c = np.where(active, cos2 * state.q, 0.0)
    d = np.concatenate(([0.0], np.cumsum(cell_integrals(c, grid))))
    density = np.where(active, (state.u ** 2 * cos2 + 0.5 * sin2) * state.q, 0.0)
    w = (density + kink_weights(density, grid)) * grid.dxi
    return KernelWorkspace(d=d, w=w, active=active)


def _left_sums(d: np.ndarray, w: np.ndarray) -> np.ndarray:
    """left[i] = sum_{j<i} exp(-(d_i - d_j)) w_j for nondecreasing d."""
    n = d.size
    out = np.empty(n)
    carry = 0.0
    start = 0
    while start < n:
        d0 = d[start]
        end = max(int(np.searchsorted(d, d0 + CHUNK_SPAN, side="right")), start + 1)
        offset = d[start:end] - d0
        scaled = np.cumsum(np.exp(offset) * w[start:end])
        exclusive = np.concatenate(([0.0], scaled[:-1]))
        out[start:end] = np.exp(-offset) * (carry + exclusive)
        if end < n:
            carry = np.exp(-(d[end] - d0)) * (carry + scaled[-1])
        start = end
    return out


def exponential_scan(d: np.ndarray, w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Two-sided exponential sums for nondecreasing distances d.

    Args:
        d: Nondecreasing distances
        w: Nonnegative weights

    Returns:
        Tuple (P, Px) with P_i = 1/2 sum_j exp(-|d_i - d_j|) w_j and
        Px_i = 1/2 (sum_{j>i} - sum_{j<i}) exp(-|d_i - d_j|) w_j
    """
    left = _left_sums(d, w)
    right = _left_sums(-d[::-1], w[::-1])[::-1]
    return 0.5 * (left + right + w), 0.5 * (right - left)


def eval_P_Px(ws: KernelWorkspace) -> Tuple[np.ndarray, np.ndarray]:
    """Evaluate P and P_x at every xi node in O(N)."""
    return exponential_scan(ws.d, ws.w)


def eval_P_Px_brute(ws: KernelWorkspace) -> Tuple[np.ndarray, np.ndarray]:
    """Direct O(N^2) double sum, the reference for eval_P_Px."""
    kernel = np.exp(-np.abs(ws.d[:, None] - ws.d[None, :]))
    upper = np.triu(kernel, 1) @ ws.w
    lower = np.tril(kernel, -1) @ ws.w
    return 0.5 * (upper + lower + ws.w), 0.5 * (upper - lower)


def eval_P_physical(field: Any) -> Tuple[np.ndarray, np.ndarray]:
    """
    Evaluate P and P_x on a uniformly sampled physical field.

    Args:
        field: Object with arrays x (uniform), u and ux

    Returns:
        Tuple (P, Px) on field.x, trapezoid weights in x
    """
    x = np.asarray(field.x, dtype=float)
    dx = x[1] - x[0]
    weights = np.full(x.size, dx)
    weights[[0, -1]] *= 0.5
    w = (field.u ** 2 + 0.5 * field.ux ** 2) * weights
    return exponential_scan(x, w)
