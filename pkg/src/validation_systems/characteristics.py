"""
Characteristics engine.

Traces curves zeta' = u(t, zeta) on reconstructed fields, integrates u along
them through u' = -P_x, and evaluates the identities that hold along
characteristics: the Riccati law for u_x, the Jacobian of the flow map, the
time-reversal correspondence and the difference-quotient lower bound.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid, trapezoid

from src.solver_core.exceptions import OutOfRangeError
from src.solver_core.kernel import eval_P_physical
from src.solver_core.reconstruct import physical_grid, to_physical

logger = logging.getLogger(__name__)

Sample = Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]


class FieldSource:
    """A space-time field serving (u, u_x, P, P_x) at any (t, x) in range."""

    t_range: Tuple[float, float] = (0.0, 0.0)
    x_range: Tuple[float, float] = (-math.inf, math.inf)
    dx: float = 0.0

    def sample(self, t: float, x: Any) -> Sample:
        raise NotImplementedError

    def _check_time(self, t: float) -> None:
        lo, hi = self.t_range
        slack = 1e-12 * max(1.0, abs(lo), abs(hi))
        if t < lo - slack or t > hi + slack:
            raise OutOfRangeError(f"t={t:.6g} outside field time range [{lo:.6g}, {hi:.6g}]")


class FieldProvider(FieldSource):
    """
    Field built from trajectory snapshots.

    Values are linear in t between snapshots and linear in x within a snapshot.
    """

    def __init__(self, times: np.ndarray, x: np.ndarray, U: np.ndarray, UX: np.ndarray,
                 P: np.ndarray, PX: np.ndarray):
        """
        Initialize the provider.

        Args:
            times: Snapshot times, strictly increasing
            x: Uniform x grid
            U, UX, P, PX: Arrays of shape (len(times), len(x))
        """
        self.times = np.asarray(times, dtype=float)
        self.x = np.asarray(x, dtype=float)
        self.values = np.stack([U, UX, P, PX])
        self.t_range = (float(self.times[0]), float(self.times[-1]))
        self.x_range = (float(self.x[0]), float(self.x[-1]))
        self.dx = float(self.x[1] - self.x[0])

    @classmethod
    def from_trajectory(cls, trajectory: Any, x_grid: Optional[np.ndarray] = None) -> "FieldProvider":
        """Reconstruct every snapshot and evaluate P, P_x on the x grid."""
        if x_grid is None:
            umax = max(float(np.max(np.abs(s.u))) for s in trajectory.snapshots)
            x_grid = physical_grid(trajectory.scenario, umax)
        rows = []
        for state in trajectory.snapshots:
            phys = to_physical(state, x_grid)
            P, Px = eval_P_physical(phys)
            rows.append((phys.u, phys.ux, P, Px))
        U, UX, P, PX = (np.array(col) for col in zip(*rows))
        return cls(trajectory.times, x_grid, U, UX, P, PX)

    def sample(self, t: float, x: Any) -> Sample:
        self._check_time(t)
        times = self.times
        if times.size == 1:
            k, s = 0, 0.0
        else:
            k = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, times.size - 2))
            s = float(np.clip((t - times[k]) / (times[k + 1] - times[k]), 0.0, 1.0))
        xq = np.asarray(x, dtype=float)
        out = []
        for comp in self.values:
            lo = np.interp(xq, self.x, comp[k])
            if s == 0.0:
                out.append(lo)
            else:
                out.append((1.0 - s) * lo + s * np.interp(xq, self.x, comp[k + 1]))
        return tuple(out)


class AnalyticField(FieldSource):
    """Field given by closed-form functions of (t, x)."""

    def __init__(self, u: Callable, ux: Callable, t_range: Tuple[float, float],
                 P: Optional[Callable] = None, Px: Optional[Callable] = None,
                 x_range: Tuple[float, float] = (-math.inf, math.inf), dx: float = 1e-3):
        self._fns = (u, ux, P or (lambda t, x: np.zeros_like(x)), Px or (lambda t, x: np.zeros_like(x)))
        self.t_range = t_range
        self.x_range = x_range
        self.dx = dx

    def sample(self, t: float, x: Any) -> Sample:
        self._check_time(t)
        xq = np.asarray(x, dtype=float)
        return tuple(np.asarray(f(t, xq), dtype=float) * np.ones_like(xq) for f in self._fns)


class BackwardField(FieldSource):
    """u^b(t, x) = -u(T - t, x); P is even in u so P^b(t, x) = P(T - t, x)."""

    def __init__(self, source: FieldSource, T: float):
        lo, hi = source.t_range
        if T < lo or T > hi:
            raise OutOfRangeError(f"Reversal time {T} outside [{lo}, {hi}]")
        self.source = source
        self.T = float(T)
        self.t_range = (0.0, self.T - lo)
        self.x_range = source.x_range
        self.dx = source.dx

    def sample(self, t: float, x: Any) -> Sample:
        self._check_time(t)
        u, ux, P, Px = self.source.sample(self.T - t, x)
        return -u, -ux, P, Px


def backward_field(source: Any, T: float) -> BackwardField:
    """
    Backward solution of a field or trajectory at reversal time T.

    Args:
        source: FieldSource, or a Trajectory to build a FieldProvider from
        T: Reversal time within the source's time range

    Returns:
        BackwardField serving -u(T - t, x)
    """
    if not isinstance(source, FieldSource):
        source = FieldProvider.from_trajectory(source)
    return BackwardField(source, T)


@dataclass
class Characteristic:
    """Curve zeta(t) with u from the field, u from -P_x integration, and u_x."""
    t: np.ndarray
    zeta: np.ndarray
    u_interp: np.ndarray
    u_ode: np.ndarray
    v: np.ndarray
    P: np.ndarray
    truncated: bool = False

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "t": self.t,
            "zeta": self.zeta,
            "u_interp": self.u_interp,
            "u_ode": self.u_ode,
            "v": self.v,
        })

    @property
    def end(self) -> float:
        return float(self.zeta[-1])


def trace(source: FieldSource, zeta0: float, t0: float, t1: float, dt: float = 1e-3) -> Characteristic:
    """
    Trace a characteristic with RK4.

    The curve follows zeta' = u(t, zeta); alongside, U' = -P_x(t, zeta) is
    integrated from U(t0) = u(t0, zeta0) as an independent estimate of u.

    Args:
        source: Field to trace on
        zeta0: Starting position
        t0: Start time
        t1: End time, t1 >= t0
        dt: Maximum time step

    Returns:
        Characteristic; truncated is set if the curve left the spatial domain

    Raises:
        ValueError: If t1 < t0 or dt <= 0
        OutOfRangeError: If [t0, t1] leaves the field's time range
    """
    if t1 < t0 or dt <= 0:
        raise ValueError(f"Need t0 <= t1 and dt > 0, got t0={t0}, t1={t1}, dt={dt}")
    n = max(1, int(math.ceil((t1 - t0) / dt - 1e-9)))
    ts = np.linspace(t0, t1, n + 1)
    x_lo, x_hi = source.x_range

    def f(t, z):
        u, _, _, Px = source.sample(t, z[0])
        return np.array([float(u), -float(Px)])

    u0, ux0, P0, _ = source.sample(t0, zeta0)
    z = np.array([float(zeta0), float(u0)])
    zetas, u_ode, u_interp, v, P = [z[0]], [z[1]], [float(u0)], [float(ux0)], [float(P0)]
    truncated = False
    for k in range(n):
        t, h = ts[k], ts[k + 1] - ts[k]
        k1 = f(t, z)
        k2 = f(t + 0.5 * h, z + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, z + 0.5 * h * k2)
        k4 = f(t + h, z + h * k3)
        z = z + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not x_lo <= z[0] <= x_hi:
            truncated = True
            logger.warning("Characteristic from %.4g left the domain at t=%.4g", zeta0, ts[k + 1])
            break
        u, ux, Pk, _ = source.sample(ts[k + 1], z[0])
        zetas.append(z[0])
        u_ode.append(z[1])
        u_interp.append(float(u))
        v.append(float(ux))
        P.append(float(Pk))

    m = len(zetas)
    return Characteristic(
        t=ts[:m], zeta=np.array(zetas), u_interp=np.array(u_interp), u_ode=np.array(u_ode),
        v=np.array(v), P=np.array(P), truncated=truncated,
    )


def check_riccati(char: Characteristic, source: Optional[FieldSource] = None) -> float:
    """
    Max over samples of |v(t) - v(t0) - int_{t0}^t (u^2 - v^2/2 - P) ds|, trapezoid in s.

    P along the curve is taken from the characteristic, or resampled from source.
    """
    if char.t.size < 2:
        return 0.0
    P = char.P
    if source is not None:
        P = np.array([float(source.sample(t, z)[2]) for t, z in zip(char.t, char.zeta)])
    integrand = char.u_interp ** 2 - 0.5 * char.v ** 2 - P
    integral = cumulative_trapezoid(integrand, char.t, initial=0.0)
    return float(np.max(np.abs(char.v - char.v[0] - integral)))


def u_along_gap(char: Characteristic) -> float:
    """Max difference between field-interpolated and -P_x-integrated u."""
    return float(np.max(np.abs(char.u_interp - char.u_ode)))


def jacobian_check(
    source: FieldSource,
    zeta0: float,
    h: float,
    t: float,
    t0: Optional[float] = None,
    dt: float = 1e-3,
) -> Tuple[float, float]:
    """
    Flow-map derivative by finite differences against exp(int v ds).

    Returns:
        Tuple (fd_jacobian, exp_integral)
    """
    if t0 is None:
        t0 = source.t_range[0]
    center = trace(source, zeta0, t0, t, dt)
    plus = trace(source, zeta0 + h, t0, t, dt)
    minus = trace(source, zeta0 - h, t0, t, dt)
    fd = (plus.end - minus.end) / (2.0 * h)
    return float(fd), float(np.exp(trapezoid(center.v, center.t)))


def backward_forward_distance(
    source: FieldSource,
    zeta0: float,
    T: float,
    t0: Optional[float] = None,
    dt: float = 1e-3,
) -> float:
    """
    Sup distance between a forward trace and the time-flipped backward trace from its end.

    The backward curve starts at zeta(T) in the backward field and is compared
    with the forward curve at the flipped times.
    """
    if t0 is None:
        t0 = source.t_range[0]
    forward = trace(source, zeta0, t0, T, dt)
    back = trace(BackwardField(source, T), forward.end, 0.0, T - t0, dt)
    flipped_t = T - back.t[::-1]
    flipped_zeta = back.zeta[::-1]
    overlap = forward.t >= flipped_t[0] - 1e-12
    return float(np.max(np.abs(
        forward.zeta[overlap] - np.interp(forward.t[overlap], flipped_t, flipped_zeta)
    )))


@dataclass
class PushforwardResult:
    """Envelope interval, plain-trace interval and the perturbation spread."""
    interval: Tuple[float, float]
    plain: Tuple[float, float]
    excess: float
    h: float


def thick_pushforward(
    source: FieldSource,
    interval: Tuple[float, float],
    t: float,
    h: Optional[float] = None,
    t0: Optional[float] = None,
    dt: float = 1e-3,
) -> PushforwardResult:
    """
    Approximate the image of [a, b] under all characteristics up to time t.

    The leftmost curve from a is bounded by the envelope of traces from a and
    a - h, the rightmost from b by traces from b and b + h.

    Args:
        source: Field to trace on
        interval: (a, b) with a <= b
        t: Target time
        h: Perturbation, defaults to twice the grid spacing
        t0: Start time, defaults to the start of the field

    Returns:
        PushforwardResult; excess is the spread of the perturbed traces at t
    """
    a, b = interval
    if b < a:
        raise ValueError(f"Empty interval [{a}, {b}]")
    if h is None:
        h = 2.0 * source.dx
    if t0 is None:
        t0 = source.t_range[0]
    ends = {z: trace(source, z, t0, t, dt).end for z in (a - h, a, b, b + h)}
    lo = min(ends[a - h], ends[a])
    hi = max(ends[b], ends[b + h])
    excess = abs(ends[a] - ends[a - h]) + abs(ends[b + h] - ends[b])
    return PushforwardResult(interval=(lo, hi), plain=(ends[a], ends[b]), excess=float(excess), h=float(h))


@dataclass
class OmegaResult:
    """Outcome of the difference-quotient lower-bound check."""
    min_slack: Optional[float]
    merged: bool
    pairs_checked: int
    omega: np.ndarray = field(default_factory=lambda: np.zeros(0))


def omega_lower_bound(omega1: np.ndarray, elapsed: np.ndarray, LC: float) -> np.ndarray:
    """
    Lower envelope of a quotient obeying omega' >= -omega^2 - LC.

    NaN where the envelope has already escaped to -infinity.
    """
    omega1 = np.asarray(omega1, dtype=float)
    elapsed = np.asarray(elapsed, dtype=float)
    if LC > 0:
        root = math.sqrt(LC)
        arg = -root * elapsed + np.arctan(omega1 / root)
        valid = arg > -0.5 * np.pi
        return np.where(valid, root * np.tan(np.where(valid, arg, 0.0)), np.nan)
    denom = 1.0 + omega1 * elapsed
    valid = denom > 0
    return np.where(valid, omega1 / np.where(valid, denom, 1.0), np.nan)


def omega_bound_check(
    source: FieldSource,
    gamma0: float,
    kappa0: float,
    t1: float,
    C: float,
    L: float = 1.0,
    t0: Optional[float] = None,
    dt: float = 1e-3,
    max_samples: int = 200,
    merge_tol: float = 1e-12,
) -> OmegaResult:
    """
    Check omega(t2) >= sqrt(LC) tan(-sqrt(LC)(t2 - t1) + arctan(omega(t1) / sqrt(LC))).

    omega is the difference quotient of u between the characteristics from
    gamma0 < kappa0. Every sample pair t1 <= t2 is checked until the curves merge.

    Returns:
        OmegaResult with the minimum slack over all checked pairs
    """
    if not gamma0 < kappa0:
        raise ValueError(f"Need gamma0 < kappa0, got {gamma0}, {kappa0}")
    if t0 is None:
        t0 = source.t_range[0]
    gamma = trace(source, gamma0, t0, t1, dt)
    kappa = trace(source, kappa0, t0, t1, dt)
    m = min(gamma.t.size, kappa.t.size)
    gap = kappa.zeta[:m] - gamma.zeta[:m]
    merged_at = np.flatnonzero(gap <= merge_tol * max(1.0, kappa0 - gamma0))
    merged = merged_at.size > 0
    if merged:
        m = int(merged_at[0])
        logger.warning("Characteristics from %.4g and %.4g merged at t=%.4g", gamma0, kappa0, gamma.t[m])
    if m == 0:
        return OmegaResult(min_slack=None, merged=merged, pairs_checked=0)

    omega = (kappa.u_interp[:m] - gamma.u_interp[:m]) / gap[:m]
    times = gamma.t[:m]
    idx = np.unique(np.linspace(0, m - 1, min(m, max_samples)).astype(int))
    ts, om = times[idx], omega[idx]
    i, j = np.triu_indices(idx.size)
    bound = omega_lower_bound(om[i], ts[j] - ts[i], L * C)
    valid = ~np.isnan(bound)
    if not np.any(valid):
        return OmegaResult(min_slack=None, merged=merged, pairs_checked=0, omega=omega)
    slack = om[j][valid] - bound[valid]
    return OmegaResult(
        min_slack=float(np.min(slack)), merged=merged, pairs_checked=int(np.count_nonzero(valid)), omega=omega
    )
