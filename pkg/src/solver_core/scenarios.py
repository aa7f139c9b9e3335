"""
Scenario catalog for the Camassa-Holm solver.

This module holds the initial data the solver can start from, their pointwise
evaluation, and the run constants C, L and T_max derived from a datum.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, ClassVar, Dict, List, Optional, Sequence, Tuple, Type, Union

import numpy as np
from scipy.integrate import solve_ivp, trapezoid

from src.solver_core.exceptions import GridTooSmallError, InvalidDatumError, OutOfRangeError

logger = logging.getLogger(__name__)

MIN_GRID = 16

# Lipschitz constant of the e^{-|x|} kernel terms; 1 for Camassa-Holm.
KERNEL_LIPSCHITZ = 1.0

ArrayLike = Union[float, Sequence[float], np.ndarray]


class InitialDatum:
    """
    Base class for initial data u0.

    Subclasses evaluate u0 and u0' on arrays. At peak points the derivative is
    the mean of the one-sided limits.
    """

    kind: ClassVar[str] = ""

    def evaluate(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def to_dict(self) -> Dict[str, Any]:
        raise NotImplementedError

    def check_domain(self, D: float) -> None:
        """Raise if the datum cannot be evaluated on [-D, D]."""

    @property
    def kinks(self) -> Tuple[float, ...]:
        """Points where u0' jumps."""
        return ()


def _peak_sum(peaks: Sequence[Tuple[float, float]], x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    u = np.zeros_like(x, dtype=float)
    ux = np.zeros_like(x, dtype=float)
    for c, center in peaks:
        s = x - center
        bump = np.exp(-np.abs(s))
        u = u + c * bump
        # np.sign(0) == 0 gives the mean of the one-sided slopes at the peak
        ux = ux - c * np.sign(s) * bump
    return u, ux


def _peak_kinks(peaks: Sequence[Tuple[float, float]]) -> Tuple[float, ...]:
    return tuple(sorted(center for c, center in peaks if c != 0))


@dataclass(frozen=True)
class Multipeakon(InitialDatum):
    """Superposition u0(x) = sum_i c_i exp(-|x - x_i|)."""

    peaks: Tuple[Tuple[float, float], ...] = ()
    kind: ClassVar[str] = "multipeakon"

    def __post_init__(self):
        peaks = tuple((float(c), float(center)) for c, center in self.peaks)
        if not all(math.isfinite(c) and math.isfinite(center) for c, center in peaks):
            raise InvalidDatumError(f"Non-finite peak parameters: {peaks}")
        object.__setattr__(self, "peaks", peaks)

    def evaluate(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return _peak_sum(self.peaks, x)

    @property
    def kinks(self) -> Tuple[float, ...]:
        return _peak_kinks(self.peaks)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "peaks": [list(p) for p in self.peaks]}


@dataclass(frozen=True)
class Peakon(InitialDatum):
    """Single peakon c*exp(-|x|), a traveling wave of speed c."""

    c: float = 1.0
    kind: ClassVar[str] = "peakon"

    @property
    def peaks(self) -> Tuple[Tuple[float, float], ...]:
        return ((self.c, 0.0),)

    def evaluate(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return _peak_sum(self.peaks, x)

    @property
    def kinks(self) -> Tuple[float, ...]:
        return _peak_kinks(self.peaks)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "c": self.c}


@dataclass(frozen=True)
class AntipeakonPair(InitialDatum):
    """
    Peakon at -a and antipeakon at +a, u0 = c(exp(-|x+a|) - exp(-|x-a|)).

    The datum is odd and collides in finite time.
    """

    a: float = 1.0
    c: float = 1.0
    kind: ClassVar[str] = "antipeakon_pair"

    @property
    def peaks(self) -> Tuple[Tuple[float, float], ...]:
        return ((self.c, -self.a), (-self.c, self.a))

    def evaluate(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return _peak_sum(self.peaks, x)

    @property
    def kinks(self) -> Tuple[float, ...]:
        return _peak_kinks(self.peaks)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "a": self.a, "c": self.c}


@dataclass(frozen=True)
class SmoothBump(InitialDatum):
    """Gaussian bump amplitude * exp(-(x / width)^2)."""

    amplitude: float = 1.0
    width: float = 1.0
    kind: ClassVar[str] = "smooth_bump"

    def __post_init__(self):
        if not self.width > 0:
            raise InvalidDatumError(f"smooth_bump width must be positive, got {self.width}")

    def evaluate(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        u = self.amplitude * np.exp(-(x / self.width) ** 2)
        ux = -2.0 * x / self.width ** 2 * u
        return u, ux

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "amplitude": self.amplitude, "width": self.width}


@dataclass(frozen=True, eq=False)
class Sampled(InitialDatum):
    """Piecewise-linear datum through (x, u) samples."""

    x: np.ndarray = field(default_factory=lambda: np.zeros(0))
    u: np.ndarray = field(default_factory=lambda: np.zeros(0))
    kind: ClassVar[str] = "sampled"

    def __post_init__(self):
        xs = np.asarray(self.x, dtype=float)
        us = np.asarray(self.u, dtype=float)
        if xs.ndim != 1 or xs.shape != us.shape or xs.size < 2:
            raise InvalidDatumError("sampled datum needs matching 1-D x and u with at least 2 samples")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(us))):
            raise InvalidDatumError("sampled datum contains non-finite values")
        if np.any(np.diff(xs) <= 0):
            raise InvalidDatumError("sampled datum x grid must be strictly increasing")
        object.__setattr__(self, "x", xs)
        object.__setattr__(self, "u", us)

    def evaluate(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        xs, us = self.x, self.u
        if np.any(x < xs[0]) or np.any(x > xs[-1]):
            raise OutOfRangeError(
                f"sampled datum defined on [{xs[0]}, {xs[-1]}], queried at "
                f"[{np.min(x)}, {np.max(x)}]"
            )
        u = np.interp(x, xs, us)
        slopes = np.diff(us) / np.diff(xs)
        cell = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, xs.size - 2)
        ux = slopes[cell]

        node = np.searchsorted(xs, x, side="left")
        hit = (node < xs.size) & (xs[np.minimum(node, xs.size - 1)] == x)
        interior = hit & (node > 0) & (node < xs.size - 1)
        j = node[interior]
        ux[interior] = 0.5 * (slopes[j - 1] + slopes[j])
        return u, ux

    def check_domain(self, D: float) -> None:
        if self.x[0] > -D or self.x[-1] < D:
            raise OutOfRangeError(
                f"sampled datum on [{self.x[0]}, {self.x[-1]}] does not cover [-{D}, {D}]"
            )

    @property
    def kinks(self) -> Tuple[float, ...]:
        return tuple(self.x[1:-1].tolist())

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "x": self.x.tolist(), "u": self.u.tolist()}


DATUM_KINDS: Dict[str, Type[InitialDatum]] = {
    cls.kind: cls for cls in (Peakon, AntipeakonPair, SmoothBump, Multipeakon, Sampled)
}


def datum_from_dict(data: Dict[str, Any]) -> InitialDatum:
    """
    Build an initial datum from its JSON form.

    Args:
        data: Mapping with a "kind" key and the kind's parameters

    Returns:
        The initial datum

    Raises:
        InvalidDatumError: If the kind is unknown or the parameters are invalid
    """
    params = dict(data)
    kind = params.pop("kind", None)
    if kind not in DATUM_KINDS:
        raise InvalidDatumError(f"Unsupported datum kind: {kind}")
    if kind == Multipeakon.kind:
        params["peaks"] = tuple(tuple(p) for p in params.get("peaks", ()))
    try:
        return DATUM_KINDS[kind](**params)
    except TypeError as e:
        raise InvalidDatumError(f"Bad parameters for datum kind {kind}: {e}") from e


def eval_datum(datum: InitialDatum, x: ArrayLike) -> Tuple[Any, Any]:
    """
    Evaluate u0 and u0' at x.

    Args:
        datum: Initial datum
        x: Coordinate or array of coordinates

    Returns:
        Tuple (u0, u0x), scalars for scalar input

    Raises:
        OutOfRangeError: If a sampled datum is queried outside its grid
    """
    xa = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xa)):
        raise OutOfRangeError("datum queried at a non-finite coordinate")
    u, ux = datum.evaluate(np.atleast_1d(xa))
    if xa.ndim == 0:
        return float(u[0]), float(ux[0])
    return u, ux


def initial_energy(datum: InitialDatum, D: float, n: int) -> float:
    """
    Trapezoid quadrature of u0^2 + u0'^2 / 2 on an n-point grid of [-D, D].

    Each interior kink is bracketed by its two neighbouring floats so the
    quadrature sees the one-sided slopes instead of the mean slope.
    """
    x = np.linspace(-D, D, n)
    kinks = np.asarray(datum.kinks, dtype=float)
    kinks = kinks[(kinks > -D) & (kinks < D)]
    if kinks.size:
        x = np.union1d(x, np.concatenate([np.nextafter(kinks, -np.inf), np.nextafter(kinks, np.inf)]))
    u, ux = datum.evaluate(x)
    energy = float(trapezoid(u ** 2 + 0.5 * ux ** 2, x))
    if not math.isfinite(energy):
        raise InvalidDatumError(f"Initial energy is not finite: {energy}")
    return energy


def guaranteed_smooth_horizon(C: float, L: float = KERNEL_LIPSCHITZ) -> float:
    """T_max = pi / (8 sqrt(L C)); infinite for zero energy."""
    if C * L <= 0:
        return math.inf
    return math.pi / (8.0 * math.sqrt(L * C))


@dataclass(frozen=True)
class Scenario:
    """A fully specified run: datum, domain, grids, horizon and constants."""

    datum: InitialDatum
    D: float
    N_xi: int
    N_x: int
    T: float
    C: float
    L: float
    T_max: float
    dt_safety: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "datum": self.datum.to_dict(),
            "D": self.D,
            "N_xi": self.N_xi,
            "N_x": self.N_x,
            "T": self.T,
            "C": self.C,
            "L": self.L,
            "T_max": self.T_max if math.isfinite(self.T_max) else None,
            "dt_safety": self.dt_safety,
        }


def make_scenario(
    datum: InitialDatum,
    D: float,
    N_xi: int,
    N_x: int,
    T: float,
    dt_safety: float = 0.02,
) -> Scenario:
    """
    Validate the run parameters and compute C, L and T_max.

    Args:
        datum: Initial datum
        D: Domain half-width
        N_xi: Number of xi nodes
        N_x: Number of points of the reconstruction grid
        T: Run horizon
        dt_safety: Step-size factor in (0, 1)

    Returns:
        The scenario

    Raises:
        GridTooSmallError: If either grid has fewer than 16 points
        InvalidDatumError: If the parameters are invalid or the energy is not finite
    """
    if not (math.isfinite(D) and D > 0):
        raise InvalidDatumError(f"Domain half-width must be positive, got {D}")
    for name, n in (("N_xi", N_xi), ("N_x", N_x)):
        if int(n) != n or n < MIN_GRID:
            raise GridTooSmallError(f"{name} must be an integer >= {MIN_GRID}, got {n}")
    if not (math.isfinite(T) and T >= 0):
        raise InvalidDatumError(f"Run horizon must be non-negative, got {T}")
    if not 0 < dt_safety < 1:
        raise InvalidDatumError(f"dt_safety must lie in (0, 1), got {dt_safety}")
    datum.check_domain(D)

    C = initial_energy(datum, D, int(N_x))
    T_max = guaranteed_smooth_horizon(C)
    if T > T_max:
        logger.warning(
            "Run horizon T=%.4g exceeds T_max=%.4g; smoothness is no longer guaranteed a priori",
            T, T_max,
        )
    return Scenario(
        datum=datum,
        D=float(D),
        N_xi=int(N_xi),
        N_x=int(N_x),
        T=float(T),
        C=C,
        L=KERNEL_LIPSCHITZ,
        T_max=T_max,
        dt_safety=float(dt_safety),
    )


def scenario_from_dict(data: Dict[str, Any]) -> Scenario:
    """
    Build a scenario from its JSON form; C, L and T_max are recomputed.

    Raises:
        InvalidDatumError: If a required key is missing
    """
    try:
        return make_scenario(
            datum_from_dict(data["datum"]),
            D=float(data["D"]),
            N_xi=data["N_xi"],
            N_x=data["N_x"],
            T=float(data["T"]),
            dt_safety=float(data.get("dt_safety", 0.02)),
        )
    except KeyError as e:
        raise InvalidDatumError(f"Scenario is missing key {e}") from e


@dataclass
class PeakonOrbit:
    """Solution of the finite-dimensional multipeakon system."""

    t: np.ndarray
    positions: np.ndarray
    momenta: np.ndarray
    collision_time: Optional[float] = None

    def field(self, t: float, x: np.ndarray) -> np.ndarray:
        """Exact u(t, x) between samples by linear interpolation of the orbit."""
        q = np.array([np.interp(t, self.t, row) for row in self.positions])
        p = np.array([np.interp(t, self.t, row) for row in self.momenta])
        u, _ = _peak_sum(list(zip(p, q)), np.asarray(x, dtype=float))
        return u


def multipeakon_ode(
    peaks: Sequence[Tuple[float, float]],
    t_end: float,
    n_samples: int = 201,
    gap_tol: float = 1e-9,
) -> PeakonOrbit:
    """
    Integrate the multipeakon position/momentum system up to t_end or the first collision.

    Args:
        peaks: Sequence of (c_i, x_i), x_i strictly increasing
        t_end: Final time
        n_samples: Number of output samples
        gap_tol: Distance at which two peaks count as collided

    Returns:
        The orbit, with collision_time set if two peaks met
    """
    c = np.array([p[0] for p in peaks], dtype=float)
    q0 = np.array([p[1] for p in peaks], dtype=float)
    n = q0.size
    if t_end <= 0:
        return PeakonOrbit(t=np.zeros(1), positions=q0[:, None], momenta=c[:, None])

    def rhs(t, z):
        q, p = z[:n], z[n:]
        diff = q[:, None] - q[None, :]
        kernel = np.exp(-np.abs(diff))
        dq = kernel @ p
        dp = p * ((np.sign(diff) * kernel) @ p)
        return np.concatenate([dq, dp])

    def collision(t, z):
        if n < 2:
            return 1.0
        return float(np.min(np.diff(z[:n]))) - gap_tol

    collision.terminal = True
    collision.direction = -1

    t_eval = np.linspace(0.0, t_end, n_samples)
    sol = solve_ivp(
        rhs, (0.0, t_end), np.concatenate([q0, c]), method="DOP853",
        t_eval=t_eval, events=collision, rtol=1e-11, atol=1e-13,
    )
    collision_time = None
    if sol.status == 1 and len(sol.t_events[0]):
        collision_time = float(sol.t_events[0][0])
        logger.debug("Peakon collision at t=%.6f", collision_time)
    return PeakonOrbit(
        t=sol.t, positions=sol.y[:n], momenta=sol.y[n:], collision_time=collision_time
    )
