"""
Time stepper for the (u, v, q, y) system.

Advances a Lagrangian state with an RK4 or Picard backend, locates the times
at which nodes reach v = -pi, pins broken nodes on the frozen branch and
collects snapshots into a Trajectory.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from src.solver_core.config import StepperConfig
from src.solver_core.dynamics import picard_apply, rhs, state_energy
from src.solver_core.exceptions import StepFailureError, TrajectoryIOError
from src.solver_core.scenarios import Scenario, scenario_from_dict
from src.solver_core.transform import (
    LagrangianState,
    build_xi_grid,
    initial_state,
    state_from_frame,
    state_to_frame,
)

logger = logging.getLogger(__name__)

# H1-norm growth per unit time tolerated before the energy series is flagged.
ENERGY_MONOTONE_TOL = 1e-4


class StepBackend:
    """Base class for one-step integrators without event handling."""

    name = ""

    def advance(self, state: LagrangianState, h: float, k1: np.ndarray) -> np.ndarray:
        """
        Advance a state by h.

        Args:
            state: State at the start of the step
            h: Step length
            k1: Packed rhs at the start state

        Returns:
            Packed (u, v, q, y) values at t + h
        """
        raise NotImplementedError


class RK4Backend(StepBackend):
    """Classical fourth-order Runge-Kutta."""

    name = "rk4"

    def advance(self, state: LagrangianState, h: float, k1: np.ndarray) -> np.ndarray:
        U = state.as_array()
        t = state.t
        k2 = rhs(state.with_values(t + 0.5 * h, U + 0.5 * h * k1)).as_array()
        k3 = rhs(state.with_values(t + 0.5 * h, U + 0.5 * h * k2)).as_array()
        k4 = rhs(state.with_values(t + h, U + h * k3)).as_array()
        return U + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class PicardBackend(StepBackend):
    """Fixed-point iteration of the Picard operator on n_sub + 1 time samples."""

    name = "picard"

    def __init__(self, tol: float, max_iter: int, n_sub: int):
        """
        Initialize the Picard backend.

        Args:
            tol: Stop when the sup-difference of successive iterates is below tol * max(1, |U|)
            max_iter: Maximum number of applications
            n_sub: Number of sub-intervals of the step
        """
        self.tol = tol
        self.max_iter = max_iter
        self.n_sub = n_sub

    def advance(self, state: LagrangianState, h: float, k1: np.ndarray) -> np.ndarray:
        U = state.as_array()
        scale = max(1.0, float(np.max(np.abs(U))))
        taus = np.linspace(0.0, h, self.n_sub + 1)
        guess = [state.with_values(state.t + tau, U + tau * k1) for tau in taus]

        diff = math.inf
        for iteration in range(1, self.max_iter + 1):
            updated = picard_apply(state, guess, h)
            diff = max(
                float(np.max(np.abs(new.as_array() - old.as_array())))
                for new, old in zip(updated, guess)
            )
            guess = updated
            if diff <= self.tol * scale:
                logger.debug("Picard converged in %d iterations at t=%.6g", iteration, state.t)
                return guess[-1].as_array()

        raise StepFailureError(
            f"Picard iteration did not converge in {self.max_iter} iterations at t={state.t:.6g}",
            diagnostics={
                "t": state.t,
                "dt": h,
                "iterations": self.max_iter,
                "last_difference": diff,
                "tolerance": self.tol * scale,
            },
        )


def make_backend(config: StepperConfig) -> StepBackend:
    """
    Create the backend named in the configuration.

    Raises:
        ValueError: If the backend is unknown
    """
    if config.backend == "rk4":
        return RK4Backend()
    if config.backend == "picard":
        return PicardBackend(config.picard_tol, config.picard_max_iter, config.n_sub)
    raise ValueError(f"Unsupported backend: {config.backend}")


def _hermite(tau, h, v0, v1, dv0, dv1):
    """Cubic Hermite interpolant of v on [0, h]."""
    s = tau / h
    h00 = 2 * s ** 3 - 3 * s ** 2 + 1
    h10 = s ** 3 - 2 * s ** 2 + s
    h01 = -2 * s ** 3 + 3 * s ** 2
    h11 = s ** 3 - s ** 2
    return h00 * v0 + h10 * h * dv0 + h01 * v1 + h11 * h * dv1


def locate_crossings(
    h: float,
    v0: np.ndarray,
    v1: np.ndarray,
    dv0: np.ndarray,
    dv1: np.ndarray,
    tol: float,
) -> np.ndarray:
    """
    Bisect the Hermite interpolant of each node for its first time at -pi.

    Args:
        h: Step length
        v0, v1: v at both ends, v0 > -pi >= v1
        dv0, dv1: v rates at both ends
        tol: Time tolerance

    Returns:
        Crossing offsets in (0, h], one per node
    """
    lo = np.zeros_like(v0)
    hi = np.full_like(v0, h)
    for _ in range(max(1, int(math.ceil(math.log2(h / tol))) + 1)):
        mid = 0.5 * (lo + hi)
        above = _hermite(mid, h, v0, v1, dv0, dv1) > -np.pi
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    return hi


class Stepper:
    """
    Time stepper with breaking-event handling.

    Nodes whose v reaches -pi get their crossing time recorded in t_br and stay
    on the frozen branch (v decreasing at rate 1, q constant) from then on.
    """

    def __init__(self, config: StepperConfig):
        """
        Initialize the stepper.

        Args:
            config: Stepper configuration
        """
        self.config = config
        self.backend = make_backend(config)
        self.steps_taken = 0
        self.events = 0

    def adaptive_dt(self, dv: np.ndarray) -> float:
        """dt = min(dt_init, dt_safety / max(1, max|dv|))."""
        rate = max(1.0, float(np.max(np.abs(dv)))) if dv.size else 1.0
        return min(self.config.dt_init, self.config.dt_safety / rate)

    def step(self, state: LagrangianState, max_dt: Optional[float] = None) -> LagrangianState:
        """
        Advance one step, shortening it to stop at the earliest breaking event.

        Args:
            state: Current state
            max_dt: Upper bound on the step length

        Returns:
            The new state

        Raises:
            StepFailureError: If the Picard backend does not converge
        """
        tol = self.config.event_tol
        k1 = rhs(state).as_array()
        h = self.adaptive_dt(k1[1])
        if max_dt is not None:
            h = min(h, max_dt)

        while True:
            U1 = self.backend.advance(state, h, k1)
            crossing = state.active & (U1[1] <= -np.pi)
            if not np.any(crossing):
                t_br = None
                break

            end_rates = rhs(state.with_values(state.t + h, U1)).dv
            taus = locate_crossings(
                h, state.v[crossing], U1[1][crossing], k1[1][crossing], end_rates[crossing], tol
            )
            tau_min = float(np.min(taus))
            if tau_min < h - tol:
                h = max(tau_min, tol)
                continue

            t_br = state.t_br.copy()
            t_br[crossing] = state.t + np.minimum(taus, h)
            self.events += int(np.count_nonzero(crossing))
            logger.debug(
                "%d node(s) broke at t=%.10g", int(np.count_nonzero(crossing)), state.t + h
            )
            break

        self.steps_taken += 1
        logger.debug("step %d: t=%.6g dt=%.3g", self.steps_taken, state.t, h)
        return state.with_values(state.t + h, U1, t_br)

    def advance_to(self, state: LagrangianState, target: float) -> LagrangianState:
        """Step until the state time equals target exactly."""
        while target - state.t > 1e-12 * max(1.0, abs(target)):
            state = self.step(state, target - state.t)
        state.t = float(target)
        return state


def step(state: LagrangianState, config: StepperConfig) -> LagrangianState:
    """Advance a state by one adaptive step of the configured backend."""
    return Stepper(config).step(state)


def output_times(t0: float, T: float, output_dt: float) -> List[float]:
    """Snapshot times t0 + k * output_dt strictly below T, followed by T."""
    if T <= t0:
        return []
    count = int(math.ceil((T - t0) / output_dt - 1e-9))
    times = [t0 + k * output_dt for k in range(1, count)]
    times.append(T)
    return times


@dataclass
class Trajectory:
    """Time-ordered snapshots of a run with their energies."""
    scenario: Scenario
    config: StepperConfig
    snapshots: List[LagrangianState] = field(default_factory=list)
    energy_series: List[Tuple[float, float, float]] = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    @property
    def final(self) -> LagrangianState:
        return self.snapshots[-1]

    @property
    def t_br_map(self) -> Dict[int, float]:
        """Node index -> breaking time, for broken nodes."""
        t_br = self.final.t_br
        return {int(i): float(t_br[i]) for i in np.flatnonzero(np.isfinite(t_br))}

    def breaking_summary(self) -> Dict[str, Any]:
        values = list(self.t_br_map.values())
        return {
            "count": len(values),
            "min": min(values) if values else None,
            "max": max(values) if values else None,
        }

    def h1_norms(self) -> np.ndarray:
        """sqrt(2 E_conserved) per snapshot."""
        return np.sqrt(2.0 * np.array([e[2] for e in self.energy_series]))

    def energy_violations(self, tol: float = ENERGY_MONOTONE_TOL) -> List[Tuple[float, float]]:
        """(t, increase) for every snapshot pair whose H1 norm grows faster than tol per unit time."""
        norms = self.h1_norms()
        times = self.times
        violations = []
        for k in range(1, len(norms)):
            increase = norms[k] - norms[k - 1]
            if increase > tol * (times[k] - times[k - 1]) + 1e-12:
                violations.append((float(times[k]), float(increase)))
        return violations

    def recompute_energies(self) -> None:
        """Rebuild energy_series from the snapshots."""
        self.energy_series = [(s.t,) + state_energy(s) for s in self.snapshots]

    def append(self, state: LagrangianState) -> None:
        self.snapshots.append(state.copy())
        e_h1half, e_conserved = state_energy(state)
        self.energy_series.append((state.t, e_h1half, e_conserved))


def run(
    scenario: Scenario,
    config: StepperConfig,
    initial: Optional[LagrangianState] = None,
) -> Trajectory:
    """
    Integrate a scenario to its horizon T.

    Args:
        scenario: The scenario
        config: Stepper configuration
        initial: State to start from instead of the initial datum

    Returns:
        Trajectory with snapshots at the output times

    Raises:
        StepFailureError: If a step fails
    """
    if initial is None:
        state = initial_state(build_xi_grid(scenario), scenario.datum)
    else:
        state = initial.copy()

    logger.info(
        "Running %s on N_xi=%d from t=%.4g to T=%.4g with %s",
        scenario.datum.kind, scenario.N_xi, state.t, scenario.T, config.backend,
    )
    stepper = Stepper(config)
    trajectory = Trajectory(scenario=scenario, config=config)
    trajectory.append(state)
    for target in output_times(state.t, scenario.T, config.output_dt):
        state = stepper.advance_to(state, target)
        trajectory.append(state)

    for t, increase in trajectory.energy_violations():
        logger.warning("H1 norm increased by %.3g at t=%.4g", increase, t)
    summary = trajectory.breaking_summary()
    logger.info(
        "Finished: %d snapshots, %d steps, %d broken node(s), first breaking at %s",
        len(trajectory.snapshots), stepper.steps_taken, summary["count"], summary["min"],
    )
    return trajectory


def save_trajectory(trajectory: Trajectory, outdir: Union[str, Path]) -> Path:
    """
    Write a trajectory as meta.json plus one CSV per snapshot.

    Args:
        trajectory: Trajectory to save
        outdir: Output directory, created if missing

    Returns:
        Path to the directory
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    files = []
    for k, snapshot in enumerate(trajectory.snapshots):
        name = f"snapshot_{k:05d}.csv"
        state_to_frame(snapshot).to_csv(outdir / name, index=False)
        files.append(name)

    xi = trajectory.final.grid.xi
    meta = {
        "scenario": trajectory.scenario.to_dict(),
        "stepper": trajectory.config.to_dict(),
        "times": [float(t) for t in trajectory.times],
        "files": files,
        "t_br_map": [
            {"node": i, "xi": float(xi[i]), "t_br": t} for i, t in trajectory.t_br_map.items()
        ],
        "breaking": trajectory.breaking_summary(),
        "energy_series": [
            {"t": t, "E_H1half": e1, "E_conserved": e2} for t, e1, e2 in trajectory.energy_series
        ],
    }
    with open(outdir / "meta.json", "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2)
    logger.info("Trajectory written to %s", outdir)
    return outdir


def load_trajectory(path: Union[str, Path]) -> Trajectory:
    """
    Read a trajectory directory written by save_trajectory.

    Raises:
        TrajectoryIOError: If files are missing or inconsistent
    """
    path = Path(path)
    try:
        with open(path / "meta.json", "r", encoding="utf-8") as f:
            meta = json.load(f)
        scenario = scenario_from_dict(meta["scenario"])
        config = StepperConfig.from_dict(meta["stepper"])
        grid = build_xi_grid(scenario)
        snapshots = []
        for t, name in zip(meta["times"], meta["files"]):
            frame = pd.read_csv(path / name, float_precision="round_trip")
            state = state_from_frame(frame, grid, t)
            if not np.allclose(frame["xi"].to_numpy(dtype=float), grid.xi, rtol=0, atol=1e-9):
                raise ValueError(f"{name} xi column does not match the scenario grid")
            snapshots.append(state)
        energy = [(e["t"], e["E_H1half"], e["E_conserved"]) for e in meta["energy_series"]]
    except (OSError, KeyError, TypeError, ValueError) as e:
        raise TrajectoryIOError(f"Cannot load trajectory from {path}: {e}") from e

    return Trajectory(scenario=scenario, config=config, snapshots=snapshots, energy_series=energy)
