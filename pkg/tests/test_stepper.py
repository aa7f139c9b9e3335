"""
Tests for the time stepper.

This module contains tests for the step backends, breaking-event location,
snapshot scheduling, trajectories and their on-disk form.
"""

import json
import math

import numpy as np
import pytest

from src.solver_core.config import StepperConfig
from src.solver_core.exceptions import StepFailureError, TrajectoryIOError
from src.solver_core.scenarios import Peakon, make_scenario
from src.solver_core.stepper import (
    PicardBackend,
    RK4Backend,
    Stepper,
    load_trajectory,
    locate_crossings,
    make_backend,
    output_times,
    run,
    save_trajectory,
    step,
)
from src.solver_core.transform import build_xi_grid, initial_state


# Test fixtures
@pytest.fixture
def small_scenario():
    """Fixture for a short peakon run on a small grid."""
    return make_scenario(Peakon(1.0), D=10.0, N_xi=64, N_x=129, T=0.2)


@pytest.fixture
def near_breaking_state(zero_scenario):
    """Fixture for a rest state with one node just above v = -pi."""
    state = initial_state(build_xi_grid(zero_scenario), zero_scenario.datum)
    state.v[10] = -np.pi + 1e-3
    return state


# Tests for output_times
def test_output_times():
    """Test snapshot times on a regular schedule."""
    times = output_times(0.0, 0.5, 0.05)
    assert len(times) == 10
    assert times[-1] == 0.5
    assert times[0] == pytest.approx(0.05)


def test_output_times_partial_interval():
    """Test that T is appended when it is not a multiple of output_dt."""
    times = output_times(0.0, 0.12, 0.05)
    assert times == pytest.approx([0.05, 0.1, 0.12])


def test_output_times_empty():
    """Test that T <= t0 gives no output times."""
    assert output_times(0.3, 0.3, 0.05) == []


# Tests for the backends
class TestBackends:
    """Tests for the RK4 and Picard backends."""

    def test_make_backend(self):
        """Test backend selection from the configuration."""
        assert isinstance(make_backend(StepperConfig()), RK4Backend)
        picard = make_backend(StepperConfig(backend="picard", n_sub=4))
        assert isinstance(picard, PicardBackend)
        assert picard.n_sub == 4

    def test_unknown_backend(self):
        """Test that an unknown backend name is rejected."""
        with pytest.raises(ValueError):
            StepperConfig(backend="euler")

    def test_backends_agree_on_one_step(self, peakon_state):
        """Test that RK4 and Picard give close results on one short step."""
        config = StepperConfig(backend="picard")
        rk4_state = step(peakon_state, StepperConfig())
        picard_state = step(peakon_state, config)
        assert rk4_state.t == picard_state.t
        assert float(np.max(np.abs(rk4_state.as_array() - picard_state.as_array()))) <= 1e-5

    def test_picard_failure(self, peakon_state):
        """Test that a Picard step that cannot converge raises with diagnostics."""
        config = StepperConfig(backend="picard", picard_max_iter=1)
        with pytest.raises(StepFailureError) as excinfo:
            step(peakon_state, config)
        diagnostics = excinfo.value.diagnostics
        assert diagnostics["iterations"] == 1
        assert diagnostics["last_difference"] > diagnostics["tolerance"]


# Tests for Stepper
class TestStepper:
    """Tests for the Stepper class."""

    def test_adaptive_dt(self):
        """Test dt = min(dt_init, dt_safety / max(1, max|dv|))."""
        stepper = Stepper(StepperConfig())
        assert stepper.adaptive_dt(np.array([0.5, -5.0])) == pytest.approx(0.004)
        assert stepper.adaptive_dt(np.array([0.1])) == pytest.approx(0.01)
        assert stepper.adaptive_dt(np.zeros(0)) == pytest.approx(0.01)

    def test_step_respects_max_dt(self, peakon_state):
        """Test that max_dt caps the step."""
        new = Stepper(StepperConfig()).step(peakon_state, max_dt=1e-4)
        assert new.t == pytest.approx(1e-4)

    def test_advance_to_hits_target(self, peakon_state):
        """Test that advance_to lands exactly on the target time."""
        stepper = Stepper(StepperConfig())
        new = stepper.advance_to(peakon_state, 0.037)
        assert new.t == 0.037
        assert stepper.steps_taken >= 4

    def test_event_time(self, near_breaking_state):
        """Test that a node 1e-3 above -pi breaks near t = 1e-3 and stays broken."""
        stepper = Stepper(StepperConfig())
        state = stepper.advance_to(near_breaking_state, 0.01)
        assert stepper.events == 1
        assert state.broken[10]
        assert state.t_br[10] == pytest.approx(1e-3, abs=1e-5)
        assert np.count_nonzero(state.broken) == 1
        assert state.v[10] < -np.pi
        assert state.q[10] == pytest.approx(1.0, abs=1e-5)


# Tests for locate_crossings
def test_locate_crossings_linear():
    """Test that a linear v crossing -pi halfway is located at h / 2."""
    v0 = np.array([-np.pi + 0.5])
    v1 = np.array([-np.pi - 0.5])
    rate = np.array([-1.0])
    taus = locate_crossings(1.0, v0, v1, rate, rate, 1e-10)
    assert taus[0] == pytest.approx(0.5, abs=1e-9)


def test_locate_crossings_several_nodes():
    """Test that each node gets its own crossing time."""
    v0 = np.array([-np.pi + 0.1, -np.pi + 0.3])
    v1 = v0 - 0.4
    rate = np.full(2, -0.4)
    taus = locate_crossings(1.0, v0, v1, rate, rate, 1e-10)
    np.testing.assert_allclose(taus, [0.25, 0.75], atol=1e-9)


# Tests for run and Trajectory
class TestRun:
    """Tests for full runs."""

    def test_snapshot_times(self, peakon_trajectory, peakon_scenario):
        """Test that snapshots land on the output schedule."""
        expected = [0.0] + output_times(0.0, peakon_scenario.T, 0.05)
        np.testing.assert_allclose(peakon_trajectory.times, expected, atol=1e-12)
        assert len(peakon_trajectory.energy_series) == len(peakon_trajectory.snapshots)

    def test_peakon_energy_conserved(self, peakon_trajectory):
        """Test that a single peakon keeps its energy before any breaking."""
        energies = np.array([e[2] for e in peakon_trajectory.energy_series])
        assert peakon_trajectory.breaking_summary()["count"] == 0
        assert float(np.max(np.abs(energies / energies[0] - 1.0))) <= 1e-2

    def test_peakon_moves_right(self, peakon_trajectory):
        """Test that the crest travels at speed close to 1."""
        final = peakon_trajectory.final
        crest = float(final.y[int(np.argmax(final.u))])
        assert crest == pytest.approx(final.t, abs=0.1)

    def test_zero_datum_stays_at_rest(self, zero_trajectory):
        """Test that the zero datum does not move."""
        for snapshot in zero_trajectory.snapshots:
            np.testing.assert_array_equal(snapshot.u, 0.0)
            np.testing.assert_array_equal(snapshot.y, zero_trajectory.snapshots[0].y)

    def test_determinism(self, small_scenario, stepper_config):
        """Test that two runs of the same scenario are bitwise identical."""
        first = run(small_scenario, stepper_config)
        second = run(small_scenario, stepper_config)
        assert len(first.snapshots) == len(second.snapshots)
        for a, b in zip(first.snapshots, second.snapshots):
            assert a.t == b.t
            np.testing.assert_array_equal(a.as_array(), b.as_array())
            np.testing.assert_array_equal(a.t_br, b.t_br)

    def test_restart(self, peakon_trajectory, peakon_scenario, stepper_config):
        """Test that restarting from a snapshot reproduces the rest of the run."""
        k = int(np.argmin(np.abs(peakon_trajectory.times - 0.2)))
        restarted = run(peakon_scenario, stepper_config, initial=peakon_trajectory.snapshots[k])
        assert restarted.times[0] == pytest.approx(0.2)
        assert restarted.final.t == pytest.approx(peakon_trajectory.final.t)
        diff = np.max(np.abs(restarted.final.as_array() - peakon_trajectory.final.as_array()))
        assert float(diff) <= 1e-8


# Tests for breaking runs
class TestAntipeakonRun:
    """Tests for the colliding peakon-antipeakon pair."""

    def test_first_breaking_time(self, antipeakon_trajectory):
        """Test that nodes first break near arccosh(e) / sqrt(1 - e^-2)."""
        summary = antipeakon_trajectory.breaking_summary()
        assert summary["count"] > 0
        assert 1.6 < summary["min"] < 1.95
        assert math.acosh(math.e) / math.sqrt(1.0 - math.exp(-2.0)) == pytest.approx(1.7817, abs=1e-4)

    def test_energy_dissipated(self, antipeakon_trajectory):
        """Test that at least half of the energy is gone after the collision."""
        energies = [e[2] for e in antipeakon_trajectory.energy_series]
        assert energies[-1] <= 0.5 * energies[0]

    def test_inactive_nodes_stay_inactive(self, antipeakon_trajectory):
        """Test that broken nodes stay broken with frozen q and v falling at rate 1."""
        snapshots = antipeakon_trajectory.snapshots
        for prev, nxt in zip(snapshots, snapshots[1:]):
            broken = prev.broken
            assert np.all(nxt.broken[broken])
            assert not np.any(nxt.active[broken])
            np.testing.assert_array_equal(nxt.t_br[broken], prev.t_br[broken])
            np.testing.assert_array_equal(nxt.q[broken], prev.q[broken])
            np.testing.assert_allclose(nxt.v[broken], prev.v[broken] - (nxt.t - prev.t), atol=1e-9)

    def test_t_br_map(self, antipeakon_trajectory):
        """Test that t_br_map lists exactly the broken nodes."""
        t_br_map = antipeakon_trajectory.t_br_map
        assert sorted(t_br_map) == np.flatnonzero(antipeakon_trajectory.final.broken).tolist()
        assert all(0.0 < t <= antipeakon_trajectory.final.t for t in t_br_map.values())

    def test_h1_norms_do_not_grow(self, antipeakon_trajectory):
        """Test that the H1 norm never rises beyond the monotonicity tolerance."""
        norms = antipeakon_trajectory.h1_norms()
        assert norms[-1] < norms[0]
        assert norms[0] == pytest.approx(math.sqrt(2.0 * antipeakon_trajectory.energy_series[0][2]))


# Tests for trajectory persistence
class TestTrajectoryIO:
    """Tests for save_trajectory and load_trajectory."""

    def test_round_trip(self, antipeakon_trajectory, tmp_path):
        """Test that a saved trajectory loads back exactly."""
        outdir = save_trajectory(antipeakon_trajectory, tmp_path / "run")
        loaded = load_trajectory(outdir)
        assert loaded.scenario.to_dict() == antipeakon_trajectory.scenario.to_dict()
        assert loaded.config == antipeakon_trajectory.config
        np.testing.assert_array_equal(loaded.times, antipeakon_trajectory.times)
        for a, b in zip(loaded.snapshots, antipeakon_trajectory.snapshots):
            np.testing.assert_array_equal(a.as_array(), b.as_array())
            np.testing.assert_array_equal(a.t_br, b.t_br)
        assert loaded.t_br_map == antipeakon_trajectory.t_br_map

    def test_meta(self, peakon_trajectory, tmp_path):
        """Test the contents of meta.json."""
        outdir = save_trajectory(peakon_trajectory, tmp_path / "run")
        meta = json.loads((outdir / "meta.json").read_text(encoding="utf-8"))
        assert len(meta["files"]) == len(peakon_trajectory.snapshots)
        assert meta["breaking"]["count"] == 0
        assert meta["t_br_map"] == []
        assert set(meta["energy_series"][0]) == {"t", "E_H1half", "E_conserved"}

    def test_missing_directory(self, tmp_path):
        """Test that a missing trajectory directory raises TrajectoryIOError."""
        with pytest.raises(TrajectoryIOError):
            load_trajectory(tmp_path / "nowhere")

    def test_missing_snapshot(self, zero_trajectory, tmp_path):
        """Test that a deleted snapshot file raises TrajectoryIOError."""
        outdir = save_trajectory(zero_trajectory, tmp_path / "run")
        (outdir / "snapshot_00001.csv").unlink()
        with pytest.raises(TrajectoryIOError):
            load_trajectory(outdir)
