"""
Tests for the invariant suite.

This module contains tests for the per-module check functions and for
validate_trajectory on peakon and antipeakon runs.
"""

import pytest

from src.solver_core.exceptions import InsufficientDataError
from src.solver_core.stepper import Trajectory
from src.solver_core.transform import build_xi_grid
from src.validation_systems.checks import (
    check_characteristics,
    check_dynamics,
    check_nonlocal,
    check_reconstruct,
    check_scenarios,
    check_stepper,
    check_transform,
    stepper_checks,
    validate_trajectory,
)
from src.validation_systems.config import ValidationConfig
from src.validation_systems.report import INVARIANT_NAMES, RunReport


# Test fixtures
@pytest.fixture
def report():
    """Fixture for an empty validate report."""
    return RunReport(command="validate")


@pytest.fixture(scope="module")
def peakon_report(peakon_trajectory):
    """Fixture for the full suite on the peakon run."""
    config = ValidationConfig(
        energy_rate_tol=5e-2, riccati_tol=5e-2, backend_tol=1e-3, min_order=0.5,
        characteristic_jacobian_rel_tol=1e-1, correspondence_tol=5e-2, omega_slack_tol=5e-2,
        u_along_tol=5e-2, collapse_ratio=0.9, char_dt=5e-3, q_form_samples=200,
    )
    return validate_trajectory(peakon_trajectory, config)


def _passed(report, name):
    return report.results[name].passed


# Tests for the module checks
def test_check_scenarios_zero_datum(report, zero_scenario):
    """Test that the zero datum converges trivially and skips the oddness check."""
    check_scenarios(report, zero_scenario)
    assert _passed(report, "energy_quadrature_convergence") is True
    assert _passed(report, "datum_odd_symmetry") is None


def test_check_scenarios_antipeakon(report, antipeakon_scenario):
    """Test that the antipeakon pair is exactly odd."""
    check_scenarios(report, antipeakon_scenario)
    assert _passed(report, "datum_odd_symmetry") is True
    assert report.results["datum_odd_symmetry"].measured == 0.0


def test_check_transform(report, bump_scenario):
    """Test the xi round trip on the smooth bump."""
    state0 = check_transform(report, bump_scenario, build_xi_grid(bump_scenario))
    assert state0.t == 0.0
    assert _passed(report, "xi_round_trip") is True
    assert "initial_energy_consistency" in report.results


def test_check_nonlocal(report, peakon_trajectory, loose_validation_config):
    """Test kernel positivity and the brute-force oracle on the peakon run."""
    check_nonlocal(report, peakon_trajectory, loose_validation_config)
    assert _passed(report, "P_positivity_domination") is True
    assert _passed(report, "recursion_brute_force") is True
    assert "xi_physical_P_consistency" in report.results


def test_check_dynamics(report, peakon_trajectory, loose_validation_config):
    """Test branch exactness and q-form equivalence on the peakon run."""
    check_dynamics(report, peakon_trajectory, loose_validation_config)
    assert _passed(report, "branch_exactness") is True
    assert report.results["branch_exactness"].measured == 0.0
    assert _passed(report, "q_form_equivalence") is True


def test_check_dynamics_vacuous_approach(report, peakon_trajectory, loose_validation_config, caplog):
    """Test that the approach-sign check is skipped when no node nears -pi."""
    check_dynamics(report, peakon_trajectory, loose_validation_config)
    assert _passed(report, "breaking_approach_sign") is None
    assert "vacuous" in caplog.text


def test_check_stepper_breaking_run(report, antipeakon_trajectory, loose_validation_config):
    """Test the stepper invariants on a run with breaking."""
    check_stepper(report, antipeakon_trajectory, loose_validation_config)
    assert _passed(report, "snapshot_time_order") is True
    assert _passed(report, "inactive_permanence") is True


def test_check_reconstruct_detects_corrupted_q(report, peakon_trajectory, loose_validation_config):
    """Test that tripling q in one snapshot fails the Jacobian identity."""
    snapshots = [s.copy() for s in peakon_trajectory.snapshots[:3]]
    snapshots[-1].q *= 3.0
    corrupted = Trajectory(
        scenario=peakon_trajectory.scenario, config=peakon_trajectory.config, snapshots=snapshots
    )
    corrupted.recompute_energies()
    check_reconstruct(report, corrupted, loose_validation_config)
    assert _passed(report, "jacobian_identity") is False
    assert "jacobian_identity" in report.failed


def test_check_characteristics_after_breaking(report, antipeakon_trajectory):
    """Test that default tolerances leave along-characteristic identities diagnostic once nodes break."""
    check_characteristics(report, antipeakon_trajectory, ValidationConfig())
    for name in ("u_along_agreement", "riccati_residual", "jacobian_characteristic"):
        result = report.results[name]
        assert result.passed is None
        assert result.measured is not None
        assert result.detail == "diagnostic after breaking"
    assert "u_along_agreement" not in report.failed


def test_stepper_checks(report, zero_trajectory, loose_validation_config):
    """Test the solve subset on the zero datum."""
    stepper_checks(report, zero_trajectory, loose_validation_config)
    assert _passed(report, "energy_monotone") is True
    assert _passed(report, "weak_energy") is True
    assert _passed(report, "oleinik") is True
    assert "determinism" not in report.results


# Tests for validate_trajectory
class TestValidateTrajectory:
    """Tests for the full invariant suite."""

    def test_every_invariant_recorded(self, peakon_report):
        """Test that the suite records each registered invariant once."""
        assert set(peakon_report.results) == set(INVARIANT_NAMES)
        assert [row["name"] for row in peakon_report.invariants()] == INVARIANT_NAMES

    def test_robust_passes(self, peakon_report):
        """Test the invariants that hold at any resolution."""
        for name in (
            "branch_exactness", "q_form_equivalence", "recursion_brute_force",
            "P_positivity_domination", "snapshot_time_order", "inactive_permanence",
            "xi_round_trip", "round_trip_t0",
        ):
            assert _passed(peakon_report, name) is True, name

    def test_convergence_invariants_skipped(self, peakon_report):
        """Test that determinism, backend agreement and self-convergence are left to converge."""
        for name in ("determinism", "backend_agreement", "self_convergence", "breaking_time_agreement"):
            assert _passed(peakon_report, name) is None

    def test_report_metadata(self, peakon_report, peakon_trajectory):
        """Test that the report carries the scenario, stepper and energy series."""
        assert peakon_report.scenario["N_xi"] == peakon_trajectory.scenario.N_xi
        assert peakon_report.stepper["backend"] == "rk4"
        assert len(peakon_report.energy_series) == len(peakon_trajectory.snapshots)
        assert peakon_report.breaking["count"] == 0

    def test_breaking_run_diagnostics(self, antipeakon_trajectory, loose_validation_config):
        """Test that identities invalid after breaking are recorded as diagnostics."""
        result = validate_trajectory(antipeakon_trajectory, loose_validation_config)
        assert result.breaking["count"] > 0
        assert _passed(result, "riccati_residual") is None
        assert _passed(result, "jacobian_characteristic") is None
        assert _passed(result, "datum_odd_symmetry") is True
        assert set(result.results) == set(INVARIANT_NAMES)

    def test_single_snapshot(self, peakon_trajectory, loose_validation_config):
        """Test that one snapshot is not enough to validate."""
        short = Trajectory(
            scenario=peakon_trajectory.scenario,
            config=peakon_trajectory.config,
            snapshots=[peakon_trajectory.snapshots[0]],
        )
        with pytest.raises(InsufficientDataError):
            validate_trajectory(short, loose_validation_config)
