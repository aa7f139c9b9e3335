"""
Test configuration for the Camassa-Holm solver.

This module contains pytest configuration and fixtures.
"""

import json

import pytest

from src.solver_core.config import StepperConfig
from src.solver_core.scenarios import AntipeakonPair, Peakon, SmoothBump, make_scenario
from src.solver_core.stepper import run
from src.solver_core.transform import build_xi_grid, initial_state
from src.validation_systems.config import ValidationConfig


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    """Fixture for isolating tests from CHOL_* settings in the caller's environment."""
    for name in (
        "CHOL_THREADS", "CHOL_LOG_LEVEL", "CHOL_DEBUG_MODE", "CHOL_ENERGY_RATE_TOL",
        "CHOL_RICCATI_TOL", "CHOL_BACKEND_TOL", "CHOL_MIN_ORDER",
    ):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture(scope="session")
def peakon_scenario():
    """Fixture for a unit peakon on a coarse grid."""
    return make_scenario(Peakon(1.0), D=10.0, N_xi=256, N_x=513, T=0.5)


@pytest.fixture(scope="session")
def antipeakon_scenario():
    """Fixture for a colliding peakon-antipeakon pair, run past the collision."""
    return make_scenario(AntipeakonPair(a=1.0, c=1.0), D=10.0, N_xi=256, N_x=513, T=2.5)


@pytest.fixture(scope="session")
def zero_scenario():
    """Fixture for the zero datum."""
    return make_scenario(Peakon(0.0), D=5.0, N_xi=64, N_x=129, T=0.2)


@pytest.fixture(scope="session")
def bump_scenario():
    """Fixture for a small smooth bump."""
    return make_scenario(SmoothBump(amplitude=0.5, width=1.0), D=8.0, N_xi=256, N_x=513, T=0.3)


@pytest.fixture(scope="session")
def stepper_config():
    """Fixture for the default RK4 stepper configuration."""
    return StepperConfig()


@pytest.fixture(scope="session")
def peakon_trajectory(peakon_scenario, stepper_config):
    """Fixture for a peakon run to T = 0.5."""
    return run(peakon_scenario, stepper_config)


@pytest.fixture(scope="session")
def antipeakon_trajectory(antipeakon_scenario):
    """Fixture for an antipeakon run through the collision."""
    return run(antipeakon_scenario, StepperConfig(output_dt=0.1))


@pytest.fixture(scope="session")
def zero_trajectory(zero_scenario, stepper_config):
    """Fixture for a zero-datum run."""
    return run(zero_scenario, stepper_config)


@pytest.fixture
def peakon_state(peakon_scenario):
    """Fixture for the initial Lagrangian state of the peakon scenario."""
    return initial_state(build_xi_grid(peakon_scenario), peakon_scenario.datum)


@pytest.fixture
def loose_validation_config():
    """Fixture for tolerances sized to the coarse test grids."""
    return ValidationConfig(
        energy_rate_tol=5e-2,
        riccati_tol=5e-2,
        backend_tol=1e-3,
        min_order=0.5,
        characteristic_jacobian_rel_tol=1e-1,
        correspondence_tol=5e-2,
        omega_slack_tol=5e-2,
        u_along_tol=5e-2,
        collapse_ratio=0.9,
        char_dt=5e-3,
        q_form_samples=200,
    )


@pytest.fixture
def write_run_config(tmp_path):
    """Fixture for writing a JSON run configuration into the test directory."""

    def _write(scenario, stepper=None, name="run.json"):
        path = tmp_path / name
        document = {"scenario": scenario}
        if stepper is not None:
            document["stepper"] = stepper
        path.write_text(json.dumps(document), encoding="utf-8")
        return path

    return _write
