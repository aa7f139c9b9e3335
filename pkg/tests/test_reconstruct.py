"""
Tests for the physical reconstruction.

This module contains tests for to_physical, the energy functionals, the
Jacobian and distance identities, the strong-form residual and the weak
dissipation checks.
"""

import logging
import math

import numpy as np
import pytest

from src.solver_core.exceptions import OrderViolationError
from src.solver_core.reconstruct import (
    PhysicalField,
    check_dissipative,
    distance_identity,
    energy,
    interpolation_tolerance,
    jacobian_identity,
    physical_grid,
    strong_form_residual,
    to_physical,
)
from src.solver_core.scenarios import Peakon, SmoothBump, make_scenario
from src.solver_core.transform import build_xi_grid, initial_state


# Test fixtures
@pytest.fixture
def bump_state(bump_scenario):
    """Fixture for the smooth-bump initial state."""
    return initial_state(build_xi_grid(bump_scenario), bump_scenario.datum)


def _peakon_field(t, x):
    u, ux = Peakon(1.0).evaluate(x - t)
    return PhysicalField(t=t, x=x, u=u, ux=ux)


# Tests for PhysicalField
class TestPhysicalField:
    """Tests for the PhysicalField class."""

    def test_peakon_energies(self):
        """Test E_H1half close to 1.5 and E_conserved close to 1 for the unit peakon."""
        field = _peakon_field(0.0, np.linspace(-20.0, 20.0, 8000))
        assert energy(field) == pytest.approx((1.5, 1.0), abs=1e-3)

    def test_frame(self):
        """Test the x, u, ux table."""
        field = _peakon_field(0.0, np.linspace(-1.0, 1.0, 11))
        frame = field.to_frame()
        assert list(frame.columns) == ["x", "u", "ux"]
        assert len(frame) == 11
        assert field.dx == pytest.approx(0.2)


def test_physical_grid(peakon_scenario):
    """Test that the grid covers [-D - T umax, D + T umax] with N_x points."""
    x = physical_grid(peakon_scenario, 1.0)
    assert x.size == peakon_scenario.N_x
    assert x[0] == pytest.approx(-10.5)
    assert x[-1] == pytest.approx(10.5)


# Tests for to_physical
class TestToPhysical:
    """Tests for the reconstruction of u and u_x."""

    def test_nodes_reproduce_datum(self, peakon_state):
        """Test that u_x equals u0' at node positions of the initial state."""
        x = peakon_state.y[10:40]
        field = to_physical(peakon_state, x)
        u0, u0x = Peakon(1.0).evaluate(x)
        np.testing.assert_allclose(field.u, u0, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(field.ux, u0x, rtol=1e-12, atol=1e-14)

    def test_interpolation_error(self, peakon_state):
        """Test that u between nodes stays within the interpolation tolerance."""
        x = np.linspace(-9.5, 9.5, 1001)
        field = to_physical(peakon_state, x)
        u0, _ = Peakon(1.0).evaluate(x)
        assert float(np.max(np.abs(field.u - u0))) <= interpolation_tolerance(peakon_state)

    def test_slopes_between_nodes(self, bump_state):
        """Test that u_x inside a cell is the secant slope, whatever the node angles."""
        x = 0.5 * (bump_state.y[:-1] + bump_state.y[1:])
        steep = bump_state.copy()
        steep.v[100] = -np.pi + 1e-3
        plain = to_physical(bump_state, x)
        field = to_physical(steep, x)
        np.testing.assert_allclose(plain.ux, np.diff(bump_state.u) / np.diff(bump_state.y), rtol=1e-12)
        np.testing.assert_array_equal(field.ux, plain.ux)
        assert field.E_H1half == plain.E_H1half
        assert field.E_conserved == plain.E_conserved

    def test_node_keeps_its_angle(self, bump_state):
        """Test that a point exactly on a node reports tan(v/2) of that node."""
        steep = bump_state.copy()
        steep.v[100] = -np.pi + 1e-3
        field = to_physical(steep, steep.y[99:102])
        assert field.ux[1] == pytest.approx(np.tan(0.5 * steep.v[100]))
        assert field.ux[0] == pytest.approx(np.tan(0.5 * steep.v[99]))

    def test_outside_hull_is_zero(self, peakon_state):
        """Test that u and u_x vanish outside the node positions."""
        field = to_physical(peakon_state, np.array([-50.0, 50.0]))
        np.testing.assert_array_equal(field.u, 0.0)
        np.testing.assert_array_equal(field.ux, 0.0)

    def test_all_inactive(self, peakon_state):
        """Test that a fully broken state with u = 0 reconstructs to zero."""
        state = peakon_state.copy()
        state.v[:] = -np.pi - 0.5
        state.u[:] = 0.0
        field = to_physical(state, np.linspace(-5.0, 5.0, 51))
        np.testing.assert_array_equal(field.u, 0.0)
        np.testing.assert_array_equal(field.ux, 0.0)

    def test_inactive_run_collapses(self, bump_state):
        """Test that an inactive run is drawn as one point with the mean u."""
        state = bump_state.copy()
        state.v[100:110] = -np.pi - 0.1
        state.y[100:110] = state.y[100]
        state.u[100:110] = 0.25
        field = to_physical(state, np.array([state.y[100]]))
        assert field.u[0] == pytest.approx(0.25)

    def test_order_violation(self, peakon_state):
        """Test that a large decrease of y between active nodes raises."""
        state = peakon_state.copy()
        state.y[50] = state.y[49] - 1.0
        with pytest.raises(OrderViolationError):
            to_physical(state, np.linspace(-5.0, 5.0, 11))

    def test_small_decrease_is_clamped(self, peakon_state, caplog):
        """Test that a round-off decrease of y is clamped with a warning."""
        state = peakon_state.copy()
        state.y[50] = state.y[49] - 1e-4 * state.grid.dxi
        with caplog.at_level(logging.WARNING, logger="src.solver_core.reconstruct"):
            field = to_physical(state, np.linspace(-5.0, 5.0, 11))
        assert "Clamping" in caplog.text
        assert np.all(np.isfinite(field.u))


# Tests for the identities
class TestIdentities:
    """Tests for the Jacobian and distance identities."""

    def test_jacobian_identity_initial(self, bump_state):
        """Test that the initial state satisfies dy/dxi = q cos^2(v/2) closely."""
        assert jacobian_identity(bump_state) <= 5e-2

    def test_jacobian_identity_detects_corruption(self, bump_state):
        """Test that doubling q breaks the identity by about one half."""
        state = bump_state.copy()
        state.q *= 2.0
        assert jacobian_identity(state) == pytest.approx(0.5, abs=0.05)

    def test_jacobian_identity_no_active_cells(self, bump_state):
        """Test that a fully inactive state gives 0."""
        state = bump_state.copy()
        state.v[:] = -np.pi
        assert jacobian_identity(state) == 0.0

    def test_jacobian_identity_peakon_order(self):
        """Test first-order convergence of the Jacobian identity for the peakon."""
        mismatch = {}
        dxi = {}
        for n in (1024, 2048, 4096):
            scenario = make_scenario(Peakon(1.0), D=20.0, N_xi=n, N_x=n + 1, T=0.0)
            state = initial_state(build_xi_grid(scenario), scenario.datum)
            mismatch[n] = jacobian_identity(state)
            dxi[n] = state.grid.dxi
        assert mismatch[1024] > mismatch[2048] > mismatch[4096]
        assert math.log2(mismatch[1024] / mismatch[2048]) >= 0.9
        assert math.log2(mismatch[2048] / mismatch[4096]) >= 0.9
        assert mismatch[4096] <= 5.0 * dxi[4096]

    def test_distance_identity(self, bump_state):
        """Test that y differences match the active-set integral."""
        assert distance_identity(bump_state) <= 1e-2


# Tests for strong_form_residual
def test_strong_form_residual_peakon():
    """Test that the exact peakon has a small residual away from its crest."""
    x = np.linspace(0.0, 8.0, 4001)
    residual = strong_form_residual(_peakon_field(0.5, x), _peakon_field(0.501, x), window=(2.0, 6.0))
    assert residual < 1e-3


def test_strong_form_residual_detects_non_solution():
    """Test that a bump held at rest leaves a large residual."""
    x = np.linspace(-6.0, 6.0, 3001)
    u, ux = SmoothBump(1.0, 1.0).evaluate(x)
    a = PhysicalField(t=0.0, x=x, u=u, ux=ux)
    b = PhysicalField(t=1e-3, x=x, u=u, ux=ux)
    assert strong_form_residual(a, b, window=(-2.0, 2.0)) > 1e-2


# Tests for check_dissipative
class TestCheckDissipative:
    """Tests for the weak energy and Oleinik checks."""

    def test_zero_trajectory(self, zero_trajectory):
        """Test that the zero datum passes with K_hat = 0."""
        report = check_dissipative(zero_trajectory)
        assert report.weak_energy_ok
        assert report.max_h1_increase == 0.0
        assert report.K_hat == 0.0
        assert report.oleinik_ok

    def test_antipeakon_trajectory(self, antipeakon_trajectory):
        """Test that the colliding pair loses H1 norm and has a finite Oleinik fit."""
        report = check_dissipative(antipeakon_trajectory)
        assert report.h1_norms[-1] < report.h1_norms[0]
        assert report.K_hat is not None
        assert np.isfinite(report.K_hat)
        assert report.K_hat >= 0.0
        assert len(report.times) == len(antipeakon_trajectory.snapshots)
