"""
Solver core for dissipative Camassa-Holm solutions.

This package contains the Lagrangian solver, including:
- Scenarios: catalog of initial data and the run constants C, L, T_max
- Transform: the xi coordinate and the initial Lagrangian state
- Kernel: O(N) evaluation of the nonlocal terms P and P_x
- Dynamics: right-hand side of the (u, v, q) system and the Picard operator
- Stepper: time integration with breaking-event detection
- Reconstruct: physical fields, energies and the dissipative-solution checks
"""

__version__ = "0.1.0"
