"""
Validation systems for the Camassa-Holm solver.

This package contains the validation components:
- Characteristics: tracing, Riccati and Jacobian identities, thick pushforwards
- Checks: the invariant suite over a trajectory
- Report: RunReport and the invariant registry
- Convergence: grid refinement and backend comparison
"""

__version__ = "0.1.0"
