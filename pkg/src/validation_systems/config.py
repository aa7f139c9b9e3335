"""
Configuration for validation systems.

Tolerances of the invariant suite and the convergence study. The ones most
sensitive to resolution can be overridden from the environment.
"""

import os
from dataclasses import dataclass


@dataclass
class ValidationConfig:
    """Tolerances for the invariant suite."""
    energy_rate_tol: float = 1e-4
    riccati_tol: float = 5e-3
    backend_tol: float = 1e-4
    min_order: float = 0.8
    brute_force_rel_tol: float = 1e-12
    q_form_rel_tol: float = 1e-12
    jacobian_factor: float = 5.0
    distance_factor: float = 5.0
    characteristic_jacobian_rel_tol: float = 1e-2
    correspondence_tol: float = 1e-3
    omega_slack_tol: float = 1e-2
    u_along_tol: float = 1e-2
    collapse_ratio: float = 0.75
    char_dt: float = 1e-3
    q_form_samples: int = 1000
    brute_force_max_n: int = 256
    seed: int = 1234


def load_validation_config() -> ValidationConfig:
    """
    Load validation configuration from environment variables.

    Returns:
        ValidationConfig: The loaded configuration
    """
    return ValidationConfig(
        energy_rate_tol=float(os.environ.get("CHOL_ENERGY_RATE_TOL", "1e-4")),
        riccati_tol=float(os.environ.get("CHOL_RICCATI_TOL", "5e-3")),
        backend_tol=float(os.environ.get("CHOL_BACKEND_TOL", "1e-4")),
        min_order=float(os.environ.get("CHOL_MIN_ORDER", "0.8")),
    )
