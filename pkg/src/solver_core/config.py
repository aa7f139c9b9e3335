"""
Configuration for the solver core.

This module defines the stepper settings, the process-level runtime settings
and the loader for JSON run configurations.
"""

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Tuple, Union

from src.solver_core.exceptions import InvalidDatumError
from src.solver_core.scenarios import Scenario, scenario_from_dict

BACKENDS = ("rk4", "picard")


@dataclass
class StepperConfig:
    """Configuration for the time stepper."""
    backend: str = "rk4"
    dt_init: float = 0.01
    dt_safety: float = 0.02
    event_tol: float = 1e-8
    picard_tol: float = 1e-11
    picard_max_iter: int = 50
    output_dt: float = 0.05
    n_sub: int = 8

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"Unsupported backend: {self.backend}")
        if not self.dt_init > 0:
            raise ValueError(f"dt_init must be positive, got {self.dt_init}")
        if not 0 < self.dt_safety < 1:
            raise ValueError(f"dt_safety must lie in (0, 1), got {self.dt_safety}")
        if not self.event_tol > 0:
            raise ValueError(f"event_tol must be positive, got {self.event_tol}")
        if not self.picard_tol > 0:
            raise ValueError(f"picard_tol must be positive, got {self.picard_tol}")
        if self.picard_max_iter < 1 or self.n_sub < 1:
            raise ValueError("picard_max_iter and n_sub must be at least 1")
        if not self.output_dt > 0:
            raise ValueError(f"output_dt must be positive, got {self.output_dt}")

    def to_dict(self) -> Dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "StepperConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"Unknown stepper keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class RuntimeSettings:
    """Process-level settings."""
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)
    log_level: str = "INFO"
    debug_mode: bool = False


def load_runtime_settings() -> RuntimeSettings:
    """
    Load runtime settings from environment variables.

    Returns:
        RuntimeSettings: The loaded settings

    Raises:
        ValueError: If CHOL_THREADS is not an integer
    """
    raw = os.environ.get("CHOL_THREADS", str(os.cpu_count() or 1))
    try:
        threads = int(raw)
    except ValueError:
        raise ValueError(f"CHOL_THREADS must be an integer, got {raw!r}") from None
    return RuntimeSettings(
        threads=max(1, threads),
        log_level=os.environ.get("CHOL_LOG_LEVEL", "INFO").upper(),
        debug_mode=os.environ.get("CHOL_DEBUG_MODE", "false").lower() == "true",
    )


def load_run_config(path: Union[str, Path]) -> Tuple[Scenario, StepperConfig]:
    """
    Load a JSON run configuration.

    The document holds a "scenario" object with the Scenario field names and
    an optional "stepper" object with the StepperConfig field names. The
    scenario's dt_safety is used when the stepper block does not set one.

    Args:
        path: Path to the JSON file

    Returns:
        Tuple of (scenario, stepper config)

    Raises:
        OSError: If the file cannot be read
        json.JSONDecodeError: If the file is not valid JSON
        ValueError: If a key is missing or invalid
    """
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, dict) or "scenario" not in data:
        raise InvalidDatumError(f"Run config {path} has no 'scenario' object")

    scenario = scenario_from_dict(data["scenario"])
    stepper_data = dict(data.get("stepper") or {})
    stepper_data.setdefault("dt_safety", scenario.dt_safety)
    return scenario, StepperConfig.from_dict(stepper_data)
