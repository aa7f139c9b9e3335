"""
Run reports.

A RunReport carries every registered invariant exactly once, the energy
series, the breaking summary, the convergence table and timing.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

logger = logging.getLogger(__name__)

INVARIANT_REGISTRY: Dict[str, List[str]] = {
    "scenarios": ["energy_quadrature_convergence", "datum_odd_symmetry"],
    "grid_transform": ["xi_round_trip", "initial_energy_consistency"],
    "nonlocal": ["xi_physical_P_consistency", "P_positivity_domination", "recursion_brute_force"],
    "dynamics": [
        "branch_exactness", "q_form_equivalence", "energy_derivative_active", "breaking_approach_sign",
    ],
    "stepper": [
        "snapshot_time_order", "energy_monotone", "q_bounds", "inactive_permanence",
        "determinism", "backend_agreement", "self_convergence", "breaking_time_agreement",
    ],
    "reconstruct": [
        "jacobian_identity", "distance_identity", "round_trip_t0",
        "energy_consistency", "weak_energy", "oleinik",
    ],
    "characteristics": [
        "u_along_agreement", "riccati_residual", "jacobian_characteristic",
        "backward_forward_correspondence", "forward_uniqueness_collapse", "omega_bound",
    ],
}

INVARIANT_NAMES: List[str] = [name for names in INVARIANT_REGISTRY.values() for name in names]


def to_jsonable(value: Any) -> Any:
    """Convert numpy values to plain Python; non-finite floats become None."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


@dataclass
class InvariantResult:
    """Outcome of one invariant check; passed is None when the check was not run or is diagnostic only."""
    name: str
    passed: Optional[bool]
    measured: Optional[float] = None
    tolerance: Optional[float] = None
    detail: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return to_jsonable({
            "name": self.name,
            "passed": self.passed,
            "measured": self.measured,
            "tolerance": self.tolerance,
            "detail": self.detail,
        })


@dataclass
class RunReport:
    """Machine-readable outcome of a solve, validate or converge command."""
    command: str
    scenario: Dict[str, Any] = field(default_factory=dict)
    stepper: Dict[str, Any] = field(default_factory=dict)
    energy_series: List[Dict[str, float]] = field(default_factory=list)
    breaking: Dict[str, Any] = field(default_factory=dict)
    results: Dict[str, InvariantResult] = field(default_factory=dict)
    convergence: List[Dict[str, Any]] = field(default_factory=list)
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    timing: Dict[str, float] = field(default_factory=dict)

    def record(self, result: InvariantResult) -> InvariantResult:
        """
        Store a result under its invariant name.

        Raises:
            ValueError: If the name is not registered
        """
        if result.name not in INVARIANT_NAMES:
            raise ValueError(f"Unknown invariant: {result.name}")
        if result.passed is False:
            logger.warning(
                "Invariant %s failed: measured %s, tolerance %s %s",
                result.name, result.measured, result.tolerance, result.detail,
            )
        self.results[result.name] = result
        return result

    def check(self, name: str, measured: float, tolerance: float, detail: str = "") -> InvariantResult:
        """Record measured <= tolerance as a pass."""
        passed = bool(np.isfinite(measured) and measured <= tolerance)
        return self.record(InvariantResult(name, passed, float(measured), float(tolerance), detail))

    def skip(self, name: str, detail: str) -> InvariantResult:
        return self.record(InvariantResult(name, None, detail=detail))

    @property
    def failed(self) -> List[str]:
        return [name for name, r in self.results.items() if r.passed is False]

    def invariants(self) -> List[Dict[str, Any]]:
        """Every registered invariant in registry order."""
        rows = []
        for module, names in INVARIANT_REGISTRY.items():
            for name in names:
                result = self.results.get(name) or InvariantResult(
                    name, None, detail=f"not executed by {self.command}"
                )
                rows.append({"module": module, **result.to_dict()})
        return rows

    def to_dict(self) -> Dict[str, Any]:
        """Report content without timing."""
        return to_jsonable({
            "command": self.command,
            "scenario": self.scenario,
            "stepper": self.stepper,
            "energy_series": self.energy_series,
            "breaking": self.breaking,
            "invariants": self.invariants(),
            "convergence": self.convergence,
            "diagnostics": self.diagnostics,
        })

    def write(self, path: Union[str, Path]) -> Path:
        """
        Write the report as JSON; timing goes to a sibling <stem>.timing.json.

        Returns:
            Path of the report
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)
        with open(timing_path(path), "w", encoding="utf-8") as f:
            json.dump(to_jsonable(self.timing), f, indent=2)
        logger.info("Report written to %s", path)
        return path


def timing_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(f"{path.stem}.timing.json")


def load_report(path: Union[str, Path]) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
