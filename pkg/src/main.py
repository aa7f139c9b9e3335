"""
Main entry point for the Camassa-Holm solver.

This module provides the command-line front end: solve, validate, converge
and characteristics. Exit codes are 0 on success, 2 when an invariant check
fails and 1 on any operational error.
"""

import argparse
import asyncio
import json
import logging
import sys
import time
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

from src.solver_core.config import load_run_config, load_runtime_settings
from src.solver_core.exceptions import SolverError
from src.solver_core.stepper import load_trajectory, run, save_trajectory
from src.validation_systems.characteristics import FieldProvider, backward_field, check_riccati, trace
from src.validation_systems.checks import stepper_checks, validate_trajectory
from src.validation_systems.config import load_validation_config
from src.validation_systems.convergence import convergence_study, record_convergence
from src.validation_systems.report import RunReport

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INVARIANT_FAILURE = 2


class CliParser(argparse.ArgumentParser):
    """Argument parser that reports usage errors with the operational exit code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _configure_logging(level: str) -> None:
    """Configure root logging and route Python warnings through it."""
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    logging.getLogger().setLevel(getattr(logging, level.upper(), logging.INFO))
    logging.captureWarnings(True)


def _exit_code(report: RunReport) -> int:
    return EXIT_INVARIANT_FAILURE if report.failed else EXIT_OK


def cmd_solve(args: argparse.Namespace) -> int:
    """Run a scenario and write the trajectory and its report."""
    started = time.perf_counter()
    scenario, config = load_run_config(args.config)
    trajectory = run(scenario, config)
    outdir = save_trajectory(trajectory, args.outdir)

    report = RunReport(
        command="solve",
        scenario=scenario.to_dict(),
        stepper=config.to_dict(),
        breaking=trajectory.breaking_summary(),
        energy_series=[
            {"t": t, "E_H1half": e1, "E_conserved": e2} for t, e1, e2 in trajectory.energy_series
        ],
    )
    stepper_checks(report, trajectory, load_validation_config())
    report.timing["wall_seconds"] = time.perf_counter() - started
    report.write(outdir / "report.json")
    return _exit_code(report)


def cmd_validate(args: argparse.Namespace) -> int:
    """Run the full invariant suite on a saved trajectory."""
    started = time.perf_counter()
    trajectory = load_trajectory(args.trajdir)
    report = validate_trajectory(trajectory, load_validation_config())
    report.timing["wall_seconds"] = time.perf_counter() - started
    report.write(Path(args.report) if args.report else Path(args.trajdir) / "validation_report.json")
    return _exit_code(report)


def cmd_converge(args: argparse.Namespace) -> int:
    """Refinement study with both backends."""
    started = time.perf_counter()
    scenario, config = load_run_config(args.config)
    settings = load_runtime_settings()
    result = asyncio.run(convergence_study(scenario, config, args.levels, settings.threads))

    report = RunReport(command="converge", scenario=scenario.to_dict(), stepper=config.to_dict())
    record_convergence(report, result, load_validation_config())
    report.timing["wall_seconds"] = time.perf_counter() - started
    report.write(args.output)
    return _exit_code(report)


def cmd_characteristics(args: argparse.Namespace) -> int:
    """Trace one characteristic on a saved trajectory and write it as CSV."""
    trajectory = load_trajectory(args.trajdir)
    source = FieldProvider.from_trajectory(trajectory)
    if args.backward:
        source = backward_field(source, source.t_range[1])
    t0 = source.t_range[0] if args.t0 is None else args.t0
    t1 = source.t_range[1] if args.t1 is None else args.t1
    char = trace(source, args.start, t0, t1, args.dt)

    output = Path(args.output) if args.output else Path(args.trajdir) / "characteristic.csv"
    output.parent.mkdir(parents=True, exist_ok=True)
    char.to_frame().to_csv(output, index=False)
    logger.info(
        "Characteristic from %.4g: end %.6g, Riccati residual %.3g, truncated=%s, written to %s",
        args.start, char.end, check_riccati(char), char.truncated, output,
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = CliParser(prog="chol", description="Dissipative Camassa-Holm solver")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    solve = sub.add_parser("solve", help="Run a scenario")
    solve.add_argument("config", help="JSON run configuration")
    solve.add_argument("outdir", help="Trajectory output directory")
    solve.set_defaults(handler=cmd_solve)

    validate = sub.add_parser("validate", help="Run the invariant suite on a trajectory")
    validate.add_argument("trajdir", help="Trajectory directory written by solve")
    validate.add_argument("--report", help="Report path (default: TRAJDIR/validation_report.json)")
    validate.set_defaults(handler=cmd_validate)

    converge = sub.add_parser("converge", help="Grid refinement and backend comparison")
    converge.add_argument("config", help="JSON run configuration")
    converge.add_argument("--levels", type=int, default=3, help="Number of refinement levels (>= 2)")
    converge.add_argument("--output", default="converge_report.json", help="Report path")
    converge.set_defaults(handler=cmd_converge)

    chars = sub.add_parser("characteristics", help="Trace a characteristic")
    chars.add_argument("trajdir", help="Trajectory directory written by solve")
    chars.add_argument("--start", type=float, required=True, help="Starting position")
    chars.add_argument("--t0", type=float, default=None, help="Start time")
    chars.add_argument("--t1", type=float, default=None, help="End time")
    chars.add_argument("--dt", type=float, default=1e-3, help="Time step")
    chars.add_argument("--backward", action="store_true", help="Trace in the backward field")
    chars.add_argument("--output", default=None, help="CSV path (default: TRAJDIR/characteristic.csv)")
    chars.set_defaults(handler=cmd_characteristics)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the solver CLI."""
    # Load environment variables from .env file if it exists
    load_dotenv()
    args = build_parser().parse_args(argv)
    try:
        settings = load_runtime_settings()
        _configure_logging("DEBUG" if settings.debug_mode else settings.log_level)
        return args.handler(args)
    except (SolverError, OSError, json.JSONDecodeError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
