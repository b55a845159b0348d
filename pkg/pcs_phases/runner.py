from __future__ import annotations

import logging
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Final

import numpy as np

from . import __version__
from .artifacts import dumps, write_csv, write_json, write_rows
from .errors import InvalidStateError, NumericalError, ScenarioError
from .fock import enumerate_basis
from .phase import (
    METHOD_CONNECTION,
    GeometricPhaseResult,
    HannayReport,
    StateFamily,
    compare_hannay,
    connection_profile,
    geometric_phase,
    ordered_map,
    pcs_family,
)
from .quasiprob import DensityMatrix, QField, SphereGrid, irrep_basis, q_function, write_q_csv
from .scenario import Scenario, load_scenario
from .sphere import SpherePath

logger = logging.getLogger(__name__)

THREADS_ENV: Final[str] = "PCS_THREADS"
EXIT_OK: Final[int] = 0
EXIT_IO: Final[int] = 1
EXIT_SCENARIO: Final[int] = 2
EXIT_NUMERIC: Final[int] = 3

SAMPLES_HEADER: Final[tuple[str, ...]] = ("s", "theta", "phi", "A_s", "running_gamma")
SWEEP_HEADER: Final[tuple[str, ...]] = (
    "value",
    "gamma_connection",
    "gamma_overlap",
    "gamma_closed",
    "gamma_closed_mod_2pi",
    "omega",
    "max_discrepancy",
)


def resolve_workers(requested: int | None) -> int:
    if requested is not None:
        if requested < 1:
            raise ScenarioError(f"--threads must be >= 1, got {requested}")
        return requested
    raw = os.getenv(THREADS_ENV)
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError:
        logger.warning("Ignoring non-integer %s=%r; using 1 thread.", THREADS_ENV, raw)
        return 1
    return max(value, 1)


@dataclass(frozen=True)
class PhaseRun:
    scenario: Scenario
    family: StateFamily
    path: SpherePath
    result: GeometricPhaseResult
    hannay: HannayReport | None

    def summary(self) -> dict[str, Any]:
        return {
            "version": __version__,
            "config": self.scenario.as_dict(),
            "path": self.path.describe(),
            "stokes": self.family.stokes.as_dict(),
            "omega": self.result.omega,
            "results": self.result.as_dict(),
            "hannay": None if self.hannay is None else self.hannay.as_dict(),
        }


def build_family(scenario: Scenario) -> StateFamily:
    basis = enumerate_basis(scenario.modes)
    logger.info(
        "Basis m=%d n_max=%d (dimension %d) for %s reference.",
        basis.m,
        basis.n_max,
        basis.dimension,
        scenario.state.kind,
    )
    return pcs_family(scenario.state, basis)


def _hannay_report(scenario: Scenario, path: SpherePath) -> HannayReport | None:
    if scenario.hannay is None:
        return None
    p = scenario.state.spin
    if p is None:
        raise ScenarioError("the 'hannay' section needs a Fock reference with a quasispin p")
    return compare_hannay(
        path,
        p,
        scenario.hannay.theta0,
        scenario.hannay.phi0,
        helicity=scenario.state.helicity,
        atol=scenario.tol.atol_phase,
    )


def execute_phase(scenario: Scenario, workers: int = 1, *, write_samples: bool = True) -> PhaseRun:
    family = build_family(scenario)
    path = scenario.build_path()
    samples_csv = scenario.outputs.samples_csv if write_samples else None
    profile = None
    if samples_csv is not None or METHOD_CONNECTION in scenario.methods:
        path.require_closed()
        profile = connection_profile(family, path, workers=workers)
    result = geometric_phase(family, path, scenario.methods, workers=workers, profile=profile)
    if samples_csv is not None:
        write_csv(samples_csv, SAMPLES_HEADER, profile.rows())
    return PhaseRun(scenario, family, path, result, _hannay_report(scenario, path))


def _emit_summary(summary: dict[str, Any], target: Path | None) -> None:
    if target is None:
        print(dumps(summary))
    else:
        write_json(target, summary)


def run_command(args) -> int:
    scenario = load_scenario(Path(args.scenario))
    workers = resolve_workers(args.threads)
    logger.info("Running phase scenario %s with %d thread(s).", scenario.source, workers)
    run = execute_phase(scenario, workers)
    _emit_summary(run.summary(), scenario.outputs.summary_json)
    return EXIT_OK


def sweep_values(start: float, stop: float, steps: int) -> list[float]:
    if steps < 1:
        raise ScenarioError(f"--steps must be >= 1, got {steps}")
    if steps == 1:
        return [start]
    return np.linspace(start, stop, steps).tolist()


def _sweep_row(value: float, result: GeometricPhaseResult) -> tuple[Any, ...]:
    closed = result.gamma_closed
    return (
        value,
        result.gamma_connection,
        result.gamma_overlap,
        closed,
        None if closed is None else closed % (2.0 * math.pi),
        result.omega,
        result.max_discrepancy,
    )


def sweep(scenario: Scenario, param: str, values: list[float], workers: int = 1) -> list[tuple[Any, ...]]:
    variants = [scenario.with_parameter(param, value) for value in values]

    def evaluate(variant: Scenario) -> GeometricPhaseResult:
        return execute_phase(variant, write_samples=False).result

    results = ordered_map(evaluate, variants, workers)
    return [_sweep_row(value, result) for value, result in zip(values, results)]


def sweep_command(args) -> int:
    scenario = load_scenario(Path(args.scenario))
    workers = resolve_workers(args.threads)
    values = sweep_values(args.start, args.stop, args.steps)
    logger.info("Sweeping %s over %d value(s) with %d thread(s).", args.param, len(values), workers)
    rows = sweep(scenario, args.param, values, workers)
    if args.output:
        write_csv(Path(args.output), SWEEP_HEADER, rows)
    else:
        write_rows(sys.stdout, SWEEP_HEADER, rows)
    return EXIT_OK


def _qfunc_grid(scenario: Scenario, p: float | None) -> SphereGrid:
    spec = scenario.qfunc
    if spec is not None and spec.n_theta is not None and spec.n_phi is not None:
        grid = SphereGrid.gauss_legendre(spec.n_theta, spec.n_phi)
    elif p is not None:
        grid = SphereGrid.for_spin(p)
    else:
        raise ScenarioError("glauber Q functions need explicit 'qfunc.n_theta' and 'qfunc.n_phi'")
    return grid.with_poles() if spec is None or spec.poles else grid


def _qfunc_rho(scenario: Scenario, family: StateFamily) -> DensityMatrix:
    kind = "reference" if scenario.qfunc is None else scenario.qfunc.rho
    if kind == "maximally_mixed":
        span = irrep_basis(family)
        return DensityMatrix(family.basis, np.full(span.shape[1], 1.0 / span.shape[1]), span)
    return DensityMatrix(family.basis, np.ones(1), family.amplitudes(0.0, 0.0).reshape(-1, 1))


def execute_qfunc(scenario: Scenario, workers: int = 1) -> tuple[QField, dict[str, Any]]:
    family = build_family(scenario)
    p = scenario.state.spin
    grid = _qfunc_grid(scenario, p)
    rho = _qfunc_rho(scenario, family)
    field = q_function(rho, family, grid, workers=workers)
    theta_max, phi_max = field.argmax()
    summary = {
        "version": __version__,
        "config": scenario.as_dict(),
        "stokes": family.stokes.as_dict(),
        "qfunc": {
            "n_theta": grid.n_theta,
            "n_phi": grid.n_phi,
            "nodes": grid.size,
            "weight_sum": float(grid.weight.sum()),
            "normalization": None if p is None else field.normalization(p),
            "q_max": field.max,
            "argmax": [theta_max, phi_max],
        },
    }
    return field, summary


def qfunc_command(args) -> int:
    scenario = load_scenario(Path(args.scenario))
    workers = resolve_workers(args.threads)
    field, summary = execute_qfunc(scenario, workers)
    if scenario.outputs.qgrid_csv is not None:
        write_q_csv(field, scenario.outputs.qgrid_csv)
    _emit_summary(summary, scenario.outputs.summary_json)
    return EXIT_OK


COMMANDS: Final[dict[str, Any]] = {
    "run": run_command,
    "sweep": sweep_command,
    "qfunc": qfunc_command,
}


def _report_failure(exc: Exception, exit_code: int) -> int:
    print(dumps({"error": str(exc), "kind": type(exc).__name__, "exit_code": exit_code}))
    return exit_code


def execute(args) -> int:
    handler = COMMANDS[args.command]
    try:
        return handler(args)
    except (ScenarioError, InvalidStateError) as exc:
        logger.error("Scenario rejected: %s", exc)
        return _report_failure(exc, EXIT_SCENARIO)
    except NumericalError as exc:
        logger.error("Numerical failure (%s): %s", type(exc).__name__, exc)
        return _report_failure(exc, EXIT_NUMERIC)
    except ValueError as exc:
        logger.error("Invalid input: %s", exc)
        return _report_failure(exc, EXIT_SCENARIO)
    except OSError as exc:
        logger.exception("Failed to write artifacts.")
        return _report_failure(exc, EXIT_IO)


__all__ = [
    "SAMPLES_HEADER",
    "SWEEP_HEADER",
    "PhaseRun",
    "resolve_workers",
    "build_family",
    "execute_phase",
    "execute_qfunc",
    "sweep_values",
    "sweep",
    "execute",
]
