from __future__ import annotations

import argparse
from typing import List

from .scenario import SWEEP_PARAMS_HELP


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("scenario", help="Scenario JSON file (schema 'pcs-scenario/1').")
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="Worker threads for sample evaluation (default: PCS_THREADS or 1).",
    )
    parser.add_argument(
        "--verbose",
        "-v",
        action="store_true",
        help="Log at DEBUG level regardless of PCS_LOG_LEVEL.",
    )


def parse_args(argv: List[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="pcs-phases",
        description=(
            "Geometric phases, Hannay angles and Q functions of polarization "
            "coherent states on truncated Fock spaces."
        ),
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Compute the geometric phase for one scenario.")
    _add_common(run)

    sweep = commands.add_parser(
        "sweep", help="Repeat a scenario over a range of one parameter and tabulate phases."
    )
    _add_common(sweep)
    sweep.add_argument("--param", required=True, help=f"Parameter to vary: {SWEEP_PARAMS_HELP}.")
    sweep.add_argument("--from", dest="start", type=float, required=True, help="First value.")
    sweep.add_argument("--to", dest="stop", type=float, required=True, help="Last value.")
    sweep.add_argument(
        "--steps", type=int, required=True, help="Number of values, endpoints included."
    )
    sweep.add_argument(
        "--output", "-o", default=None, help="CSV file for the table (default: stdout)."
    )

    qfunc = commands.add_parser(
        "qfunc",
        help=(
            "Evaluate the polarization Q function of a scenario on a sphere grid. "
            "The grid goes to outputs.qgrid_csv when set; the summary goes to "
            "outputs.summary_json or stdout."
        ),
    )
    _add_common(qfunc)
    return parser.parse_args(argv)


__all__ = ["parse_args"]
