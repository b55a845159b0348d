from __future__ import annotations

import logging
import os
import sys
from typing import List

from dotenv import load_dotenv

from .cli import parse_args
from .runner import execute

LOG_FORMAT = "%(asctime)s %(levelname)s [%(name)s] %(message)s"
LOG_LEVEL_ENV = "PCS_LOG_LEVEL"


def configure_logging(verbose: bool = False) -> None:
    if verbose:
        logging.basicConfig(level=logging.DEBUG, format=LOG_FORMAT, stream=sys.stderr, force=True)
        return

    level_name = os.getenv(LOG_LEVEL_ENV, "INFO").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        logging.basicConfig(level=logging.INFO, format=LOG_FORMAT, stream=sys.stderr, force=True)
        logging.getLogger(__name__).warning(
            "Unknown %s '%s'; defaulting to INFO.", LOG_LEVEL_ENV, level_name
        )
        return

    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


def load_environment() -> None:
    load_dotenv()


def main(argv: List[str] | None = None) -> int:
    load_environment()
    args = parse_args(argv)
    configure_logging(args.verbose)
    return execute(args)


if __name__ == "__main__":
    sys.exit(main())
