import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from dotenv import load_dotenv

# services read their defaults from the environment when imported
load_dotenv()

from pydantic import ValidationError

from app import __version__
from app.commands import estimate, simulate, sweep, version
from app.errors import ThermometryError

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_IO = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="thermometry",
        description="Qubit thermometry: simulate QND readout records and estimate excited-state population",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="subcommand", required=True)
    for command in (simulate, estimate, sweep, version):
        command.add_parser(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(
        level=os.getenv("THERMOMETRY_LOG_LEVEL", "INFO").upper(),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    logger = logging.getLogger(__name__)

    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except json.JSONDecodeError as e:
        logger.error(f"Malformed JSON at line {e.lineno}, column {e.colno}: {e.msg}")
        return EXIT_USAGE
    except ValidationError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_USAGE
    except ThermometryError as e:
        logger.error(str(e))
        return EXIT_USAGE
    except OSError as e:
        logger.error(f"I/O failure: {e}")
        return EXIT_IO
    except Exception as e:
        logger.exception(f"Unexpected failure: {e}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
