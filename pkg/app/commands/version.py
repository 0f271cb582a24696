import argparse

from app import __version__
from app.commands.common import emit_stdout
from app.physics import CONSTANTS
from app.services.estimators.manager import estimator_manager


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("version", help="print version, constants table and estimators")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    emit_stdout({
        "version": __version__,
        "constants": CONSTANTS.model_dump(),
        "estimators": estimator_manager.get_estimator_status(),
    })
    return 0
