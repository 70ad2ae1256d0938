# (C) British Crown Copyright 2022, Met Office.
# Please see LICENSE for license details.
"""
The ``epidemic_testing`` command: ``epidemic_testing [options] <command>
[command options]`` with the commands impute, fit, simulate, best, cost and
predict.

Exit codes: 0 on success, 1 on solver or validation failures, 2 on I/O,
schema or parse failures.
"""
import argparse
import logging.config
import sys

from . import __version__
from .apps import APPS, GLOBAL_SPEC
from .common import DataError, SolverError

DEFAULT_LOG_LEVEL = logging.WARNING
DEFAULT_LOG_FORMAT = "%(levelname)s: %(message)s"

EXIT_OK = 0
EXIT_SOLVER = 1
EXIT_DATA = 2

logger = logging.getLogger(__name__)


def parse_args(argv=None):
    """
    Parse the global options and split off the command's own arguments.
    """
    parser = argparse.ArgumentParser(
        prog="epidemic_testing",
        description="Testing policies for a SIDUR epidemic model",
    )
    parser.add_argument(
        "-l",
        "--log-level",
        help="set logging level to one of debug, info, warn (the default), or error",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    for spec in GLOBAL_SPEC:
        options = dict(spec)
        parser.add_argument(*options.pop("names"), **options)
    parser.add_argument("command", choices=sorted(APPS), help="Command to run")
    parser.add_argument("arguments", nargs=argparse.REMAINDER, help="Command options")
    return parser.parse_args(argv)


def configure_logging(level_name):
    """
    Configure the root logger.

    :param str level_name: debug, info, warn or error; None for the default.
    :returns: False if the level is not recognised.
    :rtype: bool
    """
    if level_name:
        try:
            log_level = getattr(logging, level_name.upper())
        except AttributeError:
            logger.setLevel(logging.WARNING)
            logger.error("log-level must be one of: debug, info, warn or error")
            return False
    else:
        log_level = DEFAULT_LOG_LEVEL

    logging.config.dictConfig(
        {
            "version": 1,
            "disable_existing_loggers": False,
            "formatters": {
                "standard": {
                    "format": DEFAULT_LOG_FORMAT,
                },
            },
            "handlers": {
                "default": {
                    "level": log_level,
                    "class": "logging.StreamHandler",
                    "formatter": "standard",
                },
            },
            "loggers": {
                "": {"handlers": ["default"], "level": log_level, "propagate": True}
            },
        }
    )
    return True


def _forwarded(args):
    """The global options given before the command, as command arguments."""
    forwarded = []
    for flag, value in (("-c", args.config_file), ("--out", args.out)):
        if value is not None:
            forwarded += [flag, value]
    if args.seed is not None:
        forwarded += ["--seed", str(args.seed)]
    if args.assumption5:
        forwarded.append("--assumption5")
    return forwarded


def main(argv=None):
    """
    Run one command.

    :param list argv: Arguments without the program name; defaults to
        ``sys.argv[1:]``.
    :returns: The exit status.
    :rtype: int
    """
    args = parse_args(argv)
    if not configure_logging(args.log_level):
        return EXIT_SOLVER
    try:
        app = APPS[args.command](_forwarded(args) + args.arguments)
        return app.run()
    except (DataError, OSError) as exc:
        logger.error(f"{args.command}: {exc}")
        return EXIT_DATA
    except SolverError as exc:
        logger.error(f"{args.command}: {type(exc).__name__}: {exc}")
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
