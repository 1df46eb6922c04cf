"""
CymbaDiff - Command Line Application
Main application entry point
"""

from argparse import ArgumentParser
from typing import Optional, Sequence
import logging
import sys

from pydantic import ValidationError

from app.config import settings
from app.api import data, evaluate, info, sample, train
from app.dependencies import EXIT_FAILURE, EXIT_INVALID
from app.exceptions import ConfigError, FormatError, InvariantError


# Configure logging
logging.basicConfig(
    level=getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
    format=settings.LOG_FORMAT,
)
logger = logging.getLogger(__name__)

VALIDATION_ERRORS = (ValidationError, ConfigError, InvariantError, FormatError)


def init_monitoring() -> None:
    """Report runtime failures to Sentry when a DSN is configured"""
    if not settings.SENTRY_DSN:
        return
    import sentry_sdk

    sentry_sdk.init(dsn=settings.SENTRY_DSN, environment=settings.ENVIRONMENT)
    logger.info("Sentry error reporting enabled")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog="cymba",
        description="Sketch-conditioned 3D semantic scene generation with cylinder-ordered Mamba diffusion",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    # Include command groups
    for group in (data, train, sample, evaluate, info):
        group.register(subparsers)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    init_monitoring()
    logger.debug(f"Running {settings.PROJECT_NAME} command {args.command}")
    try:
        return args.handler(args)
    except VALIDATION_ERRORS as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_INVALID
    except KeyboardInterrupt:
        logger.warning(f"{args.command}: interrupted")
        return EXIT_FAILURE
    except Exception as e:
        logger.error(f"{args.command} failed: {e}", exc_info=settings.DEBUG)
        if settings.SENTRY_DSN:
            import sentry_sdk

            sentry_sdk.capture_exception(e)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
