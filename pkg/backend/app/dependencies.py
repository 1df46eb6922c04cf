"""
Command Dependencies
Shared flags, run-config resolution and progress settings for CLI commands
"""

from argparse import ArgumentParser, Namespace
from pathlib import Path
from typing import Any, Dict
import logging
import sys

from app.config import RunConfig, load_run_config, settings

logger = logging.getLogger(__name__)


def add_common_arguments(parser: ArgumentParser) -> None:
    """--config and --seed, accepted by every command"""
    parser.add_argument("--config", type=Path, default=None, help="key=value run config file")
    parser.add_argument("--seed", type=int, default=None, help="override SEED")


def get_run_config(args: Namespace, **overrides: Any) -> RunConfig:
    """
    Resolve the run config for a command.

    CLI flags win over the environment, which wins over the config file.
    """
    flags: Dict[str, Any] = {"SEED": getattr(args, "seed", None)}
    flags.update(overrides)
    config = load_run_config(getattr(args, "config", None), **flags)
    logger.debug(f"Run config resolved: {config.model_dump(mode='json')}")
    return config


def progress_enabled() -> bool:
    """tqdm bars only on an interactive stderr at INFO verbosity or lower"""
    level = logging.getLevelName(settings.LOG_LEVEL.upper())
    return sys.stderr.isatty() and isinstance(level, int) and level <= logging.INFO


# Exit codes
EXIT_OK = 0
EXIT_INVALID = 1
EXIT_FAILURE = 2
