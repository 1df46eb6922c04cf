"""
Sampling Commands
Scene generation from sketch and PSA condition files
"""

from argparse import Namespace
from pathlib import Path
import logging

from app.dependencies import EXIT_OK, add_common_arguments, get_run_config
from app.services.sampling import MANIFEST_NAME, SamplingService, resolve_conditions

logger = logging.getLogger(__name__)


def sample(args: Namespace) -> int:
    config = get_run_config(args, OUTPUT_DIR=args.out, CHECKPOINT_DIR=args.checkpoints)
    seeds = args.seeds if args.seeds else [config.SEED]
    conditions = resolve_conditions(args.conditions)
    records = SamplingService(config).sample(conditions, seeds)
    print(Path(config.OUTPUT_DIR) / MANIFEST_NAME)
    logger.info(f"Sampled {len(records)} scenes ({len(conditions)} conditions x {len(seeds)} seeds)")
    return EXIT_OK


def register(subparsers) -> None:
    parser = subparsers.add_parser("sample", help="generate scenes for condition files and seeds")
    add_common_arguments(parser)
    parser.add_argument("conditions", type=Path, nargs="+", help=".sketch.pgm files or directories of them")
    parser.add_argument("--seeds", type=int, nargs="+", default=None, help="sampling seeds (default: SEED)")
    parser.add_argument("--out", type=Path, default=None, help="override OUTPUT_DIR")
    parser.add_argument("--checkpoints", type=Path, default=None, help="override CHECKPOINT_DIR")
    parser.set_defaults(handler=sample)
