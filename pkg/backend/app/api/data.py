"""
Data Commands
Sketch/PSA preparation and toy dataset generation
"""

from argparse import Namespace
from pathlib import Path
import logging

from app.dependencies import EXIT_INVALID, EXIT_OK, add_common_arguments, get_run_config
from app.services.dataset import DatasetService

logger = logging.getLogger(__name__)


def make_sketch(args: Namespace) -> int:
    """
    Write NAME.sketch.pgm, NAME.psa.pgm and NAME.txt for every label file.

    The PSA written here is the BEV class map of the scene itself.
    """
    config = get_run_config(args)
    failures = DatasetService(config).make_sketches(args.labels, args.out)
    if failures:
        logger.error(f"make-sketch: {len(failures)} file(s) failed: {', '.join(sorted(failures))}")
        return EXIT_INVALID
    return EXIT_OK


def gen_toy(args: Namespace) -> int:
    config = get_run_config(args, TOY_SCENES=args.count)
    out_dir = args.out or Path(config.DATA_DIR)
    DatasetService(config).generate_toy(out_dir, config.TOY_SCENES, config.SEED)
    print(out_dir)
    return EXIT_OK


def register(subparsers) -> None:
    parser = subparsers.add_parser("make-sketch", help="BEV sketches and synthetic PSAs from label files")
    add_common_arguments(parser)
    parser.add_argument("labels", type=Path, help="directory of .lbl files")
    parser.add_argument("--out", type=Path, default=None, help="output directory (default: alongside labels)")
    parser.set_defaults(handler=make_sketch)

    parser = subparsers.add_parser("gen-toy", help="seeded procedural toy scenes with conditions")
    add_common_arguments(parser)
    parser.add_argument("--count", type=int, default=None, help="override TOY_SCENES")
    parser.add_argument("--out", type=Path, default=None, help="output directory (default: DATA_DIR)")
    parser.set_defaults(handler=gen_toy)
