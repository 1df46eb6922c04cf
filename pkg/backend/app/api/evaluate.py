"""
Evaluation Commands
3D FID/MMD, IoU/mIoU and VAE reconstruction reports
"""

from argparse import Namespace
from pathlib import Path
from typing import Any, Dict, List, Tuple
import json
import logging

from app.autograd.snapshot import atomic_write
from app.config import RunConfig
from app.dependencies import EXIT_OK, add_common_arguments, get_run_config
from app.exceptions import FormatError
from app.schemas.voxel import VoxelGrid
from app.services.checkpoints import CheckpointService, build_vae
from app.services.metrics import EvaluationService, reconstruction_report
from app.utils.voxel_io import LABEL_SUFFIX, list_label_files, read_voxel_labels, scene_id

logger = logging.getLogger(__name__)

SEED_MARKER = "_seed"


def condition_scene(name: str) -> str:
    """Scene id a generated sample was conditioned on (NAME_seedXXXX -> NAME)"""
    head, marker, tail = name.rpartition(SEED_MARKER)
    return head if marker and tail.isdigit() else name


def read_named_grids(directory: Path, config: RunConfig) -> List[Tuple[str, VoxelGrid]]:
    files = list_label_files(directory)
    if not files:
        raise FormatError(f"No {LABEL_SUFFIX} files in {directory}")
    return [(scene_id(path), read_voxel_labels(path, config.dims, config.NUM_CLASSES)) for path in files]


def matched_pairs(
    real: List[Tuple[str, VoxelGrid]], generated: List[Tuple[str, VoxelGrid]]
) -> List[Tuple[VoxelGrid, VoxelGrid]]:
    """(generated, real) pairs whose scene ids agree"""
    by_name = dict(real)
    return [
        (grid, by_name[condition_scene(name)])
        for name, grid in generated
        if condition_scene(name) in by_name
    ]


def evaluate(args: Namespace) -> int:
    config = get_run_config(args, CHECKPOINT_DIR=args.checkpoints)
    vae = build_vae(config)
    CheckpointService(config).load("vae", vae, needed_by="evaluation")
    vae.eval()

    real = read_named_grids(args.real_dir, config)
    generated = read_named_grids(args.gen_dir, config)
    pairs = matched_pairs(real, generated)
    if not pairs:
        logger.warning("No generated sample matches a real scene id; IoU/mIoU omitted")

    report = EvaluationService(vae, bandwidth=args.bandwidth).evaluate(
        [grid for _, grid in real], [grid for _, grid in generated], pairs
    )
    payload: Dict[str, Any] = report.model_dump(mode="json")
    if args.reconstruction:
        payload["reconstruction"] = reconstruction_report([grid for _, grid in real], vae).model_dump(mode="json")

    text = json.dumps(payload, indent=2)
    if args.out is not None:
        atomic_write(args.out, (text + "\n").encode("utf-8"))
        logger.info(f"Metric report written to {args.out}")
    print(text)
    return EXIT_OK


def _bandwidth(value: str):
    return value if value == "median" else float(value)


def register(subparsers) -> None:
    parser = subparsers.add_parser("evaluate", help="3D FID, MMD and IoU between real and generated scenes")
    add_common_arguments(parser)
    parser.add_argument("real_dir", type=Path, help="directory of real .lbl scenes")
    parser.add_argument("gen_dir", type=Path, help="directory of generated .lbl scenes")
    parser.add_argument("--bandwidth", type=_bandwidth, default="median", help="Gaussian kernel bandwidth or 'median'")
    parser.add_argument("--reconstruction", action="store_true", help="add a VAE reconstruction report of real_dir")
    parser.add_argument("--checkpoints", type=Path, default=None, help="override CHECKPOINT_DIR")
    parser.add_argument("--out", type=Path, default=None, help="also write the JSON report to this file")
    parser.set_defaults(handler=evaluate)
