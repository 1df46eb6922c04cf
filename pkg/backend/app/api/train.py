"""
Training Commands
VAE, SSEN and diffusion stages
"""

from argparse import Namespace
from pathlib import Path
import logging

from app.dependencies import EXIT_OK, add_common_arguments, get_run_config, progress_enabled
from app.services.training import TrainingService

logger = logging.getLogger(__name__)


def _service(args: Namespace) -> TrainingService:
    config = get_run_config(args, DATA_DIR=args.data, CHECKPOINT_DIR=args.out)
    return TrainingService(config, progress=progress_enabled())


def train_vae(args: Namespace) -> int:
    metadata = _service(args).train_vae(epochs=args.epochs, resume=not args.no_resume)
    logger.info(f"VAE training finished at epoch {metadata.epoch}")
    return EXIT_OK


def train_ssen(args: Namespace) -> int:
    metadata = _service(args).train_ssen(epochs=args.epochs, resume=not args.no_resume)
    logger.info(f"SSEN training finished at epoch {metadata.epoch}")
    return EXIT_OK


def train_diffusion(args: Namespace) -> int:
    switches = {
        "use_cylinder": args.ablate_cylinder,
        "use_cscb": args.ablate_cscb,
        "use_ddcb": args.ablate_ddcb,
    }
    metadata = _service(args).train_diffusion(
        epochs=args.epochs,
        resume=not args.no_resume,
        **{key: False if ablated else None for key, ablated in switches.items()},
    )
    logger.info(f"Diffusion training finished at epoch {metadata.epoch}")
    return EXIT_OK


def register(subparsers) -> None:
    for name, handler, help_text in (
        ("train-vae", train_vae, "train the 3D VAE"),
        ("train-ssen", train_ssen, "train the scene structure estimation network (needs nothing)"),
        ("train-diffusion", train_diffusion, "train LMN + denoiser (needs VAE and SSEN checkpoints)"),
    ):
        parser = subparsers.add_parser(name, help=help_text)
        add_common_arguments(parser)
        parser.add_argument("--epochs", type=int, default=None, help="override the stage's epoch count")
        parser.add_argument("--data", type=Path, default=None, help="override DATA_DIR")
        parser.add_argument("--out", type=Path, default=None, help="override CHECKPOINT_DIR")
        parser.add_argument("--no-resume", action="store_true", help="start over instead of resuming")
        if name == "train-diffusion":
            parser.add_argument(
                "--ablate-cylinder", action="store_true",
                help="Triple-Mamba-only denoiser, written to diffusion_no_cylinder.ckpt",
            )
            parser.add_argument(
                "--ablate-cscb", action="store_true",
                help="drop the context condition block, written to diffusion_no_cscb.ckpt",
            )
            parser.add_argument(
                "--ablate-ddcb", action="store_true",
                help="drop the dilated condition block, written to diffusion_no_ddcb.ckpt",
            )
        parser.set_defaults(handler=handler)
