"""
Info Command
Resolved run configuration and network parameter counts
"""

from argparse import Namespace
import json
import logging

from app.dependencies import EXIT_OK, add_common_arguments, get_run_config
from app.services.checkpoints import build_conditioned_denoiser, build_ssen, build_vae
from app.services.metrics import parameter_report

logger = logging.getLogger(__name__)


def info(args: Namespace) -> int:
    config = get_run_config(args)
    model = build_conditioned_denoiser(config)
    networks = {
        "vae": build_vae(config),
        "ssen": build_ssen(config),
        "lmn": model.lmn,
        "denoiser": model.denoiser,
    }
    report = parameter_report(networks, channels=config.STAGE_WIDTHS[0])
    payload = {
        "config": config.model_dump(mode="json"),
        "parameters": report.model_dump(mode="json"),
    }
    print(json.dumps(payload, indent=2))
    return EXIT_OK


def register(subparsers) -> None:
    parser = subparsers.add_parser("info", help="print the resolved config and parameter counts")
    add_common_arguments(parser)
    parser.set_defaults(handler=info)
