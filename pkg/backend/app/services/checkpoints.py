"""
Checkpoint Service
Network construction from a run config and stage checkpoint storage
"""

from pathlib import Path
from typing import Dict, Optional, Tuple
import logging

import numpy as np

from app.autograd.nn import Module
from app.autograd.optim import AdamW
from app.autograd.snapshot import load_checkpoint, save_checkpoint
from app.config import RunConfig
from app.exceptions import CheckpointError
from app.models.denoiser import ConditionedDenoiser, Denoiser
from app.models.ssen import Ssen
from app.models.vae import LatentMappingNetwork, Vae
from app.schemas.manifest import CheckpointMetadata
from app.services.voxel_ops import condition_channels
from app.utils.hashing import hash_file

logger = logging.getLogger(__name__)

STAGE_ORDER = ("vae", "ssen", "diffusion")
OPTIMIZER_PREFIX = "optim."

# Fixed stream offsets keep each network's initialization independent of the others
_INIT_STREAMS = {"vae": 1, "ssen": 2, "diffusion": 3}


def init_rng(config: RunConfig, stage: str) -> np.random.Generator:
    return np.random.default_rng([config.SEED, _INIT_STREAMS[stage]])


def build_vae(config: RunConfig) -> Vae:
    return Vae(config.NUM_CLASSES, config.VAE_WIDTHS, config.LATENT_CHANNELS, init_rng(config, "vae"))


def build_ssen(config: RunConfig) -> Ssen:
    return Ssen(config.NUM_CLASSES, config.SSEN_WIDTH, init_rng(config, "ssen"))


def build_conditioned_denoiser(
    config: RunConfig,
    use_cylinder: Optional[bool] = None,
    use_cscb: Optional[bool] = None,
    use_ddcb: Optional[bool] = None,
) -> ConditionedDenoiser:
    """LMN plus denoiser; unset component switches fall back to the run config"""
    rng = init_rng(config, "diffusion")
    use_cylinder = config.USE_CYLINDER if use_cylinder is None else use_cylinder
    use_cscb = config.USE_CSCB if use_cscb is None else use_cscb
    use_ddcb = config.USE_DDCB if use_ddcb is None else use_ddcb
    lmn = LatentMappingNetwork(
        condition_channels(config.NUM_CLASSES), config.VAE_WIDTHS, config.LATENT_CHANNELS, rng
    )
    denoiser = Denoiser(
        config.latent_dims,
        config.LATENT_CHANNELS,
        config.NUM_CLASSES,
        config.STAGE_WIDTHS,
        config.BLOCKS_PER_STAGE,
        config.STATE_DIM,
        rng,
        use_cylinder=use_cylinder,
        scan_priority=config.SCAN_PRIORITY,
        eps=config.LAYER_NORM_EPS,
        use_cscb=use_cscb,
        use_ddcb=use_ddcb,
    )
    return ConditionedDenoiser(lmn, denoiser)


class CheckpointService:
    """Reads and writes one checkpoint per training stage under CHECKPOINT_DIR"""

    def __init__(self, config: RunConfig):
        self.config = config
        self.directory = Path(config.CHECKPOINT_DIR)

    def path(self, stage: str, variant: str = "") -> Path:
        if stage not in STAGE_ORDER:
            raise CheckpointError(f"Unknown stage {stage!r}; stages run in order {' -> '.join(STAGE_ORDER)}")
        return self.directory / f"{stage}{variant}.ckpt"

    def exists(self, stage: str, variant: str = "") -> bool:
        return self.path(stage, variant).is_file()

    def require(self, stage: str, needed_by: Optional[str] = None, variant: str = "") -> Path:
        """Path of an existing checkpoint, or a CheckpointError naming the stage order"""
        path = self.path(stage, variant)
        if not path.is_file():
            reason = f" (required by {needed_by})" if needed_by else ""
            raise CheckpointError(
                f"Missing {stage} checkpoint at {path}{reason}; "
                f"train the stages in order {' -> '.join(STAGE_ORDER)}"
            )
        return path

    def save(
        self,
        stage: str,
        module: Module,
        metadata: CheckpointMetadata,
        optimizer: Optional[AdamW] = None,
        variant: str = "",
    ) -> Path:
        tensors: Dict[str, np.ndarray] = dict(module.state_dict())
        if optimizer is not None:
            for name, value in optimizer.state_dict().items():
                tensors[OPTIMIZER_PREFIX + name] = value
        path = self.path(stage, variant)
        try:
            save_checkpoint(path, tensors, metadata.model_dump(mode="json"))
        except OSError as e:
            logger.error(f"Checkpoint write failed for stage {stage}: {e}")
            raise
        return path

    def read(
        self, stage: str, needed_by: Optional[str] = None, variant: str = ""
    ) -> Tuple[Dict[str, np.ndarray], CheckpointMetadata]:
        path = self.require(stage, needed_by, variant)
        tensors, raw = load_checkpoint(path)
        try:
            metadata = CheckpointMetadata(**raw)
        except ValueError as e:
            raise CheckpointError(f"Corrupt metadata in {path}: {e}") from None
        if metadata.stage != stage:
            raise CheckpointError(f"{path} holds a {metadata.stage} checkpoint, expected {stage}")
        return tensors, metadata

    def load(
        self,
        stage: str,
        module: Module,
        optimizer: Optional[AdamW] = None,
        needed_by: Optional[str] = None,
        variant: str = "",
    ) -> CheckpointMetadata:
        """Restore module (and optimizer) state in place; returns the stored metadata"""
        tensors, metadata = self.read(stage, needed_by, variant)
        self.restore(tensors, module, optimizer)
        logger.info(f"Loaded {stage} checkpoint from {self.path(stage, variant)} (epoch {metadata.epoch})")
        return metadata

    @staticmethod
    def restore(tensors: Dict[str, np.ndarray], module: Module, optimizer: Optional[AdamW] = None) -> None:
        model_state = {k: v for k, v in tensors.items() if not k.startswith(OPTIMIZER_PREFIX)}
        module.load_state_dict(model_state)
        if optimizer is not None:
            optimizer.load_state_dict({
                k[len(OPTIMIZER_PREFIX):]: v for k, v in tensors.items() if k.startswith(OPTIMIZER_PREFIX)
            })

    def digest(self, stage: str) -> str:
        return hash_file(self.require(stage))

    def load_pipeline(self) -> Tuple[Vae, Ssen, ConditionedDenoiser, CheckpointMetadata]:
        """All three trained networks in eval mode, plus the diffusion metadata"""
        vae = build_vae(self.config)
        self.load("vae", vae, needed_by="sampling")
        ssen = build_ssen(self.config)
        self.load("ssen", ssen, needed_by="sampling")

        tensors, metadata = self.read("diffusion", needed_by="sampling")
        model = build_conditioned_denoiser(
            self.config,
            use_cylinder=metadata.use_cylinder,
            use_cscb=metadata.use_cscb,
            use_ddcb=metadata.use_ddcb,
        )
        self.restore(tensors, model)
        for network in (vae, ssen, model):
            network.eval()
        return vae, ssen, model, metadata
