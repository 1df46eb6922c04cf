"""
Training Service
Three-stage training (VAE, SSEN, latent diffusion) with resumable checkpoints
"""

from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence
import csv
import logging
import math

import numpy as np
from tqdm import tqdm

from app.autograd.nn import Module
from app.autograd.optim import AdamW, WarmupCosineSchedule
from app.autograd.tensor import Tensor, backward, get_tape, no_grad
from app.config import RunConfig
from app.exceptions import CheckpointError, InvariantError
from app.schemas.latent import VaeLossWeights
from app.schemas.manifest import CheckpointMetadata, LossRow
from app.services.checkpoints import (
    CheckpointService,
    build_conditioned_denoiser,
    build_ssen,
    build_vae,
)
from app.services.dataset import DatasetService, Scene
from app.services.diffusion import make_schedule, q_sample
from app.services.losses import cross_entropy, enet_class_weights, ldm_loss, vae_loss
from app.services.voxel_ops import lift_condition, majority_pool, one_hot

logger = logging.getLogger(__name__)

# (batch indices, epoch rng) -> named scalar losses including "total"
StepFn = Callable[[np.ndarray, np.random.Generator], Dict[str, Tensor]]

_EPOCH_STREAMS = {"vae": 11, "ssen": 12, "diffusion": 13}
# denoiser component switch -> checkpoint suffix when the switch is turned off
ABLATION_SUFFIXES = {"use_cylinder": "_no_cylinder", "use_cscb": "_no_cscb", "use_ddcb": "_no_ddcb"}
ABLATION_VARIANT = ABLATION_SUFFIXES["use_cylinder"]


def ablation_variant(config: RunConfig, components: Dict[str, bool]) -> str:
    """Checkpoint suffix naming the components switched off against the run config"""
    return "".join(
        suffix for key, suffix in ABLATION_SUFFIXES.items()
        if getattr(config, key.upper()) and not components[key]
    )


def latent_scale_factor(latents: np.ndarray) -> float:
    """1/std of the training latents; 1 for constant latents"""
    std = float(np.std(latents))
    return 1.0 / std if std > 0 else 1.0


class LossLog:
    """Per-epoch loss CSV: epoch followed by one column per loss term"""

    def __init__(self, path: Path):
        self.path = Path(path)

    def reset(self) -> None:
        self.path.unlink(missing_ok=True)

    def append(self, row: LossRow) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fields = ["epoch"] + list(row.values)
        new_file = not self.path.is_file()
        with open(self.path, "a", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=fields)
            if new_file:
                writer.writeheader()
            writer.writerow({"epoch": row.epoch, **{k: f"{v:.10g}" for k, v in row.values.items()}})

    def rows(self) -> List[Dict[str, str]]:
        if not self.path.is_file():
            return []
        with open(self.path, newline="") as handle:
            return list(csv.DictReader(handle))

    def backfill(self, history: Sequence[Dict[str, float]]) -> int:
        """Append rows for checkpointed epochs missing from the CSV; returns how many were written"""
        logged = len(self.rows())
        for epoch in range(logged, len(history)):
            self.append(LossRow(epoch=epoch + 1, values=history[epoch]))
        return max(len(history) - logged, 0)


class TrainingService:
    """Runs the VAE → SSEN → diffusion stages over a scene directory"""

    def __init__(
        self,
        config: RunConfig,
        checkpoints: Optional[CheckpointService] = None,
        dataset: Optional[DatasetService] = None,
        progress: bool = False,
    ):
        self.config = config
        self.checkpoints = checkpoints or CheckpointService(config)
        self.dataset = dataset or DatasetService(config)
        self.progress = progress
        self._scenes: Optional[List[Scene]] = None

    @property
    def scenes(self) -> List[Scene]:
        if self._scenes is None:
            self._scenes = self.dataset.load_scenes(Path(self.config.DATA_DIR))
            logger.info(f"Loaded {len(self._scenes)} training scenes from {self.config.DATA_DIR}")
        return self._scenes

    def loss_log(self, stage: str, variant: str = "") -> LossLog:
        return LossLog(Path(self.config.CHECKPOINT_DIR) / f"{stage}{variant}_loss.csv")

    # Shared loop

    def _batches(self, rng: np.random.Generator) -> List[np.ndarray]:
        order = rng.permutation(len(self.scenes))
        size = self.config.BATCH_SIZE
        return [order[i:i + size] for i in range(0, len(order), size)]

    def _run_stage(
        self,
        stage: str,
        module: Module,
        base_lr: float,
        epochs: int,
        step: StepFn,
        resume: bool,
        variant: str = "",
        extra_metadata: Optional[Dict] = None,
    ) -> CheckpointMetadata:
        steps_per_epoch = math.ceil(len(self.scenes) / self.config.BATCH_SIZE)
        schedule = WarmupCosineSchedule(
            base_lr,
            warmup_steps=self.config.WARMUP_EPOCHS * steps_per_epoch,
            total_steps=max(epochs, 1) * steps_per_epoch,
        )
        optimizer = AdamW(module, schedule, weight_decay=self.config.WEIGHT_DECAY)
        log = self.loss_log(stage, variant)
        extra_metadata = extra_metadata or {}

        start, history = 0, []
        if resume and self.checkpoints.exists(stage, variant):
            tensors, metadata = self.checkpoints.read(stage, variant=variant)
            for key, value in extra_metadata.items():
                if value is not None and getattr(metadata, key) not in (None, value):
                    raise CheckpointError(
                        f"cannot resume {stage}: checkpoint has {key}={getattr(metadata, key)}, run has {value}"
                    )
            self.checkpoints.restore(tensors, module, optimizer)
            logger.info(f"Loaded {stage} checkpoint from {self.checkpoints.path(stage, variant)} (epoch {metadata.epoch})")
            start, history = metadata.epoch, list(metadata.history)
            restored = log.backfill(history)
            if restored:
                logger.warning(f"Restored {restored} missing {stage} loss row(s) from checkpoint history")
            logger.info(f"Resuming {stage} from epoch {start}/{epochs}")
        else:
            log.reset()

        metadata = CheckpointMetadata(
            stage=stage, epoch=start, total_epochs=epochs,
            config=self.config.model_dump(mode="json"), history=history, **extra_metadata,
        )
        epochs_bar = tqdm(range(start, epochs), desc=f"train {stage}", disable=not self.progress)
        for epoch in epochs_bar:
            rng = np.random.default_rng([self.config.SEED, _EPOCH_STREAMS[stage], epoch])
            module.train()
            if hasattr(module, "set_epoch"):
                module.set_epoch(epoch)

            totals: Dict[str, float] = {}
            batches = self._batches(rng)
            for indices in batches:
                optimizer.zero_grad()
                get_tape().clear()
                losses = step(indices, rng)
                backward(losses["total"])
                optimizer.step()
                for name, value in losses.items():
                    totals[name] = totals.get(name, 0.0) + value.item()

            means = {name: value / len(batches) for name, value in totals.items()}
            history.append(means)
            metadata = metadata.model_copy(update={"epoch": epoch + 1, "history": history})
            self.checkpoints.save(stage, module, metadata, optimizer, variant=variant)
            # rows only for checkpointed epochs so a resumed run never repeats one
            log.append(LossRow(epoch=epoch + 1, values=means))
            epochs_bar.set_postfix(loss=f"{means['total']:.4f}")
            logger.info(f"{stage} epoch {epoch + 1}/{epochs}: " + " ".join(f"{k}={v:.5f}" for k, v in means.items()))
        return metadata

    # Stages

    def train_vae(self, epochs: Optional[int] = None, resume: bool = True) -> CheckpointMetadata:
        """Reconstruction training: CE + γ·Lovász + β·KL on one-hot scenes"""
        epochs = self.config.EPOCHS_VAE if epochs is None else epochs
        vae = build_vae(self.config)
        weights = VaeLossWeights(gamma=self.config.LOVASZ_WEIGHT, beta=self.config.KL_WEIGHT)
        scenes = self.scenes
        inputs = np.stack([one_hot(s.grid.labels, self.config.NUM_CLASSES) for s in scenes])
        labels = np.stack([s.grid.labels.astype(np.int64) for s in scenes])
        latent_shape = (self.config.LATENT_CHANNELS,) + self.config.latent_dims

        def step(indices: np.ndarray, rng: np.random.Generator) -> Dict[str, Tensor]:
            eps = rng.standard_normal((len(indices),) + latent_shape)
            logits, latent = vae(Tensor(inputs[indices]), eps)
            return vae_loss(logits, labels[indices], latent, weights)

        try:
            return self._run_stage("vae", vae, self.config.LR_VAE, epochs, step, resume)
        except Exception as e:
            logger.error(f"VAE training failed: {e}")
            raise

    def ssen_targets(self, scenes: Sequence[Scene]) -> np.ndarray:
        return np.stack([majority_pool(s.grid.labels, self.config.NUM_CLASSES) for s in scenes])

    def lifted_conditions(self, scenes: Sequence[Scene]) -> np.ndarray:
        height = self.config.dims[2]
        return np.stack([lift_condition(s.condition, height) for s in scenes])

    def train_ssen(self, epochs: Optional[int] = None, resume: bool = True) -> CheckpointMetadata:
        """Class-weighted CE against majority-pooled labels at latent resolution"""
        epochs = self.config.EPOCHS_SSEN if epochs is None else epochs
        ssen = build_ssen(self.config)
        scenes = self.scenes
        conds = self.lifted_conditions(scenes)
        targets = self.ssen_targets(scenes)
        class_weights = enet_class_weights(np.bincount(targets.reshape(-1), minlength=self.config.NUM_CLASSES))

        def step(indices: np.ndarray, rng: np.random.Generator) -> Dict[str, Tensor]:
            loss = cross_entropy(ssen(Tensor(conds[indices])), targets[indices], class_weights)
            return {"ce": loss, "total": loss}

        try:
            return self._run_stage("ssen", ssen, self.config.LR_SSEN, epochs, step, resume)
        except Exception as e:
            logger.error(f"SSEN training failed: {e}")
            raise

    def encode_latents(self, scenes: Sequence[Scene]) -> np.ndarray:
        """Posterior means of the frozen VAE, (m, c_z, l, w, h)"""
        vae = build_vae(self.config)
        self.checkpoints.load("vae", vae, needed_by="diffusion training")
        vae.eval()
        latents = []
        with no_grad():
            for scene in scenes:
                x = Tensor(one_hot(scene.grid.labels, self.config.NUM_CLASSES)[None])
                latents.append(vae.encoder(x).mean.data[0])
        return np.stack(latents)

    def ssen_logits(self, conds: np.ndarray) -> np.ndarray:
        """Frozen SSEN outputs for lifted conditions"""
        ssen = build_ssen(self.config)
        self.checkpoints.load("ssen", ssen, needed_by="diffusion training")
        ssen.eval()
        with no_grad():
            return np.concatenate([ssen(Tensor(conds[i:i + 1])).data for i in range(len(conds))])

    def train_diffusion(
        self,
        epochs: Optional[int] = None,
        resume: bool = True,
        use_cylinder: Optional[bool] = None,
        use_cscb: Optional[bool] = None,
        use_ddcb: Optional[bool] = None,
    ) -> CheckpointMetadata:
        """
        ε-prediction on scaled VAE latents with LMN and SSEN conditioning.

        Needs the VAE and SSEN checkpoints. Switching off a component the run
        config enables (``use_cylinder``, ``use_cscb``, ``use_ddcb``) trains an
        ablation into its own checkpoint and loss log, e.g.
        ``diffusion_no_cscb.ckpt``.
        """
        epochs = self.config.EPOCHS_DIFFUSION if epochs is None else epochs
        requested = {"use_cylinder": use_cylinder, "use_cscb": use_cscb, "use_ddcb": use_ddcb}
        components = {
            key: getattr(self.config, key.upper()) if value is None else value
            for key, value in requested.items()
        }
        variant = ablation_variant(self.config, components)
        for stage in ("vae", "ssen"):
            self.checkpoints.require(stage, needed_by="diffusion training")

        scenes = self.scenes
        if not scenes:
            raise InvariantError("diffusion training needs at least one scene")
        conds = self.lifted_conditions(scenes)
        latents = self.encode_latents(scenes)
        scale = latent_scale_factor(latents)
        x0 = latents * scale
        ssen_logits = self.ssen_logits(conds)
        schedule = make_schedule(self.config)
        model = build_conditioned_denoiser(self.config, **components)
        switched = ", ".join(f"{key}={value}" for key, value in components.items())
        logger.info(f"Diffusion stage: latent scale {scale:.5f}, {switched}, variant {variant or '(full)'}")

        def step(indices: np.ndarray, rng: np.random.Generator) -> Dict[str, Tensor]:
            t = rng.integers(0, schedule.T, size=len(indices))
            noise = rng.standard_normal(x0[indices].shape)
            x_t = q_sample(schedule, x0[indices], t, noise)
            predicted = model(Tensor(x_t), t, Tensor(conds[indices]), Tensor(ssen_logits[indices]))
            loss = ldm_loss(predicted, noise)
            return {"ldm": loss, "total": loss}

        try:
            return self._run_stage(
                "diffusion", model, self.config.LR_DIFFUSION, epochs, step, resume,
                variant=variant, extra_metadata={"latent_scale": scale, **components},
            )
        except Exception as e:
            logger.error(f"Diffusion training failed: {e}")
            raise
