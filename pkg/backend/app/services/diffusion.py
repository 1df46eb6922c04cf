"""
Diffusion Engine
Noise schedules, forward noising, ancestral sampling and scene generation
"""

from typing import Callable, Optional, Sequence, Tuple
import logging
import math

import numpy as np

from app.autograd.tensor import Tensor, no_grad
from app.config import RunConfig
from app.exceptions import InvariantError, NumericalError, ShapeError
from app.models.denoiser import ConditionedDenoiser
from app.models.ssen import Ssen
from app.models.vae import Vae
from app.schemas.diffusion import NoiseSchedule
from app.schemas.voxel import ConditionPair, VoxelGrid
from app.services.voxel_ops import lift_condition

logger = logging.getLogger(__name__)

COSINE_OFFSET = 0.008
COSINE_CLIP = (1e-4, 0.999)

# (x_t, t) -> predicted noise, both (B, c_z, l, w, h)
NoisePredictor = Callable[[np.ndarray, np.ndarray], np.ndarray]


def linear_schedule(timesteps: int, beta_start: float = 1e-4, beta_end: float = 2e-2) -> NoiseSchedule:
    if timesteps == 1:
        return NoiseSchedule(betas=[beta_start], kind="linear")
    if beta_start == beta_end:
        return NoiseSchedule(betas=np.full(timesteps, beta_start), kind="custom")
    return NoiseSchedule(betas=np.linspace(beta_start, beta_end, timesteps), kind="linear")


def cosine_schedule(timesteps: int, s: float = COSINE_OFFSET) -> NoiseSchedule:
    """ᾱ(t) ∝ cos²(((t/T) + s)/(1 + s)·π/2), betas clipped to [1e-4, 0.999]"""
    x = np.linspace(0, timesteps, timesteps + 1)
    alpha_bars = np.cos(((x / timesteps) + s) / (1 + s) * math.pi * 0.5) ** 2
    alpha_bars = alpha_bars / alpha_bars[0]
    betas = 1.0 - alpha_bars[1:] / alpha_bars[:-1]
    return NoiseSchedule(betas=np.clip(betas, *COSINE_CLIP), kind="cosine")


def make_schedule(config: RunConfig) -> NoiseSchedule:
    if config.SCHEDULE == "cosine":
        return cosine_schedule(config.TIMESTEPS)
    return linear_schedule(config.TIMESTEPS, config.BETA_START, config.BETA_END)


def _per_sample(values: np.ndarray, t: np.ndarray, ndim: int) -> np.ndarray:
    return values[t].reshape((-1,) + (1,) * (ndim - 1))


def _check_timesteps(schedule: NoiseSchedule, t, batch: int) -> np.ndarray:
    t = np.asarray(t, dtype=np.int64).reshape(-1)
    if t.size == 1 and batch > 1:
        t = np.full(batch, int(t[0]))
    if t.size != batch:
        raise ShapeError("timesteps", (batch,), t.shape, detail="one timestep per sample")
    bad = np.flatnonzero((t < 0) | (t >= schedule.T))
    if bad.size:
        raise InvariantError(f"timestep {int(t[bad[0]])} outside [0, {schedule.T})")
    return t


def q_sample(schedule: NoiseSchedule, x0: np.ndarray, t, noise: np.ndarray) -> np.ndarray:
    """x_t = sqrt(ᾱ_t)·x0 + sqrt(1 − ᾱ_t)·ε"""
    x0 = np.asarray(x0, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if x0.shape != noise.shape:
        raise ShapeError("q_sample", x0.shape, noise.shape)
    t = _check_timesteps(schedule, t, x0.shape[0])
    alpha_bar = _per_sample(schedule.alpha_bars, t, x0.ndim)
    return np.sqrt(alpha_bar) * x0 + np.sqrt(1.0 - alpha_bar) * noise


def predict_x0(schedule: NoiseSchedule, x_t: np.ndarray, t, noise: np.ndarray) -> np.ndarray:
    """Closed-form inverse of ``q_sample`` given the noise"""
    x_t = np.asarray(x_t, dtype=np.float64)
    t = _check_timesteps(schedule, t, x_t.shape[0])
    alpha_bar = _per_sample(schedule.alpha_bars, t, x_t.ndim)
    return (x_t - np.sqrt(1.0 - alpha_bar) * np.asarray(noise)) / np.sqrt(alpha_bar)


def p_sample_step(
    schedule: NoiseSchedule,
    x_t: np.ndarray,
    t: int,
    predicted_noise: np.ndarray,
    z: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    x_{t−1} = (x_t − β_t/sqrt(1 − ᾱ_t)·ε̂)/sqrt(α_t) + σ_t·z with σ_t² = β_t.

    The final step (t = 0) adds no noise.
    """
    beta = schedule.betas[t]
    alpha = schedule.alphas[t]
    alpha_bar = schedule.alpha_bars[t]
    mean = (x_t - beta / math.sqrt(1.0 - alpha_bar) * predicted_noise) / math.sqrt(alpha)
    if t == 0 or z is None:
        return mean
    return mean + math.sqrt(beta) * z


def p_sample_loop(
    predict_noise: NoisePredictor,
    schedule: NoiseSchedule,
    shape: Sequence[int],
    seed: int,
) -> np.ndarray:
    """Ancestral sampling from x_T ~ N(0, I); deterministic for a fixed seed"""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(tuple(shape))
    for t in reversed(range(schedule.T)):
        steps = np.full(x.shape[0], t, dtype=np.int64)
        eps = np.asarray(predict_noise(x, steps), dtype=np.float64)
        if eps.shape != x.shape:
            raise ShapeError("p_sample_loop", x.shape, eps.shape)
        z = rng.standard_normal(x.shape) if t > 0 else None
        x = p_sample_step(schedule, x, t, eps, z)
        if not np.all(np.isfinite(x)):
            raise NumericalError(f"non-finite latent at timestep {t}")
    return x


class SceneGenerator:
    """Condition pair + seed → generated voxel scene, with trained networks held in eval mode"""

    def __init__(
        self,
        vae: Vae,
        ssen: Ssen,
        model: ConditionedDenoiser,
        schedule: NoiseSchedule,
        dims: Tuple[int, int, int],
        latent_scale: float = 1.0,
    ):
        if latent_scale <= 0:
            raise InvariantError(f"latent scale must be positive, got {latent_scale}")
        self.vae = vae.eval()
        self.ssen = ssen.eval()
        self.model = model.eval()
        self.schedule = schedule
        self.dims = tuple(dims)
        self.latent_scale = latent_scale
        self.num_classes = vae.num_classes

    def conditioning(self, pair: ConditionPair) -> Tuple[Tensor, Tensor]:
        """LMN features and SSEN logits for one condition pair, batch of one"""
        if pair.num_classes != self.num_classes:
            raise InvariantError(f"condition has {pair.num_classes} classes, networks expect {self.num_classes}")
        if tuple(pair.shape) != self.dims[:2]:
            raise ShapeError("generate_scene", pair.shape, self.dims[:2])
        lifted = Tensor(lift_condition(pair, self.dims[2])[None])
        with no_grad():
            return self.model.encode_condition(lifted), self.ssen(lifted)

    def sample_latent(self, pair: ConditionPair, seed: int) -> np.ndarray:
        cond, ssen_logits = self.conditioning(pair)
        denoiser = self.model.denoiser

        def predict_noise(x: np.ndarray, t: np.ndarray) -> np.ndarray:
            with no_grad():
                return denoiser(Tensor(x), t, cond, ssen_logits).data

        shape = (1, denoiser.latent_channels) + denoiser.latent_dims
        return p_sample_loop(predict_noise, self.schedule, shape, seed)

    def decode(self, latent: np.ndarray) -> np.ndarray:
        """Scaled latent → (B, L, W, H) argmax labels"""
        with no_grad():
            logits = self.vae.decoder(Tensor(latent / self.latent_scale))
        return np.argmax(logits.data, axis=1)

    def generate(self, pair: ConditionPair, seed: int) -> VoxelGrid:
        """lmn_encode + ssen_forward → p_sample_loop → decode → argmax"""
        try:
            labels = self.decode(self.sample_latent(pair, seed))[0]
            grid = VoxelGrid(dims=self.dims, num_classes=self.num_classes, labels=labels)
            logger.info(f"Generated scene for seed {seed}: {grid.occupied} occupied voxels")
            return grid
        except Exception as e:
            logger.error(f"Scene generation failed for seed {seed}: {e}")
            raise
