"""
CymbaDiff Denoiser
Noise-prediction network over the VAE latent with cylinder mamba stages
"""

from typing import List, Optional, Sequence, Tuple
import logging
import math

import numpy as np

from app.autograd import functional as F
from app.autograd.nn import Conv3d, ConvTranspose3d, GELU, Linear, Module, ModuleList
from app.autograd.tensor import Tensor
from app.exceptions import ShapeError
from app.models.conv_blocks import Cscb, Ddcb
from app.models.mamba import CylinderMambaBlock
from app.models.vae import LatentMappingNetwork
from app.schemas.diffusion import DenoiserInput
from app.services.scan_order import cartesian_order, cylinder_order

logger = logging.getLogger(__name__)

Dims = Tuple[int, int, int]


def sinusoidal_embedding(t: np.ndarray, dim: int) -> np.ndarray:
    """(B,) integer timesteps → (B, dim) sin/cos features, zero-padded for odd dim"""
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    half = dim // 2
    if half == 0:
        return np.zeros((t.size, dim))
    scale = math.log(10000) / max(half - 1, 1)
    freqs = np.exp(-scale * np.arange(half))
    args = t[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(args), np.cos(args)], axis=-1)
    if dim % 2:
        emb = np.pad(emb, ((0, 0), (0, 1)))
    return emb


def stage_factor(dims: Dims) -> Dims:
    """Down-sampling factor between stages: halve L and W, halve H only while it stays whole"""
    height = dims[2]
    return (2, 2, 2 if height > 1 and height % 2 == 0 else 1)


def stage_dims(latent_dims: Dims, stages: int) -> List[Dims]:
    dims = [tuple(int(d) for d in latent_dims)]
    for _ in range(stages - 1):
        current = dims[-1]
        factor = stage_factor(current)
        if current[0] % 2 or current[1] % 2:
            raise ShapeError(
                "denoiser", latent_dims, (2 ** (stages - 1),) * 2,
                detail=f"latent L and W must halve {stages - 1} times",
            )
        dims.append(tuple(d // f for d, f in zip(current, factor)))
    return dims


class TimeEmbedding(Module):
    """Sinusoidal features followed by Linear → GELU → Linear"""

    def __init__(self, dim: int, rng: np.random.Generator):
        self.dim = dim
        self.fc1 = Linear(dim, dim, rng)
        self.act = GELU()
        self.fc2 = Linear(dim, dim, rng)

    def forward(self, t: np.ndarray) -> Tensor:
        return self.fc2(self.act(self.fc1(Tensor(sinusoidal_embedding(t, self.dim)))))


class Denoiser(Module):
    """
    ε_θ(x_t, t, cond, ssen_logits) over latent volumes (B, c_z, l, w, h).

    Conditioning volumes are concatenated channel-wise and passed through a
    CSCB and a DDCB before joining x_t at the input convolution. The time
    embedding is added per channel after the input convolution. Each stage
    holds ``blocks_per_stage`` cylinder mamba blocks; stages are linked by
    strided convolutions on the way down and transposed convolutions with
    skip additions on the way up. ``use_cscb`` and ``use_ddcb`` drop the
    corresponding condition block.
    """

    def __init__(
        self,
        latent_dims: Dims,
        latent_channels: int,
        num_classes: int,
        widths: Sequence[int],
        blocks_per_stage: int,
        state_dim: int,
        rng: np.random.Generator,
        use_cylinder: bool = True,
        scan_priority: str = "z_theta_r",
        eps: float = 1e-5,
        use_cscb: bool = True,
        use_ddcb: bool = True,
    ):
        widths = [int(w) for w in widths]
        self.latent_dims = tuple(int(d) for d in latent_dims)
        self.latent_channels = latent_channels
        self.num_classes = num_classes
        self._dims = stage_dims(self.latent_dims, len(widths))
        w0 = widths[0]

        self.cond_proj = Conv3d(latent_channels + num_classes, w0, 3, rng, padding=1)
        self.cond_context = Cscb(w0, rng) if use_cscb else None
        self.cond_dilated = Ddcb(w0, rng) if use_ddcb else None
        self.in_conv = Conv3d(latent_channels + w0, w0, 3, rng, padding=1)
        self.time_embed = TimeEmbedding(w0, rng)

        stages = []
        layer_index = 0
        for width, dims in zip(widths, self._dims):
            cartesian = cartesian_order(dims)
            cylinder = cylinder_order(dims, scan_priority)
            blocks = []
            for _ in range(blocks_per_stage):
                blocks.append(CylinderMambaBlock(
                    width, state_dim, cartesian, cylinder, rng,
                    layer_index=layer_index, eps=eps, use_cylinder=use_cylinder,
                ))
                layer_index += 1
            stages.append(ModuleList(blocks))
        self.stages = ModuleList(stages)

        downs, ups, merges = [], [], []
        for i in range(len(widths) - 1):
            factor = stage_factor(self._dims[i])
            downs.append(Conv3d(widths[i], widths[i + 1], factor, rng, stride=factor))
            ups.append(ConvTranspose3d(widths[i + 1], widths[i], factor, rng, stride=factor))
            merges.append(Conv3d(widths[i], widths[i], 3, rng, padding=1))
        self.downs = ModuleList(downs)
        self.ups = ModuleList(ups)
        self.merges = ModuleList(merges)
        self.out_conv = Conv3d(w0, latent_channels, 3, rng, padding=1)
        self._use_cylinder = use_cylinder

    @property
    def use_cylinder(self) -> bool:
        return self._use_cylinder

    @property
    def use_cscb(self) -> bool:
        return self.cond_context is not None

    @property
    def use_ddcb(self) -> bool:
        return self.cond_dilated is not None

    @property
    def stage_dims(self) -> List[Dims]:
        return list(self._dims)

    def set_epoch(self, epoch: Optional[int]) -> None:
        """Reseed the inter-slice scans of every block"""
        for module in self.modules():
            if isinstance(module, CylinderMambaBlock):
                module.set_epoch(epoch)

    def condition_features(self, cond: Tensor, ssen_logits: Tensor) -> Tensor:
        h = F.relu(self.cond_proj(F.concat([cond, ssen_logits], axis=1)))
        if self.cond_context is not None:
            h = self.cond_context(h)
        if self.cond_dilated is not None:
            h = self.cond_dilated(h)
        return h

    def forward(self, x_t: Tensor, t: np.ndarray, cond: Tensor, ssen_logits: Tensor) -> Tensor:
        inputs = DenoiserInput(x_t=x_t, t=t, cond=cond, ssen_logits=ssen_logits)
        if tuple(x_t.shape[1:]) != (self.latent_channels,) + self.latent_dims:
            raise ShapeError("denoiser", x_t.shape, ("B", self.latent_channels) + self.latent_dims)

        features = self.condition_features(inputs.cond, inputs.ssen_logits)
        h = self.in_conv(F.concat([inputs.x_t, features], axis=1))
        emb = self.time_embed(inputs.t)
        h = h + F.reshape(emb, emb.shape + (1, 1, 1))

        skips = []
        for i, stage in enumerate(self.stages):
            for block in stage:
                h = block(h)
            if i < len(self.downs):
                skips.append(h)
                h = self.downs[i](h)

        for i in reversed(range(len(self.ups))):
            h = self.ups[i](h) + skips[i]
            h = F.gelu(self.merges[i](h))
        return self.out_conv(h)


class ConditionedDenoiser(Module):
    """Latent mapping network and denoiser trained together in the diffusion stage"""

    def __init__(self, lmn: LatentMappingNetwork, denoiser: Denoiser):
        self.lmn = lmn
        self.denoiser = denoiser

    def set_epoch(self, epoch: Optional[int]) -> None:
        self.denoiser.set_epoch(epoch)

    def encode_condition(self, lifted: Tensor) -> Tensor:
        return self.lmn(lifted)

    def forward(self, x_t: Tensor, t: np.ndarray, lifted: Tensor, ssen_logits: Tensor) -> Tensor:
        return self.denoiser(x_t, t, self.encode_condition(lifted), ssen_logits)
