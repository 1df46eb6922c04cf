"""
3D VAE and Latent Mapping Network
Encoder, decoder and the condition encoder sharing the encoder architecture
"""

from typing import Optional, Sequence, Tuple

import numpy as np

from app.autograd import functional as F
from app.autograd.nn import BatchNorm3d, Conv3d, ConvTranspose3d, Module, ModuleList
from app.autograd.tensor import Tensor
from app.exceptions import ShapeError
from app.schemas.latent import LatentVolume

LOGVAR_RANGE = (-30.0, 20.0)


class DownBlock(Module):
    """Four 3×3×3 convolutions (BN + ReLU after each pair), then a stride-2 convolution"""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator):
        self.conv1 = Conv3d(in_channels, out_channels, 3, rng, padding=1)
        self.conv2 = Conv3d(out_channels, out_channels, 3, rng, padding=1)
        self.bn1 = BatchNorm3d(out_channels)
        self.conv3 = Conv3d(out_channels, out_channels, 3, rng, padding=1)
        self.conv4 = Conv3d(out_channels, out_channels, 3, rng, padding=1)
        self.bn2 = BatchNorm3d(out_channels)
        self.down = Conv3d(out_channels, out_channels, 3, rng, stride=2, padding=1)
        self.bn3 = BatchNorm3d(out_channels)

    def forward(self, x: Tensor) -> Tensor:
        h = F.relu(self.bn1(self.conv2(self.conv1(x))))
        h = F.relu(self.bn2(self.conv4(self.conv3(h))))
        return F.relu(self.bn3(self.down(h)))


class UpBlock(Module):
    """Stride-2 transposed convolution, then two 3×3×3 convolutions"""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator):
        self.up = ConvTranspose3d(in_channels, out_channels, 2, rng, stride=2)
        self.bn1 = BatchNorm3d(out_channels)
        self.conv1 = Conv3d(out_channels, out_channels, 3, rng, padding=1)
        self.conv2 = Conv3d(out_channels, out_channels, 3, rng, padding=1)
        self.bn2 = BatchNorm3d(out_channels)

    def forward(self, x: Tensor) -> Tensor:
        h = F.relu(self.bn1(self.up(x)))
        return F.relu(self.bn2(self.conv2(self.conv1(h))))


class EncoderTrunk(Module):
    """Two down-sampling blocks: (B, C_in, L, W, H) → (B, widths[1], L/4, W/4, H/4)"""

    def __init__(self, in_channels: int, widths: Sequence[int], rng: np.random.Generator):
        if len(widths) != 2:
            raise ValueError("the encoder has exactly two down-sampling blocks")
        self.in_channels = in_channels
        self.blocks = ModuleList([
            DownBlock(in_channels, widths[0], rng),
            DownBlock(widths[0], widths[1], rng),
        ])

    def features(self, x: Tensor) -> Tensor:
        if x.ndim != 5 or x.shape[1] != self.in_channels:
            raise ShapeError("vae_encoder", x.shape, ("B", self.in_channels, "L", "W", "H"))
        if any(d % 4 for d in x.shape[2:]):
            raise ShapeError("vae_encoder", x.shape[2:], (4, 4, 4), detail="spatial dims must divide by 4")
        h = x
        for block in self.blocks:
            h = block(h)
        return h


class VaeEncoder(EncoderTrunk):
    """One-hot scene (B, C, L, W, H) → posterior over (B, c_z, L/4, W/4, H/4)"""

    def __init__(self, in_channels: int, widths: Sequence[int], latent_channels: int, rng: np.random.Generator):
        super().__init__(in_channels, widths, rng)
        self.mean_head = Conv3d(widths[1], latent_channels, 1, rng)
        self.logvar_head = Conv3d(widths[1], latent_channels, 1, rng)

    def forward(self, x: Tensor) -> LatentVolume:
        h = self.features(x)
        mean = self.mean_head(h)
        logvar = F.clamp(self.logvar_head(h), *LOGVAR_RANGE)
        return LatentVolume(mean=mean, logvar=logvar)

    def encode(self, x: Tensor, eps: Optional[np.ndarray] = None) -> Tuple[LatentVolume, Tensor]:
        """
        Posterior and a latent sample.

        In training mode z = mean + exp(logvar / 2)·eps; in eval mode, or
        when no eps is given, z = mean.
        """
        latent = self(x)
        if not self.training or eps is None:
            return latent, latent.mean
        std = F.exp(F.mul(latent.logvar, 0.5))
        return latent, latent.mean + std * eps


class VaeDecoder(Module):
    """Latent (B, c_z, l, w, h) → class logits (B, C, 4l, 4w, 4h)"""

    def __init__(self, latent_channels: int, widths: Sequence[int], num_classes: int, rng: np.random.Generator):
        self.latent_channels = latent_channels
        self.conv_in = Conv3d(latent_channels, widths[1], 3, rng, padding=1)
        self.blocks = ModuleList([
            UpBlock(widths[1], widths[0], rng),
            UpBlock(widths[0], widths[0], rng),
        ])
        self.head = Conv3d(widths[0], num_classes, 1, rng)

    def forward(self, z: Tensor) -> Tensor:
        if z.ndim != 5 or z.shape[1] != self.latent_channels:
            raise ShapeError("vae_decoder", z.shape, ("B", self.latent_channels, "l", "w", "h"))
        h = F.relu(self.conv_in(z))
        for block in self.blocks:
            h = block(h)
        return self.head(h)


class Vae(Module):
    def __init__(self, num_classes: int, widths: Sequence[int], latent_channels: int, rng: np.random.Generator):
        self.num_classes = num_classes
        self.encoder = VaeEncoder(num_classes, widths, latent_channels, rng)
        self.decoder = VaeDecoder(latent_channels, widths, num_classes, rng)

    def forward(self, x: Tensor, eps: Optional[np.ndarray] = None) -> Tuple[Tensor, LatentVolume]:
        latent, z = self.encoder.encode(x, eps)
        return self.decoder(z), latent


class LatentMappingNetwork(EncoderTrunk):
    """Encoder architecture over lifted condition channels; emits the mean volume only"""

    def __init__(self, in_channels: int, widths: Sequence[int], latent_channels: int, rng: np.random.Generator):
        super().__init__(in_channels, widths, rng)
        self.mean_head = Conv3d(widths[1], latent_channels, 1, rng)

    def forward(self, cond: Tensor) -> Tensor:
        return self.mean_head(self.features(cond))
