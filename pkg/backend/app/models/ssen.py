"""
Scene Structure Estimation Network
Coarse voxel-class logits at latent resolution from sketch and PSA conditions
"""

import numpy as np

from app.autograd import functional as F
from app.autograd.nn import Conv3d, Module
from app.autograd.tensor import Tensor
from app.exceptions import ShapeError
from app.models.conv_blocks import DdrBlock, MultiScaleBlock


class Ssen(Module):
    """
    Lifted condition volume (B, 1 + C, L, W, H) → logits (B, C, L/4, W/4, H/4).

    A learned 1×1×1 channel mix follows the replication along H; two
    stride-2 convolutions reach latent resolution.
    """

    def __init__(self, num_classes: int, width: int, rng: np.random.Generator):
        self.num_classes = num_classes
        self.lift = Conv3d(1 + num_classes, width, 1, rng)
        self.down1 = Conv3d(width, width, 3, rng, stride=2, padding=1)
        self.down2 = Conv3d(width, width, 3, rng, stride=2, padding=1)
        self.context = MultiScaleBlock(width, rng)
        self.refine = DdrBlock(width, rng)
        self.head = Conv3d(width, num_classes, 1, rng)

    def forward(self, cond: Tensor) -> Tensor:
        if cond.ndim != 5 or cond.shape[1] != 1 + self.num_classes:
            raise ShapeError("ssen", cond.shape, ("B", 1 + self.num_classes, "L", "W", "H"))
        h = F.relu(self.lift(cond))
        h = F.relu(self.down1(h))
        h = F.relu(self.down2(h))
        h = self.refine(self.context(h))
        return self.head(h)
