"""
Convolution Blocks
DDR-decomposed convolutions, multi-scale extraction, CSCB and DDCB
"""

from typing import Dict
import logging

import numpy as np

from app.autograd import functional as F
from app.autograd.nn import Conv3d, Module, ModuleList
from app.autograd.tensor import Tensor
from app.exceptions import ShapeError

logger = logging.getLogger(__name__)


def _same_padding(kernel: int, dilation: int) -> int:
    return dilation * (kernel - 1) // 2


class DdrConv(Module):
    """
    k³ convolution factored into 1×1×k, 1×k×1 and k×1×1 layers.

    Symmetric padding keeps the spatial dims for odd k.
    """

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator, k: int = 3, dilation: int = 1):
        if k % 2 == 0:
            raise ValueError("DDR kernels must have odd extent")
        pad = _same_padding(k, dilation)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.k = k
        self.dilation = dilation
        self.conv_h = Conv3d(in_channels, out_channels, (1, 1, k), rng, padding=(0, 0, pad), dilation=(1, 1, dilation))
        self.conv_w = Conv3d(out_channels, out_channels, (1, k, 1), rng, padding=(0, pad, 0), dilation=(1, dilation, 1))
        self.conv_l = Conv3d(out_channels, out_channels, (k, 1, 1), rng, padding=(pad, 0, 0), dilation=(dilation, 1, 1))

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 5 or x.shape[1] != self.in_channels:
            raise ShapeError("ddr_conv", x.shape, ("B", self.in_channels, "L", "W", "H"))
        return self.conv_l(self.conv_w(self.conv_h(x)))

    def weight_count(self) -> int:
        return sum(conv.weight.size for conv in (self.conv_h, self.conv_w, self.conv_l))


class DdrBlock(Module):
    """Residual DDR: x + ReLU(ddr(x))"""

    def __init__(self, channels: int, rng: np.random.Generator, k: int = 3, dilation: int = 1):
        self.ddr = DdrConv(channels, channels, rng, k, dilation)

    def forward(self, x: Tensor) -> Tensor:
        return x + F.relu(self.ddr(x))


class MultiScaleBlock(Module):
    """
    Stacked 3×3×3 convolutions tapped at receptive fields 3, 5 and 7.

    The three taps are summed and mixed by a 1×1×1 convolution, then added
    to the input.
    """

    def __init__(self, channels: int, rng: np.random.Generator):
        self.convs = ModuleList([Conv3d(channels, channels, 3, rng, padding=1) for _ in range(3)])
        self.merge = Conv3d(channels, channels, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        h = x
        taps = None
        for conv in self.convs:
            h = F.relu(conv(h))
            taps = h if taps is None else taps + h
        return x + self.merge(taps)


class Cscb(Module):
    """Cross-scale contextual block: conv, cascaded multi-scale blocks, conv, plus residual"""

    def __init__(self, channels: int, rng: np.random.Generator, stages: int = 2):
        self.conv_in = Conv3d(channels, channels, 3, rng, padding=1)
        self.stages = ModuleList([MultiScaleBlock(channels, rng) for _ in range(stages)])
        self.conv_out = Conv3d(channels, channels, 3, rng, padding=1)

    def forward(self, x: Tensor) -> Tensor:
        h = F.relu(self.conv_in(x))
        for stage in self.stages:
            h = stage(h)
        return x + self.conv_out(h)


class Ddcb(Module):
    """Dilated decomposed convolution block: DDR paths at dilations 1, 2, 3, summed, plus residual"""

    def __init__(self, channels: int, rng: np.random.Generator, dilations=(1, 2, 3)):
        self.paths = ModuleList([DdrConv(channels, channels, rng, 3, d) for d in dilations])

    def forward(self, x: Tensor) -> Tensor:
        total = None
        for path in self.paths:
            out = F.relu(path(x))
            total = out if total is None else total + out
        return x + total


def ddr_parameter_comparison(channels: int, k: int = 3) -> Dict[str, float]:
    """Weight counts of a DDR factorization against a dense k³ kernel"""
    ddr = 3 * k * channels * channels
    dense = k ** 3 * channels * channels
    return {"channels": channels, "k": k, "ddr_weights": ddr, "dense_weights": dense, "ratio": dense / ddr}
