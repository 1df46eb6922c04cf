"""
Mamba Layers
Triple-direction scan layers and the cylinder mamba block
"""

from typing import List, Optional
import logging

import numpy as np

from app.autograd import functional as F
from app.autograd.nn import GELU, LayerNorm, Linear, Module
from app.autograd.tensor import Tensor
from app.exceptions import ShapeError
from app.models.ssm import SelectiveSsm
from app.schemas.scan import ScanDirection, ScanOrder
from app.services.scan_order import apply_order, inter_slice_seed, restore_order

logger = logging.getLogger(__name__)


def volume_to_tokens(x: Tensor) -> Tensor:
    """(B, C, L, W, H) → (B, L·W·H, C) in storage order"""
    batch, channels = x.shape[:2]
    return F.transpose(F.reshape(x, (batch, channels, -1)), (0, 2, 1))


def tokens_to_volume(tokens: Tensor, spatial) -> Tensor:
    batch, _, channels = tokens.shape
    return F.reshape(F.transpose(tokens, (0, 2, 1)), (batch, channels) + tuple(spatial))


class Mlp(Module):
    """Two stacked linear maps with GELU"""

    def __init__(self, channels: int, rng: np.random.Generator, expansion: int = 2):
        self.fc1 = Linear(channels, channels * expansion, rng)
        self.act = GELU()
        self.fc2 = Linear(channels * expansion, channels, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(self.act(self.fc1(x)))


class TripleScanLayer(Module):
    """
    Three directional scans over one linearization.

    z = LN(f) + f; ψ = z + ψᶠ + ψᵇ + ψᵘ where each ψ is routed into scan
    order, scanned, and routed back; output = MLP(LN(ψ)) + ψ. With a
    Cartesian order this is the Triple Mamba layer, with the cylinder order
    the C-Mamba layer.
    """

    def __init__(
        self,
        channels: int,
        state_dim: int,
        order: ScanOrder,
        rng: np.random.Generator,
        layer_index: int = 0,
        eps: float = 1e-5,
    ):
        self.channels = channels
        self.norm_in = LayerNorm(channels, eps)
        self.scan_forward = SelectiveSsm(channels, state_dim, rng)
        self.scan_backward = SelectiveSsm(channels, state_dim, rng)
        self.scan_slices = SelectiveSsm(channels, state_dim, rng)
        self.norm_out = LayerNorm(channels, eps)
        self.mlp = Mlp(channels, rng)
        self._order = order
        self._layer_index = layer_index
        self._epoch: Optional[int] = None

    @property
    def order(self) -> ScanOrder:
        return self._order

    def set_epoch(self, epoch: Optional[int]) -> None:
        self._epoch = epoch

    def directions(self) -> List[ScanDirection]:
        seed = 0
        if self.training and self._epoch is not None:
            seed = inter_slice_seed(self._layer_index, self._epoch)
        return [ScanDirection.forward(), ScanDirection.backward(), ScanDirection.inter_slice(seed)]

    def scan_sum(self, z: Tensor) -> Tensor:
        """Sum of the three directional scans, in storage order"""
        total = None
        scans = (self.scan_forward, self.scan_backward, self.scan_slices)
        for ssm, direction in zip(scans, self.directions()):
            routed = apply_order(z, self._order, direction, axis=1)
            out = restore_order(ssm(routed), self._order, direction, axis=1)
            total = out if total is None else total + out
        return total

    def forward(self, f: Tensor) -> Tensor:
        if f.ndim != 3 or f.shape[1] != self._order.size or f.shape[2] != self.channels:
            raise ShapeError("triple_scan_layer", f.shape, ("B", self._order.size, self.channels))
        z = self.norm_in(f) + f
        psi = z + self.scan_sum(z)
        return self.mlp(self.norm_out(psi)) + psi


class CylinderMambaBlock(Module):
    """
    Triple Mamba branch (Cartesian order) plus C-Mamba branch (cylinder order).

    Both branches read the same (B, C, L, W, H) volume and emit tensors in
    Cartesian storage order; their outputs are summed. ``use_cylinder=False``
    keeps the Triple Mamba branch only.
    """

    def __init__(
        self,
        channels: int,
        state_dim: int,
        cartesian: ScanOrder,
        cylinder: ScanOrder,
        rng: np.random.Generator,
        layer_index: int = 0,
        eps: float = 1e-5,
        use_cylinder: bool = True,
    ):
        if cartesian.dims != cylinder.dims:
            raise ShapeError("cylinder_mamba_block", cartesian.dims, cylinder.dims)
        self.triple = TripleScanLayer(channels, state_dim, cartesian, rng, 2 * layer_index, eps)
        self.cylinder = (
            TripleScanLayer(channels, state_dim, cylinder, rng, 2 * layer_index + 1, eps)
            if use_cylinder else None
        )
        self._spatial = cartesian.dims

    @property
    def use_cylinder(self) -> bool:
        return self.cylinder is not None

    def set_epoch(self, epoch: Optional[int]) -> None:
        self.triple.set_epoch(epoch)
        if self.cylinder is not None:
            self.cylinder.set_epoch(epoch)

    def fuse(self, f_tmb: Tensor, f_cmb: Tensor) -> Tensor:
        """Token-level fusion of the two branches, each on its own input"""
        if f_tmb.shape != f_cmb.shape:
            raise ShapeError("cylinder_mamba_block", f_tmb.shape, f_cmb.shape)
        out = self.triple(f_tmb)
        if self.cylinder is not None:
            out = out + self.cylinder(f_cmb)
        return out

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 5 or tuple(x.shape[2:]) != tuple(self._spatial):
            raise ShapeError("cylinder_mamba_block", x.shape, ("B", "C") + tuple(self._spatial))
        tokens = volume_to_tokens(x)
        return tokens_to_volume(self.fuse(tokens, tokens), self._spatial)
