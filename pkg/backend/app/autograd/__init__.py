"""
Tensor Core
Dense tensors, reverse-mode autodiff, layers, optimizers and snapshots
"""

from app.autograd.tensor import ComputationTape, Tensor, backward, get_tape, no_grad
from app.autograd.nn import (
    BatchNorm3d,
    Buffer,
    Conv3d,
    ConvTranspose3d,
    GELU,
    LayerNorm,
    Linear,
    Module,
    ModuleList,
    Parameter,
    ReLU,
)

__all__ = [
    "BatchNorm3d",
    "Buffer",
    "ComputationTape",
    "Conv3d",
    "ConvTranspose3d",
    "GELU",
    "LayerNorm",
    "Linear",
    "Module",
    "ModuleList",
    "Parameter",
    "ReLU",
    "Tensor",
    "backward",
    "get_tape",
    "no_grad",
]
