"""
Models Package
Network modules built on the tensor core
"""

from app.models.conv_blocks import Cscb, Ddcb, DdrBlock, DdrConv, MultiScaleBlock
from app.models.denoiser import ConditionedDenoiser, Denoiser, TimeEmbedding
from app.models.mamba import CylinderMambaBlock, TripleScanLayer
from app.models.ssen import Ssen
from app.models.ssm import SelectiveSsm
from app.models.vae import LatentMappingNetwork, Vae, VaeDecoder, VaeEncoder

__all__ = [
    "ConditionedDenoiser",
    "Cscb",
    "CylinderMambaBlock",
    "Ddcb",
    "DdrBlock",
    "DdrConv",
    "Denoiser",
    "LatentMappingNetwork",
    "MultiScaleBlock",
    "SelectiveSsm",
    "Ssen",
    "TimeEmbedding",
    "TripleScanLayer",
    "Vae",
    "VaeDecoder",
    "VaeEncoder",
]
