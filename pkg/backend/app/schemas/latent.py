"""
Latent Schemas
VAE latent volumes and loss weights
"""

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.autograd.tensor import Tensor
from app.exceptions import ShapeError


class LatentVolume(BaseModel):
    """Posterior mean and log-variance, each (B, c_z, L/4, W/4, H/4)"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    mean: Tensor
    logvar: Tensor

    @model_validator(mode="after")
    def validate_shapes(self):
        """Validate mean and logvar agree"""
        if self.mean.ndim != 5 or self.mean.shape != self.logvar.shape:
            raise ShapeError("LatentVolume", self.mean.shape, self.logvar.shape)
        return self

    @property
    def channels(self) -> int:
        return self.mean.shape[1]

    @property
    def spatial(self):
        return self.mean.shape[2:]


class VaeLossWeights(BaseModel):
    """Lovász weight γ and KL weight β"""
    gamma: float = Field(default=1.0, ge=0)
    beta: float = Field(default=0.001, ge=0)
