"""
Diffusion Schemas
Noise schedules and denoiser inputs
"""

from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from app.autograd.tensor import Tensor
from app.exceptions import InvariantError, ShapeError


class NoiseSchedule(BaseModel):
    """Variance increments β_1..β_T and their cumulative products"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    betas: np.ndarray
    kind: Literal["linear", "cosine", "custom"] = "custom"

    @field_validator("betas", mode="before")
    @classmethod
    def validate_betas(cls, v):
        """Validate 0 < β < 1"""
        array = np.array(v, dtype=np.float64).reshape(-1)
        if array.size == 0:
            raise InvariantError("schedule needs at least one step")
        bad = np.flatnonzero(~((array > 0) & (array < 1)))
        if bad.size:
            raise InvariantError(f"beta at step {int(bad[0])} is {array[bad[0]]}, outside (0, 1)")
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def validate_monotone(self):
        """Validate a linear schedule is strictly increasing"""
        if self.kind == "linear" and self.betas.size > 1 and np.any(np.diff(self.betas) <= 0):
            raise InvariantError("linear schedule betas must be strictly increasing")
        return self

    @property
    def T(self) -> int:
        return int(self.betas.size)

    @property
    def alphas(self) -> np.ndarray:
        return 1.0 - self.betas

    @property
    def alpha_bars(self) -> np.ndarray:
        return np.cumprod(self.alphas)


class DenoiserInput(BaseModel):
    """Noisy latent, timesteps and the two conditioning volumes"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    x_t: Tensor
    t: np.ndarray
    cond: Tensor
    ssen_logits: Tensor

    @field_validator("t", mode="before")
    @classmethod
    def validate_t(cls, v):
        """Validate timesteps are a per-sample integer vector"""
        return np.array(v, dtype=np.int64).reshape(-1)

    @model_validator(mode="after")
    def validate_spatial(self):
        """Validate every volume shares batch and spatial dims"""
        reference = self.x_t.shape
        for name in ("cond", "ssen_logits"):
            other = getattr(self, name).shape
            if len(other) != 5 or other[0] != reference[0] or other[2:] != reference[2:]:
                raise ShapeError("DenoiserInput", reference, other, detail=name)
        if self.t.size != reference[0]:
            raise ShapeError("DenoiserInput", reference, self.t.shape, detail="one timestep per sample")
        return self
