"""
Scan Schemas
Pydantic models for voxel linearizations and scan directions
"""

from typing import Literal, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.exceptions import InvariantError


class ScanOrder(BaseModel):
    """Bijective map from sequence position to flat voxel index"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    dims: Tuple[int, int, int]
    perm: np.ndarray
    inverse_perm: np.ndarray
    kind: str = "custom"

    @field_validator("perm", "inverse_perm", mode="before")
    @classmethod
    def validate_index_array(cls, v):
        """Validate index arrays are 1D integer vectors"""
        array = np.array(v, dtype=np.int64).reshape(-1)
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def validate_bijection(self):
        """Validate perm is a bijection and inverse_perm is its inverse"""
        size = int(np.prod(self.dims))
        if self.perm.shape != (size,) or not np.array_equal(np.sort(self.perm), np.arange(size)):
            raise InvariantError(f"perm is not a permutation of [0, {size})")
        if not np.array_equal(self.inverse_perm[self.perm], np.arange(size)):
            raise InvariantError("inverse_perm is not the inverse of perm")
        return self

    @classmethod
    def from_perm(cls, dims: Tuple[int, int, int], perm: np.ndarray, kind: str = "custom") -> "ScanOrder":
        perm = np.asarray(perm, dtype=np.int64)
        return cls(dims=tuple(dims), perm=perm, inverse_perm=np.argsort(perm), kind=kind)

    @property
    def size(self) -> int:
        return int(self.perm.size)


class ScanDirection(BaseModel):
    """forward, backward, or inter_slice with a seed for the slice shuffle"""
    model_config = ConfigDict(frozen=True)

    kind: Literal["forward", "backward", "inter_slice"] = "forward"
    seed: int = Field(default=0, ge=0)

    @classmethod
    def forward(cls) -> "ScanDirection":
        return cls(kind="forward")

    @classmethod
    def backward(cls) -> "ScanDirection":
        return cls(kind="backward")

    @classmethod
    def inter_slice(cls, seed: int = 0) -> "ScanDirection":
        return cls(kind="inter_slice", seed=seed)
