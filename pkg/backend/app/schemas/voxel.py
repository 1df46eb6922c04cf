"""
Voxel Schemas
Pydantic models for voxel scenes, 2D condition maps and the semantic palette
"""

from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.exceptions import InvariantError


def _frozen_array(values, dtype) -> np.ndarray:
    array = np.array(values, dtype=dtype)
    array.setflags(write=False)
    return array


def _integral(v, what: str) -> np.ndarray:
    array = np.asarray(v)
    if array.dtype.kind not in "iu":
        if array.dtype.kind != "f" or not np.all(np.isfinite(array)) or np.any(array != np.round(array)):
            raise InvariantError(f"{what} must hold integer values")
    if array.size and array.min() < 0:
        index = int(np.argmin(array.reshape(-1)))
        raise InvariantError(f"{what} has negative value at flat index {index}")
    return array


class VoxelGrid(BaseModel):
    """Dense semantic scene: labels[x, y, z] with 0 meaning empty"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    dims: Tuple[int, int, int]
    num_classes: int = Field(..., ge=2)
    labels: np.ndarray

    @field_validator("dims")
    @classmethod
    def validate_dims(cls, v):
        """Validate dims are positive"""
        if any(d <= 0 for d in v):
            raise InvariantError(f"dims must be positive, got {v}")
        return v

    @field_validator("labels", mode="before")
    @classmethod
    def validate_labels(cls, v):
        """Validate labels are non-negative integers"""
        array = _integral(v, "labels")
        if array.size and array.max() > np.iinfo(np.uint16).max:
            raise InvariantError("labels exceed the 16-bit range")
        return _frozen_array(array, np.uint16)

    @model_validator(mode="after")
    def validate_grid(self):
        """Validate label shape and class range"""
        if self.labels.shape != tuple(self.dims):
            raise InvariantError(f"labels shape {self.labels.shape} does not match dims {self.dims}")
        flat = self.labels.reshape(-1)
        bad = np.flatnonzero(flat >= self.num_classes)
        if bad.size:
            index = int(bad[0])
            raise InvariantError(
                f"label {int(flat[index])} at flat index {index} is not below num_classes={self.num_classes}"
            )
        return self

    @classmethod
    def from_flat(cls, dims: Tuple[int, int, int], num_classes: int, flat: np.ndarray) -> "VoxelGrid":
        """Build from labels in storage order (x outermost, z innermost)"""
        flat = np.asarray(flat).reshape(-1)
        if flat.size != int(np.prod(dims)):
            raise InvariantError(f"labels length {flat.size} does not match dims {tuple(dims)}")
        return cls(dims=tuple(dims), num_classes=num_classes, labels=flat.reshape(dims))

    @classmethod
    def empty(cls, dims: Tuple[int, int, int], num_classes: int) -> "VoxelGrid":
        return cls(dims=dims, num_classes=num_classes, labels=np.zeros(dims, dtype=np.uint16))

    @property
    def occupied(self) -> int:
        return int(np.count_nonzero(self.labels))

    def flat(self) -> np.ndarray:
        return self.labels.reshape(-1)

    def class_histogram(self) -> np.ndarray:
        return np.bincount(self.flat(), minlength=self.num_classes)


class ConditionPair(BaseModel):
    """Sketch edge map plus pseudo-labeled annotation map, both L×W"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    sketch: np.ndarray
    psa: np.ndarray
    num_classes: int = Field(..., ge=2)

    @field_validator("sketch", mode="before")
    @classmethod
    def validate_sketch(cls, v):
        """Validate sketch is binary {0, 255}"""
        array = _integral(v, "sketch")
        if array.ndim != 2:
            raise InvariantError(f"sketch must be 2D, got shape {array.shape}")
        bad = np.flatnonzero((array != 0) & (array != 255))
        if bad.size:
            index = int(bad[0])
            raise InvariantError(
                f"sketch value {int(array.reshape(-1)[index])} at flat index {index} is not 0 or 255"
            )
        return _frozen_array(array, np.uint8)

    @field_validator("psa", mode="before")
    @classmethod
    def validate_psa(cls, v):
        """Validate PSA is a 2D class map"""
        array = _integral(v, "psa")
        if array.ndim != 2:
            raise InvariantError(f"psa must be 2D, got shape {array.shape}")
        return _frozen_array(array, np.uint16)

    @model_validator(mode="after")
    def validate_pair(self):
        """Validate matching dims and PSA class range"""
        if self.sketch.shape != self.psa.shape:
            raise InvariantError(
                f"dimension mismatch: sketch {self.sketch.shape} vs psa {self.psa.shape}"
            )
        bad = np.flatnonzero(self.psa.reshape(-1) >= self.num_classes)
        if bad.size:
            index = int(bad[0])
            raise InvariantError(
                f"psa value {int(self.psa.reshape(-1)[index])} at flat index {index} "
                f"is not below num_classes={self.num_classes}"
            )
        return self

    @property
    def shape(self) -> Tuple[int, int]:
        return tuple(self.sketch.shape)


class PaletteEntry(BaseModel):
    """Schema for one semantic class"""
    id: int = Field(..., ge=0)
    name: str = Field(..., min_length=1, max_length=64)
    color: Tuple[int, int, int] = (0, 0, 0)

    @field_validator("color")
    @classmethod
    def validate_color(cls, v):
        """Validate RGB color"""
        if any(c < 0 or c > 255 for c in v):
            raise ValueError("color components must be within 0..255")
        return v


class SemanticPalette(BaseModel):
    """Class ID → (name, display color)"""
    classes: List[PaletteEntry]

    @field_validator("classes")
    @classmethod
    def validate_classes(cls, v):
        """Validate contiguous IDs starting at empty"""
        if not v:
            raise ValueError("palette must define at least one class")
        ids = [entry.id for entry in v]
        if ids != list(range(len(v))):
            raise ValueError(f"palette IDs must be contiguous from 0, got {ids}")
        if v[0].name != "empty":
            raise ValueError("palette ID 0 must be named 'empty'")
        return v

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def names(self) -> List[str]:
        return [entry.name for entry in self.classes]

    def name_of(self, class_id: int) -> str:
        return self.classes[class_id].name
