"""
Metric Schemas
Feature sets, Gaussian summaries and evaluation reports
"""

from typing import Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.exceptions import InvariantError


class FeatureSet(BaseModel):
    """m feature vectors of dimension d (one per scene)"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    features: np.ndarray

    @field_validator("features", mode="before")
    @classmethod
    def validate_features(cls, v):
        """Validate a non-empty finite (m, d) matrix"""
        array = np.array(v, dtype=np.float64)
        if array.ndim == 1:
            array = array.reshape(1, -1)
        if array.ndim != 2 or array.shape[0] == 0 or array.shape[1] == 0:
            raise InvariantError(f"feature set must be a non-empty (m, d) matrix, got {array.shape}")
        if not np.all(np.isfinite(array)):
            raise InvariantError("feature set contains non-finite entries")
        array.setflags(write=False)
        return array

    @property
    def m(self) -> int:
        return int(self.features.shape[0])

    @property
    def d(self) -> int:
        return int(self.features.shape[1])


class GaussianSummary(BaseModel):
    """Mean vector and symmetric PSD covariance"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    mean: np.ndarray
    cov: np.ndarray

    @model_validator(mode="before")
    @classmethod
    def coerce(cls, data):
        if isinstance(data, dict):
            data = dict(data)
            data["mean"] = np.array(data.get("mean"), dtype=np.float64).reshape(-1)
            data["cov"] = np.atleast_2d(np.array(data.get("cov"), dtype=np.float64))
        return data

    @model_validator(mode="after")
    def validate_summary(self):
        """Validate covariance symmetry and eigenvalue floor"""
        d = self.mean.size
        if self.cov.shape != (d, d):
            raise InvariantError(f"covariance shape {self.cov.shape} does not match mean dim {d}")
        if np.max(np.abs(self.cov - self.cov.T), initial=0.0) > 1e-10:
            raise InvariantError("covariance is not symmetric to 1e-10")
        smallest = float(np.linalg.eigvalsh(self.cov).min())
        if smallest < -1e-8:
            raise InvariantError(f"covariance has eigenvalue {smallest:.3e} below -1e-8")
        return self


class IoUResult(BaseModel):
    """Occupancy IoU, per-class IoU (None where a class is absent) and mIoU"""
    iou: float
    per_class_iou: List[Optional[float]]
    miou: float


class MetricReport(BaseModel):
    """Schema for the evaluate command's JSON report"""
    fid: float
    mmd: float
    iou: Optional[float] = None
    miou: Optional[float] = None
    per_class_iou: List[Optional[float]] = Field(default_factory=list)
    m: int
    d: int
    bandwidth: float


class ReconstructionReport(BaseModel):
    """VAE reconstruction quality over a directory of scenes"""
    scenes: int
    iou: float
    miou: float
    per_class_iou: List[Optional[float]]


class ParameterReport(BaseModel):
    """Parameter counts per network and for the DDR-vs-dense comparison"""
    networks: Dict[str, int]
    ddr_vs_dense: Dict[str, Union[int, float]]
