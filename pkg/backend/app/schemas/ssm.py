"""
State-Space Schemas
Continuous and discretized diagonal state-space parameters
"""

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from app.exceptions import InvariantError


def _as_array(v) -> np.ndarray:
    array = np.array(v, dtype=np.float64)
    array.setflags(write=False)
    return array


class SsmParams(BaseModel):
    """
    Diagonal continuous SSM.

    A holds the N diagonal entries. B and C are (N,) for a time-invariant
    system or (T, N) for a selective one; delta is a scalar or (T,).
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    delta: np.ndarray

    @field_validator("A", "B", "C", "delta", mode="before")
    @classmethod
    def coerce_arrays(cls, v):
        return _as_array(v)

    @model_validator(mode="after")
    def validate_params(self):
        """Validate state size, finiteness and step positivity"""
        if self.A.ndim != 1 or self.A.size == 0:
            raise InvariantError(f"A must be a non-empty diagonal vector, got shape {self.A.shape}")
        bad = np.flatnonzero(~np.isfinite(self.A))
        if bad.size:
            raise InvariantError(f"A diagonal entry {int(bad[0])} is not finite")
        n = self.A.size
        for name in ("B", "C"):
            value = getattr(self, name)
            if value.ndim not in (1, 2) or value.shape[-1] != n:
                raise InvariantError(f"{name} must have trailing extent N={n}, got shape {value.shape}")
        if self.delta.ndim > 1:
            raise InvariantError(f"delta must be a scalar or per-step vector, got shape {self.delta.shape}")
        if np.any(~(self.delta > 0)):
            raise InvariantError("delta must be strictly positive")
        return self

    @property
    def state_dim(self) -> int:
        return int(self.A.size)


class DiscreteSsm(BaseModel):
    """Zero-order-hold discretization: (Ā, B̄, C̄) with C̄ = C"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    A_bar: np.ndarray
    B_bar: np.ndarray
    C_bar: np.ndarray

    @field_validator("A_bar", "B_bar", "C_bar", mode="before")
    @classmethod
    def coerce_arrays(cls, v):
        return _as_array(v)

    @model_validator(mode="after")
    def validate_discrete(self):
        """Validate trailing state extents agree"""
        n = self.A_bar.shape[-1] if self.A_bar.ndim else 0
        for name in ("B_bar", "C_bar"):
            value = getattr(self, name)
            if value.ndim == 0 or value.shape[-1] != n:
                raise InvariantError(f"{name} trailing extent {value.shape} does not match N={n}")
        return self

    @property
    def state_dim(self) -> int:
        return int(self.A_bar.shape[-1])
