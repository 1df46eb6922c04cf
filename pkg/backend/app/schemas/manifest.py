"""
Manifest Schemas
Records written next to training and sampling outputs
"""

from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field


class SampleRecord(BaseModel):
    """One JSON-lines manifest entry per generated scene"""
    seed: int
    sketch_path: str
    psa_path: str
    output_path: str
    checkpoint_hash: str = Field(..., min_length=64, max_length=64)


class LossRow(BaseModel):
    """One CSV row of a training log"""
    epoch: int = Field(..., ge=1)
    values: Dict[str, float]


class CheckpointMetadata(BaseModel):
    """Manifest metadata stored inside every stage checkpoint"""
    stage: Literal["vae", "ssen", "diffusion"]
    epoch: int = Field(..., ge=0)
    total_epochs: int = Field(..., ge=0)
    config: Dict[str, Any]
    latent_scale: Optional[float] = None
    use_cylinder: Optional[bool] = None
    use_cscb: Optional[bool] = None
    use_ddcb: Optional[bool] = None
    history: List[Dict[str, float]] = Field(default_factory=list)
