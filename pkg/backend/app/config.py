"""
CymbaDiff Configuration
Process settings from the environment and run settings from key=value config files
"""

from pathlib import Path
from typing import List, Literal, Optional, Tuple
import logging

from pydantic import ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.exceptions import ConfigError


class Settings(BaseSettings):
    """Application settings"""

    # Environment
    ENVIRONMENT: str = "development"
    DEBUG: bool = False

    PROJECT_NAME: str = "CymbaDiff"

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    # Monitoring
    SENTRY_DSN: Optional[str] = None

    class Config:
        env_file = ".env"
        case_sensitive = True
        extra = "ignore"


class RunConfig(BaseSettings):
    """
    Settings for one pipeline run.

    Loaded from a dotenv-style file given with ``--config``; list values are
    written as JSON (``DIMS=[64,64,8]``). Keyword overrides from CLI flags win
    over the environment, which wins over the file.
    """

    model_config = SettingsConfigDict(case_sensitive=True, extra="forbid")

    # Scene
    DIMS: List[int] = [64, 64, 8]
    NUM_CLASSES: int = 8
    PALETTE_PATH: Optional[Path] = None

    # Networks
    LATENT_CHANNELS: int = 4
    VAE_WIDTHS: List[int] = [8, 16]
    SSEN_WIDTH: int = 16
    STAGE_WIDTHS: List[int] = [32, 64, 128]
    BLOCKS_PER_STAGE: int = 2
    STATE_DIM: int = 16
    USE_CYLINDER: bool = True
    USE_CSCB: bool = True
    USE_DDCB: bool = True
    SCAN_PRIORITY: Literal["z_theta_r", "z_r_theta"] = "z_theta_r"
    LAYER_NORM_EPS: float = 1e-5

    # Diffusion
    SCHEDULE: Literal["linear", "cosine"] = "linear"
    TIMESTEPS: int = 100
    BETA_START: float = 1e-4
    BETA_END: float = 2e-2

    # Training
    SEED: int = 0
    EPOCHS_VAE: int = 30
    EPOCHS_SSEN: int = 30
    EPOCHS_DIFFUSION: int = 50
    BATCH_SIZE: int = 2
    LR_VAE: float = 3e-4
    LR_SSEN: float = 1e-3
    LR_DIFFUSION: float = 1e-3
    WEIGHT_DECAY: float = 1e-4
    WARMUP_EPOCHS: int = 2
    LOVASZ_WEIGHT: float = 1.0
    KL_WEIGHT: float = 0.001

    # Sketch synthesis
    CANNY_LOW: float = 50.0
    CANNY_HIGH: float = 100.0

    # Paths
    DATA_DIR: Path = Path("data")
    CHECKPOINT_DIR: Path = Path("checkpoints")
    OUTPUT_DIR: Path = Path("outputs")

    TOY_SCENES: int = 16

    @field_validator("DIMS")
    @classmethod
    def validate_dims(cls, v):
        """Validate scene dims"""
        if len(v) != 3:
            raise ValueError("DIMS must list exactly three extents (L, W, H)")
        if any(d <= 0 or d % 4 for d in v):
            raise ValueError(f"DIMS {v} must be positive and divisible by 4")
        return v

    @field_validator("NUM_CLASSES")
    @classmethod
    def validate_num_classes(cls, v):
        """Validate class count"""
        if v < 2 or v > 65535:
            raise ValueError("NUM_CLASSES must be between 2 and 65535")
        return v

    @field_validator("VAE_WIDTHS")
    @classmethod
    def validate_vae_widths(cls, v):
        """Validate VAE widths (one per 2x downsampling block)"""
        if len(v) != 2 or min(v) < 1:
            raise ValueError("VAE_WIDTHS must hold two positive widths")
        return v

    @field_validator("STAGE_WIDTHS")
    @classmethod
    def validate_stage_widths(cls, v):
        """Validate denoiser stage widths"""
        if not v or min(v) < 1:
            raise ValueError("STAGE_WIDTHS must hold at least one positive width")
        return v

    @field_validator(
        "LATENT_CHANNELS", "SSEN_WIDTH", "STATE_DIM", "TIMESTEPS", "BATCH_SIZE", "TOY_SCENES"
    )
    @classmethod
    def validate_positive(cls, v):
        """Validate strictly positive integers"""
        if v < 1:
            raise ValueError("value must be at least 1")
        return v

    @field_validator(
        "BLOCKS_PER_STAGE", "EPOCHS_VAE", "EPOCHS_SSEN", "EPOCHS_DIFFUSION",
        "WARMUP_EPOCHS", "LOVASZ_WEIGHT", "KL_WEIGHT", "WEIGHT_DECAY",
    )
    @classmethod
    def validate_non_negative(cls, v):
        """Validate non-negative values"""
        if v < 0:
            raise ValueError("value must be non-negative")
        return v

    @model_validator(mode="after")
    def validate_ranges(self):
        """Validate cross-field ranges"""
        if not 0 <= self.CANNY_LOW <= self.CANNY_HIGH:
            raise ValueError("Canny thresholds must satisfy CANNY_HIGH >= CANNY_LOW >= 0")
        if not 0 < self.BETA_START <= self.BETA_END < 1:
            raise ValueError("Betas must satisfy 0 < BETA_START <= BETA_END < 1")
        for name in ("LR_VAE", "LR_SSEN", "LR_DIFFUSION", "LAYER_NORM_EPS"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        return self

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(self.DIMS)

    @property
    def latent_dims(self) -> Tuple[int, int, int]:
        return tuple(d // 4 for d in self.DIMS)


def load_run_config(path: Optional[Path] = None, **overrides) -> RunConfig:
    """Load a RunConfig, folding pydantic validation failures into ConfigError"""
    if path is not None and not Path(path).is_file():
        raise ConfigError(f"Config file not found: {path}")
    overrides = {k: v for k, v in overrides.items() if v is not None}
    try:
        return RunConfig(_env_file=path, **overrides)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in e.errors()
        )
        raise ConfigError(f"Invalid run configuration: {problems}") from None


# Create settings instance
settings = Settings()


# Validation
def validate_settings():
    """Validate critical settings"""
    if not isinstance(logging.getLevelName(settings.LOG_LEVEL.upper()), int):
        raise ValueError(f"Unknown LOG_LEVEL: {settings.LOG_LEVEL}")

    if settings.ENVIRONMENT == "production" and settings.DEBUG:
        raise ValueError("DEBUG must be disabled in production")


# Run validation
validate_settings()
