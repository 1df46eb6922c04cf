"""
Test fixtures
Seeded generators, tiny run configs and scene directories
"""

import json

import numpy as np
import pytest

from app.config import RunConfig
from app.schemas.voxel import VoxelGrid
from app.services.dataset import DatasetService
from app.services.training import TrainingService


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run desk-scale training tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


TINY_SETTINGS = dict(
    DIMS=[8, 8, 4],
    NUM_CLASSES=4,
    LATENT_CHANNELS=2,
    VAE_WIDTHS=[2, 3],
    SSEN_WIDTH=2,
    STAGE_WIDTHS=[4, 6],
    BLOCKS_PER_STAGE=1,
    STATE_DIM=2,
    TIMESTEPS=5,
    EPOCHS_VAE=2,
    EPOCHS_SSEN=2,
    EPOCHS_DIFFUSION=2,
    BATCH_SIZE=2,
    WARMUP_EPOCHS=1,
    TOY_SCENES=3,
)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config(tmp_path):
    """Smallest config that still exercises two denoiser stages"""
    return RunConfig(
        **TINY_SETTINGS,
        DATA_DIR=tmp_path / "data",
        CHECKPOINT_DIR=tmp_path / "checkpoints",
        OUTPUT_DIR=tmp_path / "outputs",
    )


@pytest.fixture
def toy_dir(tiny_config):
    """Seeded toy scenes with sketches, PSAs and keywords in DATA_DIR"""
    DatasetService(tiny_config).generate_toy(tiny_config.DATA_DIR, tiny_config.TOY_SCENES, tiny_config.SEED)
    return tiny_config.DATA_DIR


@pytest.fixture
def random_grid(rng):
    def make(dims=(8, 8, 4), num_classes=4):
        return VoxelGrid(dims=dims, num_classes=num_classes, labels=rng.integers(0, num_classes, size=dims))
    return make


@pytest.fixture(scope="module")
def trained_config(tmp_path_factory):
    """Tiny config with one epoch of every training stage already on disk"""
    root = tmp_path_factory.mktemp("trained")
    config = RunConfig(
        **TINY_SETTINGS,
        DATA_DIR=root / "data",
        CHECKPOINT_DIR=root / "checkpoints",
        OUTPUT_DIR=root / "outputs",
    )
    DatasetService(config).generate_toy(config.DATA_DIR, config.TOY_SCENES, config.SEED)
    service = TrainingService(config)
    service.train_vae(epochs=1)
    service.train_ssen(epochs=1)
    service.train_diffusion(epochs=1)
    return config


@pytest.fixture
def config_file(tmp_path):
    """Writes the tiny settings, plus overrides, as a dotenv run config"""
    def write(**overrides):
        values = {**TINY_SETTINGS, **overrides}
        path = tmp_path / "run.env"
        path.write_text("".join(f"{k}={json.dumps(v, separators=(',', ':'))}\n" for k, v in values.items()))
        return path
    return write
