"""
Desk-scale pipeline
Toy data through all three training stages, sampling and evaluation
"""

import json
import math

import pytest

from app.main import main


@pytest.mark.slow
def test_toy_pipeline(tmp_path, config_file, capsys):
    config = str(config_file(DIMS=[16, 16, 8], TOY_SCENES=6, TIMESTEPS=20, EPOCHS_VAE=3, EPOCHS_SSEN=3,
                             EPOCHS_DIFFUSION=3, VAE_WIDTHS=[4, 8], STAGE_WIDTHS=[8, 12]))
    data, checkpoints, samples = tmp_path / "data", tmp_path / "checkpoints", tmp_path / "samples"
    common = ["--config", config, "--data", str(data), "--out", str(checkpoints)]

    assert main(["gen-toy", "--config", config, "--out", str(data)]) == 0
    for command in ("train-vae", "train-ssen", "train-diffusion"):
        assert main([command, *common]) == 0
    assert main(["sample", str(data), "--config", config, "--checkpoints", str(checkpoints),
                 "--seeds", "0", "1", "--out", str(samples)]) == 0
    assert len((samples / "manifest.jsonl").read_text().splitlines()) == 12
    # same condition, different seeds
    assert (samples / "toy_0000_seed0000.lbl").read_bytes() != (samples / "toy_0000_seed0001.lbl").read_bytes()
    capsys.readouterr()

    assert main(["evaluate", str(data), str(samples), "--config", config, "--checkpoints", str(checkpoints)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert math.isfinite(report["fid"]) and report["fid"] >= 0
    assert math.isfinite(report["mmd"]) and report["mmd"] >= 0
    assert 0.0 <= report["miou"] <= 1.0
