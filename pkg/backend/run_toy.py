#!/usr/bin/env python3
"""
Toy Pipeline Runner
Quick script to run every CymbaDiff stage on a small procedural dataset
"""

import sys
from pathlib import Path

from app.main import main

WORKDIR = Path("toy_run")

TOY_CONFIG = {
    "DIMS": "[16,16,8]",
    "NUM_CLASSES": "8",
    "TOY_SCENES": "8",
    "VAE_WIDTHS": "[4,8]",
    "SSEN_WIDTH": "4",
    "STAGE_WIDTHS": "[8,12]",
    "BLOCKS_PER_STAGE": "1",
    "STATE_DIM": "4",
    "TIMESTEPS": "50",
    "EPOCHS_VAE": "5",
    "EPOCHS_SSEN": "5",
    "EPOCHS_DIFFUSION": "5",
}


def write_config() -> Path:
    """Write the toy run config next to the outputs"""
    WORKDIR.mkdir(exist_ok=True)
    path = WORKDIR / "toy.env"
    path.write_text("".join(f"{key}={value}\n" for key, value in TOY_CONFIG.items()))
    print(f"✅ Run config written to {path}")
    return path


def run_step(title: str, argv) -> bool:
    print(f"🔄 {title}...")
    code = main(argv)
    if code != 0:
        print(f"❌ {title} failed with exit code {code}")
        return False
    print(f"✅ {title} done")
    return True


def run():
    """Generate toy data, train all stages, sample and evaluate"""
    print("🚀 CymbaDiff Toy Pipeline")
    print("=" * 40)

    config = str(write_config())
    data = str(WORKDIR / "data")
    checkpoints = str(WORKDIR / "checkpoints")
    samples = str(WORKDIR / "samples")
    stage_flags = ["--config", config, "--data", data, "--out", checkpoints]

    steps = [
        ("Generating toy scenes", ["gen-toy", "--config", config, "--out", data]),
        ("Training VAE", ["train-vae", *stage_flags]),
        ("Training SSEN", ["train-ssen", *stage_flags]),
        ("Training diffusion", ["train-diffusion", *stage_flags]),
        ("Sampling", ["sample", data, "--config", config, "--checkpoints", checkpoints,
                      "--seeds", "0", "1", "--out", samples]),
        ("Evaluating", ["evaluate", data, samples, "--config", config, "--checkpoints", checkpoints,
                        "--reconstruction", "--out", str(WORKDIR / "report.json")]),
    ]
    for title, argv in steps:
        if not run_step(title, argv):
            return 1

    print("=" * 40)
    print(f"📊 Metric report: {WORKDIR / 'report.json'}")
    return 0


if __name__ == "__main__":
    sys.exit(run())
