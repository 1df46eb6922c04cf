import json

import pytest

from app.api.evaluate import condition_scene, matched_pairs
from app.dependencies import EXIT_FAILURE, EXIT_INVALID, EXIT_OK
from app.main import build_parser, main
from app.schemas.voxel import VoxelGrid


@pytest.fixture
def toy_scenes(tmp_path, config_file):
    config = config_file()
    out = tmp_path / "toy"
    assert main(["gen-toy", "--config", str(config), "--count", "2", "--out", str(out)]) == EXIT_OK
    return config, out


def test_command_is_required():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_gen_toy(config_file, tmp_path, capsys):
    out = tmp_path / "generated"
    assert main(["gen-toy", "--config", str(config_file()), "--count", "2", "--out", str(out)]) == EXIT_OK
    assert sorted(p.name for p in out.glob("*.lbl")) == ["toy_0000.lbl", "toy_0001.lbl"]
    assert str(out) in capsys.readouterr().out


def test_make_sketch(toy_scenes, tmp_path):
    config, out = toy_scenes
    target = tmp_path / "sketches"
    assert main(["make-sketch", str(out), "--config", str(config), "--out", str(target)]) == EXIT_OK
    assert (target / "toy_0001.sketch.pgm").is_file()

    (out / "broken.lbl").write_bytes(b"\x00")
    assert main(["make-sketch", str(out), "--config", str(config), "--out", str(target)]) == EXIT_INVALID


def test_info(config_file, capsys):
    assert main(["info", "--config", str(config_file())]) == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert set(payload["parameters"]["networks"]) == {"vae", "ssen", "lmn", "denoiser"}
    assert payload["config"]["DIMS"] == [8, 8, 4]


def test_invalid_config_exits_with_validation_code(config_file, tmp_path):
    assert main(["info", "--config", str(tmp_path / "absent.env")]) == EXIT_INVALID
    assert main(["info", "--config", str(config_file(DIMS=[6, 8, 4]))]) == EXIT_INVALID


def test_missing_checkpoint_is_a_runtime_failure(toy_scenes, tmp_path):
    config, out = toy_scenes
    argv = ["sample", str(out), "--config", str(config), "--checkpoints", str(tmp_path / "none"),
            "--out", str(tmp_path / "samples")]
    assert main(argv) == EXIT_FAILURE


def test_missing_conditions_are_invalid(config_file, tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["sample", str(empty), "--config", str(config_file())]) == EXIT_INVALID


def test_train_and_evaluate(toy_scenes, tmp_path, capsys):
    config, out = toy_scenes
    checkpoints = tmp_path / "checkpoints"
    argv = ["train-vae", "--config", str(config), "--data", str(out), "--out", str(checkpoints), "--epochs", "1"]
    assert main(argv) == EXIT_OK
    assert (checkpoints / "vae.ckpt").is_file()
    capsys.readouterr()

    report_path = tmp_path / "report.json"
    argv = ["evaluate", str(out), str(out), "--config", str(config), "--checkpoints", str(checkpoints),
            "--bandwidth", "1.0", "--reconstruction", "--out", str(report_path)]
    assert main(argv) == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload["fid"] == pytest.approx(0.0, abs=1e-6)
    assert payload["mmd"] == pytest.approx(0.0, abs=1e-12)
    assert payload["bandwidth"] == 1.0
    assert payload["iou"] == 1.0
    assert payload["reconstruction"]["scenes"] == 2
    assert json.loads(report_path.read_text()) == payload


def test_diffusion_before_vae_is_a_runtime_failure(toy_scenes, tmp_path):
    config, out = toy_scenes
    argv = ["train-diffusion", "--config", str(config), "--data", str(out), "--out", str(tmp_path / "c"),
            "--epochs", "1"]
    assert main(argv) == EXIT_FAILURE


def test_ablation_flags_default_off():
    args = build_parser().parse_args(["train-diffusion"])
    assert not (args.ablate_cylinder or args.ablate_cscb or args.ablate_ddcb)


def test_ablate_cscb_writes_its_own_files(toy_scenes, tmp_path):
    config, out = toy_scenes
    checkpoints = tmp_path / "checkpoints"
    common = ["--config", str(config), "--data", str(out), "--out", str(checkpoints), "--epochs", "1"]
    for command in ("train-vae", "train-ssen"):
        assert main([command] + common) == EXIT_OK
    assert main(["train-diffusion", "--ablate-cscb"] + common) == EXIT_OK
    assert (checkpoints / "diffusion_no_cscb.ckpt").is_file()
    assert (checkpoints / "diffusion_no_cscb_loss.csv").is_file()
    assert not (checkpoints / "diffusion.ckpt").exists()


def test_sample_names_pair_with_their_condition():
    assert condition_scene("toy_0003_seed0012") == "toy_0003"
    assert condition_scene("toy_0003") == "toy_0003"
    assert condition_scene("a_seedling") == "a_seedling"
    grid = VoxelGrid.empty((4, 4, 4), 2)
    pairs = matched_pairs([("toy_0001", grid)], [("toy_0001_seed0000", grid), ("other_seed0001", grid)])
    assert len(pairs) == 1
