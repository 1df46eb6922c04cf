import json

import pytest

from app.exceptions import CheckpointError, FormatError
from app.services.checkpoints import CheckpointService
from app.services.sampling import MANIFEST_NAME, SamplingService, resolve_conditions
from app.utils.voxel_io import read_voxel_labels


class TestResolveConditions:
    def test_directory(self, toy_dir):
        triples = resolve_conditions([toy_dir])
        assert [name for name, _, _ in triples] == ["toy_0000", "toy_0001", "toy_0002"]
        name, sketch, psa = triples[1]
        assert sketch == toy_dir / "toy_0001.sketch.pgm"
        assert psa == toy_dir / "toy_0001.psa.pgm"

    def test_single_sketch(self, toy_dir):
        assert len(resolve_conditions([toy_dir / "toy_0002.sketch.pgm"])) == 1

    def test_missing_psa(self, toy_dir):
        (toy_dir / "toy_0000.psa.pgm").unlink()
        with pytest.raises(FormatError, match="toy_0000"):
            resolve_conditions([toy_dir])

    def test_not_a_sketch(self, toy_dir):
        with pytest.raises(FormatError):
            resolve_conditions([toy_dir / "toy_0000.lbl"])

    def test_nothing_found(self, tmp_path):
        with pytest.raises(FormatError):
            resolve_conditions([tmp_path])


class TestSamplingService:
    def test_one_scene_per_condition_and_seed(self, trained_config, tmp_path):
        conditions = resolve_conditions([trained_config.DATA_DIR])[:2]
        records = SamplingService(trained_config).sample(conditions, [0, 7], out_dir=tmp_path)

        assert len(records) == 4
        assert (tmp_path / "toy_0001_seed0007.lbl").is_file()
        lines = (tmp_path / MANIFEST_NAME).read_text().splitlines()
        entries = [json.loads(line) for line in lines]
        assert [e["seed"] for e in entries] == [0, 7, 0, 7]
        digest = CheckpointService(trained_config).digest("diffusion")
        assert {e["checkpoint_hash"] for e in entries} == {digest}
        grid = read_voxel_labels(tmp_path / "toy_0000_seed0000.lbl", trained_config.dims, trained_config.NUM_CLASSES)
        assert grid.dims == trained_config.dims

    def test_deterministic_per_seed(self, trained_config, tmp_path):
        conditions = resolve_conditions([trained_config.DATA_DIR / "toy_0000.sketch.pgm"])
        service = SamplingService(trained_config)
        service.sample(conditions, [3], out_dir=tmp_path / "a")
        SamplingService(trained_config).sample(conditions, [3], out_dir=tmp_path / "b")
        first = (tmp_path / "a" / "toy_0000_seed0003.lbl").read_bytes()
        assert first == (tmp_path / "b" / "toy_0000_seed0003.lbl").read_bytes()

    def test_missing_checkpoints(self, tiny_config, toy_dir):
        with pytest.raises(CheckpointError, match="sampling"):
            SamplingService(tiny_config).sample(resolve_conditions([toy_dir]), [0])
