import numpy as np
import pytest

from app.exceptions import FormatError
from app.schemas.voxel import VoxelGrid
from app.services.dataset import DatasetService, role_class
from app.utils.voxel_io import read_pgm, write_voxel_labels


def test_role_classes_wrap():
    assert role_class("ground", 8) == 1
    assert role_class("pole", 8) == 7
    assert role_class("building", 4) == 1
    assert role_class("sidewalk", 4) == 3


class TestToyScenes:
    def test_deterministic(self, tiny_config):
        service = DatasetService(tiny_config)
        np.testing.assert_array_equal(service.toy_scene(5, 0).labels, service.toy_scene(5, 0).labels)
        assert not np.array_equal(service.toy_scene(5, 0).labels, service.toy_scene(5, 1).labels)

    def test_ground_layer_is_filled(self, tiny_config):
        grid = DatasetService(tiny_config).toy_scene(0, 2)
        assert grid.dims == tuple(tiny_config.DIMS)
        assert np.all(grid.labels[:, :, 0] > 0)
        assert grid.labels.max() < tiny_config.NUM_CLASSES

    def test_full_palette_has_ground_and_road(self, tiny_config):
        config = tiny_config.model_copy(update={"DIMS": [32, 32, 8], "NUM_CLASSES": 8})
        grid = DatasetService(config).toy_scene(0, 0)
        present = set(np.unique(grid.labels).tolist())
        assert {1, 2} <= present

    def test_generate_writes_all_files(self, toy_dir, tiny_config):
        names = sorted(p.name for p in toy_dir.iterdir())
        assert len(names) == 4 * tiny_config.TOY_SCENES
        assert "toy_0000.lbl" in names
        assert "toy_0002.sketch.pgm" in names
        assert "toy_0001.psa.pgm" in names
        assert "toy_0000.txt" in names


class TestMakeSketches:
    def test_failures_do_not_stop_the_batch(self, tiny_config, tmp_path, random_grid):
        labels = tmp_path / "labels"
        labels.mkdir()
        write_voxel_labels(labels / "good.lbl", random_grid())
        (labels / "broken.lbl").write_bytes(b"\x00\x01\x02")
        out = tmp_path / "conditions"

        failures = DatasetService(tiny_config).make_sketches(labels, out)

        assert list(failures) == ["broken"]
        assert "expected" in failures["broken"]
        assert read_pgm(out / "good.sketch.pgm").shape == (8, 8)
        assert (out / "good.psa.pgm").is_file()
        assert (out / "good.txt").is_file()
        assert not (out / "broken.sketch.pgm").exists()


class TestLoading:
    def test_load_scenes_in_name_order(self, toy_dir, tiny_config):
        scenes = DatasetService(tiny_config).load_scenes(toy_dir)
        assert [s.name for s in scenes] == ["toy_0000", "toy_0001", "toy_0002"]
        assert len(DatasetService(tiny_config).load_scenes(toy_dir, limit=2)) == 2

    def test_conditions_round_trip(self, toy_dir, tiny_config):
        service = DatasetService(tiny_config)
        scene = service.load_scenes(toy_dir)[0]
        expected = service.condition_for(scene.grid)
        np.testing.assert_array_equal(scene.condition.sketch, expected.sketch)
        np.testing.assert_array_equal(scene.condition.psa, expected.psa)

    def test_missing_conditions_are_synthesized(self, toy_dir, tiny_config):
        (toy_dir / "toy_0001.sketch.pgm").unlink()
        service = DatasetService(tiny_config)
        scene = service.load_scenes(toy_dir)[1]
        np.testing.assert_array_equal(scene.condition.sketch, service.condition_for(scene.grid).sketch)

    def test_empty_directory(self, tiny_config, tmp_path):
        with pytest.raises(FormatError):
            DatasetService(tiny_config).load_scenes(tmp_path)
        with pytest.raises(FormatError):
            DatasetService(tiny_config).load_grids(tmp_path)

    def test_load_grids(self, toy_dir, tiny_config):
        grids = DatasetService(tiny_config).load_grids(toy_dir)
        assert len(grids) == 3
        assert all(isinstance(g, VoxelGrid) for g in grids)
