import numpy as np
import pytest

from app.exceptions import InvariantError, ShapeError
from app.schemas.voxel import VoxelGrid
from app.services.voxel_ops import (
    bev_project,
    bev_to_grayscale,
    canny_sketch,
    lift_condition,
    majority_pool,
    make_condition_pair,
    one_hot,
)


def block_scene(num_classes=4):
    labels = np.zeros((16, 16, 4), dtype=np.int64)
    labels[:, :, 0] = 1
    labels[4:12, 4:12, 1:3] = num_classes - 1
    return VoxelGrid(dims=(16, 16, 4), num_classes=num_classes, labels=labels)


class TestBev:
    def test_top_most_label_wins(self):
        labels = np.zeros((2, 1, 3), dtype=np.int64)
        labels[0, 0] = [1, 2, 0]
        labels[1, 0] = [0, 0, 0]
        grid = VoxelGrid(dims=(2, 1, 3), num_classes=3, labels=labels)
        assert bev_project(grid).tolist() == [[2], [0]]

    def test_grayscale_spans_full_range(self):
        assert bev_to_grayscale(np.array([[0, 3]]), 4).tolist() == [[0.0, 255.0]]

    def test_matches_column_scan(self, rng):
        labels = rng.integers(0, 4, size=(6, 5, 7)) * (rng.random((6, 5, 7)) < 0.4)
        grid = VoxelGrid(dims=(6, 5, 7), num_classes=4, labels=labels)
        expected = np.zeros((6, 5), dtype=np.int64)
        for x in range(6):
            for y in range(5):
                for z in reversed(range(7)):
                    if labels[x, y, z] != 0:
                        expected[x, y] = labels[x, y, z]
                        break
        np.testing.assert_array_equal(bev_project(grid), expected)


class TestCanny:
    def test_empty_grid_gives_blank_sketch(self):
        pair = make_condition_pair(VoxelGrid.empty((8, 8, 4), 4))
        assert not pair.sketch.any()
        assert not pair.psa.any()

    def test_block_outline(self):
        bev = bev_to_grayscale(bev_project(block_scene()), 4)
        sketch = canny_sketch(bev)
        assert set(np.unique(sketch)) <= {0, 255}
        rows, cols = np.nonzero(sketch)
        assert rows.size > 0
        assert rows.min() >= 2 and rows.max() <= 13
        assert cols.min() >= 2 and cols.max() <= 13
        assert not sketch[7:9, 7:9].any()

    def test_step_edge_is_one_pixel_wide(self):
        bev = np.zeros((16, 16))
        bev[:, 8:] = 100.0
        rows, cols = np.nonzero(canny_sketch(bev))
        assert np.unique(cols).tolist() == [7]
        assert sorted(rows.tolist()) == list(range(16))

    def test_constant_offset_leaves_edges_unchanged(self):
        bev = bev_to_grayscale(bev_project(block_scene()), 4)
        np.testing.assert_array_equal(canny_sketch(bev + 64.0), canny_sketch(bev))

    def test_deterministic(self):
        first = make_condition_pair(block_scene())
        second = make_condition_pair(block_scene())
        np.testing.assert_array_equal(first.sketch, second.sketch)

    def test_high_threshold_suppresses_everything(self):
        bev = bev_to_grayscale(bev_project(block_scene()), 4)
        assert not canny_sketch(bev, low=1e6, high=1e6).any()

    def test_invalid_thresholds(self):
        with pytest.raises(InvariantError):
            canny_sketch(np.zeros((4, 4)), low=100, high=50)

    def test_psa_is_bev_class_map(self):
        grid = block_scene()
        np.testing.assert_array_equal(make_condition_pair(grid).psa, bev_project(grid))


class TestVolumes:
    def test_one_hot(self):
        encoded = one_hot(np.array([[0, 2]]), 3)
        assert encoded.shape == (3, 1, 2)
        assert encoded[:, 0, 1].tolist() == [0.0, 0.0, 1.0]

    def test_majority_pool_ties_go_to_lower_class(self):
        labels = np.zeros((4, 4, 4), dtype=np.int64)
        labels[:2] = 3
        labels[2:] = 1
        assert majority_pool(labels, 4).tolist() == [[[1]]]

    def test_majority_pool_requires_divisible_dims(self):
        with pytest.raises(ShapeError):
            majority_pool(np.zeros((4, 4, 3), dtype=np.int64), 2)

    def test_lift_condition(self):
        pair = make_condition_pair(block_scene())
        lifted = lift_condition(pair, 4)
        assert lifted.shape == (5, 16, 16, 4)
        np.testing.assert_array_equal(lifted[0, :, :, 2], pair.sketch / 255.0)
        np.testing.assert_array_equal(lifted[1:].sum(axis=0), 1.0)
