import numpy as np
import pytest
from scipy import linalg

from app.exceptions import InvariantError, ShapeError
from app.schemas.metrics import FeatureSet, GaussianSummary
from app.schemas.voxel import VoxelGrid
from app.services.checkpoints import build_ssen, build_vae
from app.services.metrics import (
    EvaluationService,
    extract_features,
    fid,
    fid_from_summaries,
    iou_miou,
    median_bandwidth,
    mmd,
    parameter_report,
    reconstruction_report,
    resolve_bandwidth,
)


def features(values):
    return FeatureSet(features=values)


def reference_fid(x, y):
    mu1, mu2 = x.mean(axis=0), y.mean(axis=0)
    c1, c2 = np.cov(x, rowvar=False), np.cov(y, rowvar=False)
    covmean = linalg.sqrtm(c1 @ c2).real
    return float(np.sum((mu1 - mu2) ** 2) + np.trace(c1 + c2 - 2 * covmean))


class TestFid:
    def test_identical_sets(self, rng):
        x = rng.standard_normal((20, 3))
        assert fid(features(x), features(x)) == pytest.approx(0.0, abs=1e-8)

    def test_mean_shift(self, rng):
        x = rng.standard_normal((20, 3))
        shift = np.array([1.0, -2.0, 0.5])
        assert fid(features(x), features(x + shift)) == pytest.approx(float(shift @ shift), rel=1e-6)

    def test_identity_covariance_reduces_to_mean_distance(self):
        eye = np.eye(3)
        shift = np.array([0.5, -1.0, 2.0])
        real = GaussianSummary(mean=np.zeros(3), cov=eye)
        gen = GaussianSummary(mean=shift, cov=eye)
        assert fid_from_summaries(real, gen) == pytest.approx(5.25, abs=1e-8)

    def test_matches_matrix_square_root(self, rng):
        for _ in range(20):
            x = rng.standard_normal((30, 4))
            y = rng.standard_normal((25, 4)) @ rng.standard_normal((4, 4)) + rng.standard_normal(4)
            assert fid(features(x), features(y)) == pytest.approx(reference_fid(x, y), rel=1e-6)

    def test_symmetric(self, rng):
        x = rng.standard_normal((15, 3))
        y = 2.0 * rng.standard_normal((12, 3))
        assert fid(features(x), features(y)) == pytest.approx(fid(features(y), features(x)), rel=1e-8)

    def test_needs_two_vectors(self, rng):
        with pytest.raises(InvariantError):
            fid(features(rng.standard_normal((1, 3))), features(rng.standard_normal((5, 3))))

    def test_feature_dims_must_agree(self, rng):
        with pytest.raises(ShapeError):
            fid(features(rng.standard_normal((4, 3))), features(rng.standard_normal((4, 2))))

    def test_degenerate_covariance(self):
        summary = GaussianSummary(mean=[0.0, 0.0], cov=np.zeros((2, 2)))
        assert fid_from_summaries(summary, summary) == 0.0

    def test_non_symmetric_covariance_rejected(self):
        with pytest.raises(ValueError):
            GaussianSummary(mean=[0.0, 0.0], cov=[[1.0, 0.5], [0.0, 1.0]])


class TestMmd:
    def test_matches_double_loop(self, rng):
        x = rng.standard_normal((6, 2))
        y = rng.standard_normal((5, 2)) + 1.0
        bw = 1.5

        def k(a, b):
            return np.exp(-np.sum((a - b) ** 2) / (2 * bw ** 2))

        expected = (
            sum(k(a, b) for a in x for b in x) / 36
            + sum(k(a, b) for a in y for b in y) / 25
            - 2 * sum(k(a, b) for a in x for b in y) / 30
        )
        assert mmd(features(x), features(y), bw) == pytest.approx(expected, abs=1e-12)

    def test_identical_sets(self, rng):
        x = rng.standard_normal((8, 3))
        assert mmd(features(x), features(x)) == pytest.approx(0.0, abs=1e-12)

    def test_median_bandwidth(self):
        assert median_bandwidth(features([[0.0], [1.0]]), features([[3.0]])) == pytest.approx(2.0)
        assert median_bandwidth(features([[1.0], [1.0]]), features([[1.0]])) == 1.0

    def test_invalid_bandwidth(self, rng):
        x = features(rng.standard_normal((3, 2)))
        with pytest.raises(InvariantError):
            resolve_bandwidth(x, x, "mean")
        with pytest.raises(InvariantError):
            resolve_bandwidth(x, x, -1.0)


class TestIoU:
    def test_hand_counted(self):
        pred = VoxelGrid.from_flat((1, 1, 4), 3, [1, 1, 2, 0])
        gt = VoxelGrid.from_flat((1, 1, 4), 3, [1, 2, 2, 2])
        result = iou_miou(pred, gt)
        assert result.iou == pytest.approx(0.75)
        assert result.per_class_iou[0] is None
        assert result.per_class_iou[1] == pytest.approx(0.5)
        assert result.per_class_iou[2] == pytest.approx(1 / 3)
        assert result.miou == pytest.approx(5 / 12)

    def test_perfect_prediction(self, random_grid):
        grid = random_grid()
        result = iou_miou(grid, grid)
        assert result.iou == 1.0
        assert result.miou == 1.0

    def test_both_empty(self):
        empty = VoxelGrid.empty((2, 2, 2), 4)
        result = iou_miou(empty, empty)
        assert result.iou == 1.0
        assert result.miou == 1.0
        assert result.per_class_iou == [None, None, None, None]

    def test_absent_class_is_skipped(self):
        pred = VoxelGrid.from_flat((1, 1, 2), 4, [1, 0])
        gt = VoxelGrid.from_flat((1, 1, 2), 4, [1, 0])
        assert iou_miou(pred, gt).per_class_iou == [None, 1.0, None, None]

    def test_mismatches(self):
        with pytest.raises(ShapeError):
            iou_miou(VoxelGrid.empty((2, 2, 2), 3), VoxelGrid.empty((2, 2, 1), 3))
        with pytest.raises(InvariantError):
            iou_miou(VoxelGrid.empty((2, 2, 2), 3), VoxelGrid.empty((2, 2, 2), 4))


class TestEvaluationService:
    def test_report(self, tiny_config, random_grid):
        vae = build_vae(tiny_config)
        real = [random_grid() for _ in range(3)]
        generated = [random_grid() for _ in range(3)]
        report = EvaluationService(vae).evaluate(real, generated, list(zip(generated, real)))
        assert report.m == 3
        assert report.d == tiny_config.LATENT_CHANNELS
        assert report.fid >= 0.0 and report.mmd >= 0.0
        assert report.bandwidth > 0.0
        assert len(report.per_class_iou) == tiny_config.NUM_CLASSES
        assert 0.0 <= report.iou <= 1.0

    def test_without_pairs(self, tiny_config, random_grid):
        report = EvaluationService(build_vae(tiny_config), bandwidth=2.0).evaluate(
            [random_grid(), random_grid()], [random_grid(), random_grid()]
        )
        assert report.iou is None
        assert report.bandwidth == 2.0

    def test_empty_sets(self, tiny_config, random_grid):
        with pytest.raises(InvariantError):
            EvaluationService(build_vae(tiny_config)).evaluate([], [random_grid()])

    def test_feature_extraction_keeps_mode(self, tiny_config, random_grid):
        vae = build_vae(tiny_config)
        assert extract_features(random_grid(), vae).shape == (tiny_config.LATENT_CHANNELS,)
        assert vae.training


def test_reconstruction_report(tiny_config, random_grid):
    report = reconstruction_report([random_grid(), random_grid()], build_vae(tiny_config))
    assert report.scenes == 2
    assert len(report.per_class_iou) == tiny_config.NUM_CLASSES


def test_parameter_report(tiny_config):
    vae, ssen = build_vae(tiny_config), build_ssen(tiny_config)
    report = parameter_report({"vae": vae, "ssen": ssen}, channels=4)
    assert report.networks == {"vae": vae.num_parameters(), "ssen": ssen.num_parameters()}
    assert report.ddr_vs_dense["ratio"] == pytest.approx(3.0)
