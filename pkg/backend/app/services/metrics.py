"""
Evaluation Metrics
3D FID and MMD over pooled VAE features, and voxel IoU / mIoU
"""

from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union
import logging

import numpy as np
from scipy.spatial.distance import cdist, pdist

from app.autograd.nn import Module
from app.autograd.tensor import Tensor, no_grad
from app.exceptions import InvariantError, NumericalError, ShapeError
from app.models.conv_blocks import ddr_parameter_comparison
from app.models.vae import Vae
from app.schemas.metrics import (
    FeatureSet,
    GaussianSummary,
    IoUResult,
    MetricReport,
    ParameterReport,
    ReconstructionReport,
)
from app.schemas.voxel import VoxelGrid
from app.services.voxel_ops import one_hot

logger = logging.getLogger(__name__)

EIGEN_TOLERANCE = 1e-6

Bandwidth = Union[float, str]


def extract_features(grid: VoxelGrid, vae: Vae) -> np.ndarray:
    """Spatially averaged encoder mean of a scene, shape (c_z,)"""
    if vae is None:
        raise InvariantError("feature extraction needs a trained VAE")
    x = Tensor(one_hot(grid.labels, grid.num_classes)[None])
    was_training = vae.training
    vae.eval()
    try:
        with no_grad():
            latent = vae.encoder(x)
    finally:
        vae.train(was_training)
    return latent.mean.data[0].mean(axis=(1, 2, 3))


def feature_set(grids: Iterable[VoxelGrid], vae: Vae) -> FeatureSet:
    return FeatureSet(features=np.stack([extract_features(grid, vae) for grid in grids]))


def gaussian_summary(features: FeatureSet) -> GaussianSummary:
    """Mean and unbiased covariance; needs at least two vectors"""
    if features.m < 2:
        raise InvariantError(f"covariance needs m >= 2 feature vectors, got {features.m}")
    cov = np.cov(features.features, rowvar=False, ddof=1).reshape(features.d, features.d)
    cov = 0.5 * (cov + cov.T)
    return GaussianSummary(mean=features.features.mean(axis=0), cov=cov)


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    values, vectors = np.linalg.eigh(matrix)
    return (vectors * np.sqrt(np.clip(values, 0.0, None))) @ vectors.T


def fid_from_summaries(real: GaussianSummary, gen: GaussianSummary) -> float:
    """
    ‖M_t − M_g‖² + Tr(C_t + C_g − 2(C_t C_g)^(1/2)).

    The trace of the square root is taken from the eigenvalues of the
    symmetric product sqrt(C_t)·C_g·sqrt(C_t), which shares its spectrum with
    C_t·C_g.
    """
    if real.mean.shape != gen.mean.shape:
        raise ShapeError("fid", real.mean.shape, gen.mean.shape)
    root = _psd_sqrt(real.cov)
    product = root @ gen.cov @ root
    values = np.linalg.eigvalsh(0.5 * (product + product.T))
    smallest = float(values.min())
    if smallest < -EIGEN_TOLERANCE:
        raise NumericalError(f"covariance product is not PSD: minimum eigenvalue {smallest:.3e}")
    trace_sqrt = float(np.sqrt(np.clip(values, 0.0, None)).sum())

    diff = real.mean - gen.mean
    value = float(diff @ diff + np.trace(real.cov) + np.trace(gen.cov) - 2.0 * trace_sqrt)
    if value < -EIGEN_TOLERANCE:
        raise NumericalError(f"FID evaluated to {value:.3e}")
    return max(value, 0.0)


def fid(real: FeatureSet, gen: FeatureSet) -> float:
    if real.d != gen.d:
        raise ShapeError("fid", (real.m, real.d), (gen.m, gen.d))
    return fid_from_summaries(gaussian_summary(real), gaussian_summary(gen))


def median_bandwidth(real: FeatureSet, gen: FeatureSet) -> float:
    """Median pairwise distance over the pooled sets; 1.0 when all points coincide"""
    pooled = np.concatenate([real.features, gen.features], axis=0)
    distances = pdist(pooled)
    positive = distances[distances > 0]
    return float(np.median(positive)) if positive.size else 1.0


def resolve_bandwidth(real: FeatureSet, gen: FeatureSet, bandwidth: Bandwidth = "median") -> float:
    if bandwidth == "median":
        return median_bandwidth(real, gen)
    if isinstance(bandwidth, str):
        raise InvariantError(f"unknown bandwidth rule {bandwidth!r}")
    bandwidth = float(bandwidth)
    if not bandwidth > 0:
        raise InvariantError(f"bandwidth must be positive, got {bandwidth}")
    return bandwidth


def gaussian_kernel(x: np.ndarray, y: np.ndarray, bandwidth: float) -> np.ndarray:
    """k(a, b) = exp(−‖a − b‖² / (2·bw²)) for every row pair"""
    return np.exp(-0.5 * cdist(x, y, "sqeuclidean") / bandwidth ** 2)


def mmd(real: FeatureSet, gen: FeatureSet, bandwidth: Bandwidth = "median") -> float:
    """Biased (V-statistic) MMD², self-pairs included, clipped at 0"""
    if real.d != gen.d:
        raise ShapeError("mmd", (real.m, real.d), (gen.m, gen.d))
    bw = resolve_bandwidth(real, gen, bandwidth)
    x, y = real.features, gen.features
    value = (
        gaussian_kernel(x, x, bw).mean()
        + gaussian_kernel(y, y, bw).mean()
        - 2.0 * gaussian_kernel(x, y, bw).mean()
    )
    return max(float(value), 0.0)


class ConfusionCounts:
    """Voxel counts accumulated over one or more (pred, gt) pairs"""

    def __init__(self, num_classes: int):
        self.num_classes = num_classes
        self.tp = np.zeros(num_classes, dtype=np.int64)
        self.fp = np.zeros(num_classes, dtype=np.int64)
        self.fn = np.zeros(num_classes, dtype=np.int64)
        self.occupied_intersection = 0
        self.occupied_union = 0

    def add(self, pred: VoxelGrid, gt: VoxelGrid) -> "ConfusionCounts":
        if pred.dims != gt.dims:
            raise ShapeError("iou_miou", pred.dims, gt.dims)
        if pred.num_classes != gt.num_classes or gt.num_classes != self.num_classes:
            raise InvariantError(
                f"class counts differ: pred {pred.num_classes}, gt {gt.num_classes}, expected {self.num_classes}"
            )
        p = pred.flat().astype(np.int64)
        g = gt.flat().astype(np.int64)
        self.occupied_intersection += int(np.count_nonzero((p != 0) & (g != 0)))
        self.occupied_union += int(np.count_nonzero((p != 0) | (g != 0)))
        hits = p == g
        self.tp += np.bincount(p[hits], minlength=self.num_classes)
        self.fp += np.bincount(p[~hits], minlength=self.num_classes)
        self.fn += np.bincount(g[~hits], minlength=self.num_classes)
        return self

    def result(self) -> IoUResult:
        """
        Occupancy IoU over label ≠ 0 and per-class IoU indexed by class ID.

        Entry 0 (empty) is always None, as is any class absent from both
        prediction and ground truth. mIoU averages the remaining entries;
        with no classes at all it is 1.
        """
        iou = 1.0 if self.occupied_union == 0 else self.occupied_intersection / self.occupied_union
        per_class: List[Optional[float]] = [None]
        for c in range(1, self.num_classes):
            denominator = int(self.tp[c] + self.fp[c] + self.fn[c])
            per_class.append(None if denominator == 0 else float(self.tp[c]) / denominator)
        present = [value for value in per_class if value is not None]
        miou = float(np.mean(present)) if present else 1.0
        return IoUResult(iou=float(iou), per_class_iou=per_class, miou=miou)


def iou_miou(pred: VoxelGrid, gt: VoxelGrid) -> IoUResult:
    return ConfusionCounts(gt.num_classes).add(pred, gt).result()


def reconstruct(grid: VoxelGrid, vae: Vae) -> VoxelGrid:
    """Encode to the posterior mean and decode to argmax labels"""
    x = Tensor(one_hot(grid.labels, grid.num_classes)[None])
    was_training = vae.training
    vae.eval()
    try:
        with no_grad():
            logits, _ = vae(x)
    finally:
        vae.train(was_training)
    return VoxelGrid(dims=grid.dims, num_classes=grid.num_classes, labels=np.argmax(logits.data[0], axis=0))


def reconstruction_report(grids: Sequence[VoxelGrid], vae: Vae) -> ReconstructionReport:
    if not grids:
        raise InvariantError("reconstruction report needs at least one scene")
    counts = ConfusionCounts(grids[0].num_classes)
    for grid in grids:
        counts.add(reconstruct(grid, vae), grid)
    result = counts.result()
    return ReconstructionReport(
        scenes=len(grids), iou=result.iou, miou=result.miou, per_class_iou=result.per_class_iou
    )


def parameter_report(networks: Dict[str, Module], channels: int, k: int = 3) -> ParameterReport:
    return ParameterReport(
        networks={name: network.num_parameters() for name, network in networks.items()},
        ddr_vs_dense=ddr_parameter_comparison(channels, k),
    )


class EvaluationService:
    """Distribution metrics between a real and a generated scene collection"""

    def __init__(self, vae: Vae, bandwidth: Bandwidth = "median"):
        self.vae = vae
        self.bandwidth = bandwidth

    def evaluate(
        self,
        real: Sequence[VoxelGrid],
        generated: Sequence[VoxelGrid],
        pairs: Optional[Sequence[Tuple[VoxelGrid, VoxelGrid]]] = None,
    ) -> MetricReport:
        """FID and MMD between the sets; IoU/mIoU over matched (generated, real) pairs when given"""
        if not real or not generated:
            raise InvariantError("evaluation needs non-empty real and generated sets")
        try:
            real_features = feature_set(real, self.vae)
            gen_features = feature_set(generated, self.vae)
            bw = resolve_bandwidth(real_features, gen_features, self.bandwidth)
            report = {
                "fid": fid(real_features, gen_features),
                "mmd": mmd(real_features, gen_features, bw),
                "m": min(real_features.m, gen_features.m),
                "d": real_features.d,
                "bandwidth": bw,
            }
            if pairs:
                counts = ConfusionCounts(pairs[0][1].num_classes)
                for pred, gt in pairs:
                    counts.add(pred, gt)
                result = counts.result()
                report.update(iou=result.iou, miou=result.miou, per_class_iou=result.per_class_iou)
            logger.info(f"Evaluation: fid={report['fid']:.4f} mmd={report['mmd']:.4f} over m={report['m']}")
            return MetricReport(**report)
        except Exception as e:
            logger.error(f"Evaluation failed: {e}")
            raise
