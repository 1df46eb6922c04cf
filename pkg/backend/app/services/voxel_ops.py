"""
Voxel Operations
BEV projection, Canny sketch synthesis and label encodings for the networks
"""

from typing import Tuple
import logging

import numpy as np
from scipy import ndimage

from app.exceptions import InvariantError, ShapeError
from app.schemas.voxel import ConditionPair, VoxelGrid

logger = logging.getLogger(__name__)

GAUSSIAN_SIZE = 5
GAUSSIAN_SIGMA = 1.4

# Angle bin → (row, col) offset of the neighbor along the gradient
_NMS_OFFSETS = {
    0: (0, 1),
    1: (1, 1),
    2: (1, 0),
    3: (1, -1),
}


def bev_project(grid: VoxelGrid) -> np.ndarray:
    """Label of the top-most occupied voxel per (x, y) column, 0 for empty columns"""
    occupied = grid.labels != 0
    height = grid.dims[2]
    top = height - 1 - np.argmax(occupied[:, :, ::-1], axis=2)
    labels = np.take_along_axis(grid.labels, top[:, :, None], axis=2)[:, :, 0]
    return np.where(occupied.any(axis=2), labels, 0).astype(np.uint16)


def gaussian_kernel(size: int = GAUSSIAN_SIZE, sigma: float = GAUSSIAN_SIGMA) -> np.ndarray:
    half = size // 2
    ax = np.arange(-half, half + 1, dtype=np.float64)
    xx, yy = np.meshgrid(ax, ax, indexing="ij")
    kernel = np.exp(-(xx ** 2 + yy ** 2) / (2.0 * sigma ** 2))
    return kernel / kernel.sum()


def _non_maximum_suppression(magnitude: np.ndarray, angle: np.ndarray) -> np.ndarray:
    """
    Keep pixels that are maximal along their quantized gradient direction.

    A pixel survives if it is ≥ its forward neighbor and > its backward
    neighbor, so a plateau two pixels wide yields a single-pixel line.
    """
    bins = (np.floor((angle + 22.5) / 45.0).astype(np.int64)) % 4
    padded = np.pad(magnitude, 1)
    rows, cols = magnitude.shape
    keep = np.zeros(magnitude.shape, dtype=bool)
    for direction, (dr, dc) in _NMS_OFFSETS.items():
        ahead = padded[1 + dr:1 + dr + rows, 1 + dc:1 + dc + cols]
        behind = padded[1 - dr:1 - dr + rows, 1 - dc:1 - dc + cols]
        local = (magnitude >= ahead) & (magnitude > behind)
        keep |= (bins == direction) & local
    return np.where(keep & (magnitude > 0), magnitude, 0.0)


def _hysteresis(suppressed: np.ndarray, low: float, high: float) -> np.ndarray:
    weak = suppressed >= low
    weak &= suppressed > 0
    strong = weak & (suppressed >= high)
    components, count = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    if count == 0:
        return np.zeros(suppressed.shape, dtype=bool)
    anchored = np.zeros(count + 1, dtype=bool)
    anchored[np.unique(components[strong])] = True
    anchored[0] = False
    return anchored[components]


def canny_sketch(bev: np.ndarray, low: float = 50.0, high: float = 100.0) -> np.ndarray:
    """Classical Canny over a 2D map treated as grayscale; returns values in {0, 255}"""
    if not high >= low >= 0:
        raise InvariantError(f"Canny thresholds must satisfy high >= low >= 0, got low={low}, high={high}")
    image = np.asarray(bev, dtype=np.float64)
    if image.ndim != 2:
        raise ShapeError("canny_sketch", image.shape, ("L", "W"))

    smoothed = ndimage.convolve(image, gaussian_kernel(), mode="nearest")
    grad_rows = ndimage.sobel(smoothed, axis=0, mode="nearest")
    grad_cols = ndimage.sobel(smoothed, axis=1, mode="nearest")
    # rounded so symmetric plateaus compare equal regardless of offset
    magnitude = np.round(np.hypot(grad_rows, grad_cols), 9)
    grad_rows = np.round(grad_rows, 9)
    grad_cols = np.round(grad_cols, 9)
    angle = np.rad2deg(np.arctan2(grad_rows, grad_cols)) % 180.0

    suppressed = _non_maximum_suppression(magnitude, angle)
    edges = _hysteresis(suppressed, low, high)
    return np.where(edges, 255, 0).astype(np.uint8)


def bev_to_grayscale(bev: np.ndarray, num_classes: int) -> np.ndarray:
    """Spread class IDs over 0..255"""
    return np.asarray(bev, dtype=np.float64) * (255.0 / (num_classes - 1))


def make_condition_pair(grid: VoxelGrid, low: float = 50.0, high: float = 100.0) -> ConditionPair:
    """
    Sketch and synthetic PSA for a scene.

    The sketch is Canny over the scaled BEV map; the BEV class map itself
    stands in for the PSA.
    """
    bev = bev_project(grid)
    sketch = canny_sketch(bev_to_grayscale(bev, grid.num_classes), low, high)
    return ConditionPair(sketch=sketch, psa=bev, num_classes=grid.num_classes)


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """(…) integer labels → (C, …) float indicator volume"""
    labels = np.asarray(labels, dtype=np.int64)
    return (np.arange(num_classes).reshape((-1,) + (1,) * labels.ndim) == labels[None]).astype(np.float64)


def majority_pool(labels: np.ndarray, num_classes: int, factor: int = 4) -> np.ndarray:
    """Most frequent label per factor³ block; ties go to the lower class ID"""
    labels = np.asarray(labels, dtype=np.int64)
    if any(d % factor for d in labels.shape):
        raise ShapeError("majority_pool", labels.shape, (factor,) * 3, detail="dims must divide by factor")
    l, w, h = (d // factor for d in labels.shape)
    blocks = labels.reshape(l, factor, w, factor, h, factor).transpose(0, 2, 4, 1, 3, 5).reshape(l, w, h, -1)
    counts = (blocks[..., None] == np.arange(num_classes)).sum(axis=-2)
    return np.argmax(counts, axis=-1)


def lift_condition(pair: ConditionPair, height: int) -> np.ndarray:
    """
    (1 + C, L, W, H) volume: sketch/255 and one-hot PSA, replicated along H.
    """
    planes = np.concatenate(
        [pair.sketch[None].astype(np.float64) / 255.0, one_hot(pair.psa, pair.num_classes)],
        axis=0,
    )
    return np.repeat(planes[..., None], height, axis=-1)


def condition_channels(num_classes: int) -> int:
    return 1 + num_classes


def latent_shape(dims: Tuple[int, int, int], factor: int = 4) -> Tuple[int, int, int]:
    return tuple(d // factor for d in dims)
