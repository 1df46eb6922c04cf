"""
Scan Orders
Cartesian and cylindrical linearizations of voxel space and directional routing
"""

from functools import lru_cache
from typing import Tuple
import logging

import numpy as np

from app.autograd import functional as F
from app.autograd.tensor import Tensor
from app.exceptions import ShapeError
from app.schemas.scan import ScanDirection, ScanOrder

logger = logging.getLogger(__name__)

Dims = Tuple[int, int, int]


def _check_dims(dims: Dims) -> Dims:
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or min(dims) < 1:
        raise ShapeError("scan_order", dims, ("L", "W", "H"), detail="dims must be three positive extents")
    return dims


def cartesian_order(dims: Dims) -> ScanOrder:
    """Raster order: x outermost, then y, z innermost (label-file storage order)"""
    dims = _check_dims(dims)
    return ScanOrder.from_perm(dims, np.arange(int(np.prod(dims))), kind="cartesian")


def cylinder_coordinates(dims: Dims) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(θ ∈ [0, 2π), r, z) per flat voxel, about the grid center in cell-center coordinates"""
    length, width, height = _check_dims(dims)
    i, j, k = np.meshgrid(np.arange(length), np.arange(width), np.arange(height), indexing="ij")
    dx = i + 0.5 - length / 2.0
    dy = j + 0.5 - width / 2.0
    theta = np.mod(np.arctan2(dy, dx), 2.0 * np.pi)
    radius = np.hypot(dx, dy)
    return theta.reshape(-1), radius.reshape(-1), k.reshape(-1)


def cylinder_order(dims: Dims, priority: str = "z_theta_r") -> ScanOrder:
    """
    Sort voxels by (z, θ, r), ties broken by flat index.

    ``priority="z_r_theta"`` swaps the angular and radial keys.
    """
    dims = _check_dims(dims)
    theta, radius, z = cylinder_coordinates(dims)
    theta = np.round(theta, 12)
    radius = np.round(radius, 12)
    flat = np.arange(theta.size)
    if priority == "z_theta_r":
        perm = np.lexsort((flat, radius, theta, z))
    elif priority == "z_r_theta":
        perm = np.lexsort((flat, theta, radius, z))
    else:
        raise ValueError(f"Unknown scan priority: {priority}")
    return ScanOrder.from_perm(dims, perm, kind=f"cylinder:{priority}")


def inter_slice_seed(layer_index: int, epoch: int) -> int:
    """Training-time seed for the slice shuffle of one layer"""
    return int(np.random.SeedSequence([layer_index, epoch]).generate_state(1)[0])


@lru_cache(maxsize=256)
def _slice_permutation(height: int, seed: int) -> Tuple[int, ...]:
    return tuple(np.random.default_rng(seed).permutation(height).tolist())


def direction_index(order: ScanOrder, direction: ScanDirection) -> np.ndarray:
    """
    Sequence position → flat voxel index after applying a direction.

    inter_slice regroups the ordered sequence by z, keeping the order within
    each slice, and visits the slices in a seeded pseudo-random order.
    """
    perm = order.perm
    if direction.kind == "forward":
        return perm
    if direction.kind == "backward":
        return perm[::-1]
    height = order.dims[2]
    z = perm % height
    slices = [perm[z == level] for level in _slice_permutation(height, direction.seed)]
    return np.concatenate(slices)


def apply_order(x: Tensor, order: ScanOrder, direction: ScanDirection, axis: int = 1) -> Tensor:
    """Gather the flattened spatial axis of ``x`` into scan sequence order"""
    axis = axis % x.ndim
    if x.shape[axis] != order.size:
        raise ShapeError("apply_order", x.shape, (order.size,), detail=f"axis {axis} extent")
    return F.gather(x, direction_index(order, direction), axis=axis)


def restore_order(y: Tensor, order: ScanOrder, direction: ScanDirection, axis: int = 1) -> Tensor:
    """Inverse routing of ``apply_order``"""
    axis = axis % y.ndim
    if y.shape[axis] != order.size:
        raise ShapeError("restore_order", y.shape, (order.size,), detail=f"axis {axis} extent")
    return F.scatter(y, direction_index(order, direction), axis=axis)
