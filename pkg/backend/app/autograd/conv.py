"""
3D Convolution Primitives
Direct and transposed 3D convolution with stride, padding and dilation
"""

from itertools import product
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from app.autograd.functional import as_tensor
from app.autograd.tensor import ArrayLike, Tensor, record
from app.exceptions import ShapeError

Triple = Union[int, Sequence[int]]


def _triple(value: Triple) -> Tuple[int, int, int]:
    if isinstance(value, (int, np.integer)):
        return (int(value),) * 3
    value = tuple(int(v) for v in value)
    if len(value) != 3:
        raise ValueError(f"expected 3 values, got {value}")
    return value


def _window(offset: int, dilation: int, stride: int, count: int) -> slice:
    start = offset * dilation
    return slice(start, start + stride * (count - 1) + 1, stride)


def conv3d(
    x: ArrayLike,
    weight: ArrayLike,
    bias: Optional[ArrayLike] = None,
    stride: Triple = 1,
    padding: Triple = 0,
    dilation: Triple = 1,
) -> Tensor:
    """
    Cross-correlation over (B, C_in, D, H, W) with weight (C_out, C_in, kd, kh, kw).

    Computed as one tensordot per kernel offset; the adjoint walks the same
    offsets so forward and backward share indexing.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    stride, padding, dilation = _triple(stride), _triple(padding), _triple(dilation)

    if x.ndim != 5 or weight.ndim != 5 or x.shape[1] != weight.shape[1]:
        raise ShapeError("conv3d", x.shape, weight.shape)

    spatial = x.shape[2:]
    kernel = weight.shape[2:]
    out_spatial = tuple(
        (n + 2 * p - d * (k - 1) - 1) // s + 1
        for n, p, d, k, s in zip(spatial, padding, dilation, kernel, stride)
    )
    if min(out_spatial) < 1:
        raise ShapeError("conv3d", x.shape, weight.shape, detail="kernel larger than padded input")

    pad_width = ((0, 0), (0, 0)) + tuple((p, p) for p in padding)
    padded = np.pad(x.data, pad_width)
    batch, out_channels = x.shape[0], weight.shape[0]

    def windows(i, j, k):
        return (
            slice(None), slice(None),
            _window(i, dilation[0], stride[0], out_spatial[0]),
            _window(j, dilation[1], stride[1], out_spatial[1]),
            _window(k, dilation[2], stride[2], out_spatial[2]),
        )

    offsets = list(product(*(range(k) for k in kernel)))
    acc = np.zeros((out_channels, batch) + out_spatial)
    for i, j, k in offsets:
        acc += np.tensordot(weight.data[:, :, i, j, k], padded[windows(i, j, k)], axes=([1], [1]))
    out = np.moveaxis(acc, 0, 1)

    inputs = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (out_channels,):
            raise ShapeError("conv3d", bias.shape, (out_channels,), detail="bias")
        out = out + bias.data.reshape(1, -1, 1, 1, 1)
        inputs.append(bias)

    def adjoint(g):
        g_padded = np.zeros(padded.shape)
        g_weight = np.zeros(weight.shape)
        for i, j, k in offsets:
            window = windows(i, j, k)
            g_weight[:, :, i, j, k] = np.tensordot(g, padded[window], axes=([0, 2, 3, 4], [0, 2, 3, 4]))
            contribution = np.tensordot(weight.data[:, :, i, j, k], g, axes=([0], [1]))
            g_padded[window] += np.moveaxis(contribution, 0, 1)
        crop = (slice(None), slice(None)) + tuple(
            slice(p, p + n) for p, n in zip(padding, spatial)
        )
        grads = [g_padded[crop], g_weight]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3, 4)))
        return grads

    return record("conv3d", inputs, out, adjoint)


def conv_transpose3d(
    x: ArrayLike,
    weight: ArrayLike,
    bias: Optional[ArrayLike] = None,
    stride: Triple = 1,
    padding: Triple = 0,
) -> Tensor:
    """
    Transposed convolution over (B, C_in, D, H, W) with weight (C_in, C_out, kd, kh, kw).

    Output extent per axis is (n − 1)·stride − 2·padding + k.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    stride, padding = _triple(stride), _triple(padding)

    if x.ndim != 5 or weight.ndim != 5 or x.shape[1] != weight.shape[0]:
        raise ShapeError("conv_transpose3d", x.shape, weight.shape)

    spatial = x.shape[2:]
    kernel = weight.shape[2:]
    full_spatial = tuple((n - 1) * s + k for n, s, k in zip(spatial, stride, kernel))
    out_spatial = tuple(f - 2 * p for f, p in zip(full_spatial, padding))
    if min(out_spatial) < 1:
        raise ShapeError("conv_transpose3d", x.shape, weight.shape, detail="padding removes the whole output")

    batch, out_channels = x.shape[0], weight.shape[1]

    def windows(i, j, k):
        return (
            slice(None), slice(None),
            _window(i, 1, stride[0], spatial[0]),
            _window(j, 1, stride[1], spatial[1]),
            _window(k, 1, stride[2], spatial[2]),
        )

    offsets = list(product(*(range(k) for k in kernel)))
    full = np.zeros((batch, out_channels) + full_spatial)
    for i, j, k in offsets:
        contribution = np.tensordot(x.data, weight.data[:, :, i, j, k], axes=([1], [0]))
        full[windows(i, j, k)] += np.moveaxis(contribution, -1, 1)
    crop = (slice(None), slice(None)) + tuple(slice(p, p + n) for p, n in zip(padding, out_spatial))
    out = full[crop]

    inputs = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (out_channels,):
            raise ShapeError("conv_transpose3d", bias.shape, (out_channels,), detail="bias")
        out = out + bias.data.reshape(1, -1, 1, 1, 1)
        inputs.append(bias)

    def adjoint(g):
        g_full = np.zeros(full.shape)
        g_full[crop] = g
        g_x = np.zeros(x.shape)
        g_weight = np.zeros(weight.shape)
        for i, j, k in offsets:
            window = g_full[windows(i, j, k)]
            g_x += np.moveaxis(np.tensordot(window, weight.data[:, :, i, j, k], axes=([1], [1])), -1, 1)
            g_weight[:, :, i, j, k] = np.tensordot(x.data, window, axes=([0, 2, 3, 4], [0, 2, 3, 4]))
        grads = [g_x, g_weight]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3, 4)))
        return grads

    return record("conv_transpose3d", inputs, out, adjoint)
