"""
Primitive Operations
Differentiable elementwise, reduction, shape, normalization and scan primitives
"""

from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special

from app.autograd.tensor import ArrayLike, Tensor, record
from app.exceptions import ShapeError

Axis = Optional[Union[int, Tuple[int, ...]]]


def as_tensor(value: ArrayLike) -> Tensor:
    """Promote constants to non-differentiable tensors"""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    try:
        return tuple(np.broadcast_shapes(a.shape, b.shape))
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# Elementwise binary

def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    return record("add", (a, b), a.data + b.data, lambda g: (g, g))


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    return record("sub", (a, b), a.data - b.data, lambda g: (g, -g))


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    return record("mul", (a, b), a.data * b.data, lambda g: (g * b.data, g * a.data))


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    out = a.data / b.data
    return record("div", (a, b), out, lambda g: (g / b.data, -g * out / b.data))


# Elementwise unary

def neg(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return record("neg", (a,), -a.data, lambda g: (-g,))


def exp(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return record("exp", (a,), out, lambda g: (g * out,))


def log(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return record("log", (a,), np.log(a.data), lambda g: (g / a.data,))


def reciprocal(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    out = 1.0 / a.data
    return record("reciprocal", (a,), out, lambda g: (-g * out * out,))


def power(a: ArrayLike, exponent: float) -> Tensor:
    a = as_tensor(a)
    out = np.power(a.data, exponent)
    return record(
        "power", (a,), out,
        lambda g: (g * exponent * np.power(a.data, exponent - 1.0),),
    )


def sqrt(a: ArrayLike) -> Tensor:
    return power(a, 0.5)


def relu(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return record("relu", (a,), np.where(mask, a.data, 0.0), lambda g: (g * mask,))


def gelu(a: ArrayLike) -> Tensor:
    """Exact GELU, x·Φ(x)"""
    a = as_tensor(a)
    cdf = 0.5 * (1.0 + special.erf(a.data / np.sqrt(2.0)))
    pdf = np.exp(-0.5 * a.data * a.data) / np.sqrt(2.0 * np.pi)
    return record("gelu", (a,), a.data * cdf, lambda g: (g * (cdf + a.data * pdf),))


def sigmoid(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    out = special.expit(a.data)
    return record("sigmoid", (a,), out, lambda g: (g * out * (1.0 - out),))


def softplus(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    out = np.logaddexp(0.0, a.data)
    return record("softplus", (a,), out, lambda g: (g * special.expit(a.data),))


def expm1_ratio(a: ArrayLike) -> Tensor:
    """
    φ(x) = (eˣ − 1) / x with its removable singularity filled in.

    Below |x| < 1e-8 the value is the series 1 + x/2; the derivative switches to
    its series 1/2 + x/3 below |x| < 1e-4 where the closed form cancels badly.
    """
    a = as_tensor(a)
    x = a.data
    small = np.abs(x) < 1e-8
    safe = np.where(small, 1.0, x)
    out = np.where(small, 1.0 + 0.5 * x, np.expm1(safe) / safe)

    def adjoint(g):
        tiny = np.abs(x) < 1e-4
        denom = np.where(tiny, 1.0, x)
        closed = (np.exp(x) - out) / denom
        series = 0.5 + x / 3.0
        return (g * np.where(tiny, series, closed),)

    return record("expm1_ratio", (a,), out, adjoint)


def clamp(a: ArrayLike, low: float, high: float) -> Tensor:
    a = as_tensor(a)
    inside = (a.data > low) & (a.data < high)
    return record("clamp", (a,), np.clip(a.data, low, high), lambda g: (g * inside,))


# Linear algebra

def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape)
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError("matmul", a.shape, b.shape) from None

    def adjoint(g):
        return (
            np.matmul(g, np.swapaxes(b.data, -1, -2)),
            np.matmul(np.swapaxes(a.data, -1, -2), g),
        )

    return record("matmul", (a, b), out, adjoint)


# Reductions

def _normalize_axes(axis: Axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(ax % ndim for ax in axis))


def sum(a: ArrayLike, axis: Axis = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    out = np.sum(a.data, axis=axes, keepdims=keepdims)

    def adjoint(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape),)

    return record("sum", (a,), out, adjoint)


def mean(a: ArrayLike, axis: Axis = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    out = np.mean(a.data, axis=axes, keepdims=keepdims)

    def adjoint(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, a.shape),)

    return record("mean", (a,), out, adjoint)


# Shape routing

def reshape(a: ArrayLike, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError:
        raise ShapeError("reshape", a.shape, tuple(shape)) from None
    return record("reshape", (a,), out, lambda g: (g.reshape(a.shape),))


def transpose(a: ArrayLike, axes: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeError("transpose", a.shape, axes, detail="axes must permute every dimension")
    inverse = tuple(np.argsort(axes))
    return record("transpose", (a,), np.transpose(a.data, axes), lambda g: (np.transpose(g, inverse),))


def expand(a: ArrayLike, shape: Sequence[int]) -> Tensor:
    """Broadcast to a larger shape (leading or size-one axes only)"""
    a = as_tensor(a)
    try:
        out = np.broadcast_to(a.data, tuple(shape))
    except ValueError:
        raise ShapeError("expand", a.shape, tuple(shape)) from None
    return record("expand", (a,), out, lambda g: (g,))


def concat(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in parts], axis=axis)
    except ValueError:
        raise ShapeError("concat", *[t.shape for t in parts]) from None
    bounds = np.cumsum([t.shape[axis] for t in parts])[:-1]
    return record("concat", parts, out, lambda g: tuple(np.split(g, bounds, axis=axis)))


def _is_permutation(index: np.ndarray, extent: int) -> bool:
    return index.shape == (extent,) and np.array_equal(np.sort(index), np.arange(extent))


def gather(a: ArrayLike, index: np.ndarray, axis: int = 0) -> Tensor:
    """out[..., i, ...] = a[..., index[i], ...] along ``axis``"""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.int64)
    axis = axis % a.ndim
    if index.ndim != 1 or (index.size and (index.min() < 0 or index.max() >= a.shape[axis])):
        raise ShapeError("gather", a.shape, index.shape, detail=f"index out of range on axis {axis}")
    out = np.take(a.data, index, axis=axis)
    permutation = _is_permutation(index, a.shape[axis])

    def adjoint(g):
        if permutation:
            return (np.take(g, np.argsort(index), axis=axis),)
        grad = np.zeros(a.shape)
        moved = np.moveaxis(grad, axis, 0)
        np.add.at(moved, index, np.moveaxis(g, axis, 0))
        return (grad,)

    return record("gather", (a,), out, adjoint)


def scatter(a: ArrayLike, index: np.ndarray, axis: int = 0) -> Tensor:
    """Inverse routing of ``gather`` for a permutation: out[..., index[i], ...] = a[..., i, ...]"""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.int64)
    axis = axis % a.ndim
    if not _is_permutation(index, a.shape[axis]):
        raise ShapeError("scatter", a.shape, index.shape, detail="index must be a permutation")
    return gather(a, np.argsort(index), axis=axis)


# Normalization

def layer_norm(a: ArrayLike, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis (no affine part)"""
    a = as_tensor(a)
    centered = a.data - a.data.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    normed = centered * inv_std

    def adjoint(g):
        g_mean = g.mean(axis=-1, keepdims=True)
        gx_mean = (g * normed).mean(axis=-1, keepdims=True)
        return (inv_std * (g - g_mean - normed * gx_mean),)

    return record("layer_norm", (a,), normed, adjoint)


def softmax(a: ArrayLike, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def adjoint(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return record("softmax", (a,), out, adjoint)


def log_softmax(a: ArrayLike, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    out = a.data - special.logsumexp(a.data, axis=axis, keepdims=True)
    probs = np.exp(out)

    def adjoint(g):
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return record("log_softmax", (a,), out, adjoint)


# Recurrence

def linear_recurrence(
    x: ArrayLike,
    a_bar: ArrayLike,
    b_bar: ArrayLike,
    c: ArrayLike,
    h0: Optional[ArrayLike] = None,
) -> Tensor:
    """
    Sequential diagonal state-space recurrence.

    Shapes: x (*L, T), a_bar/b_bar/c (*L, T, N), h0 (*L, N).
    h(t) = a_bar(t)·h(t−1) + b_bar(t)·x(t);  y(t) = Σ_n c(t)·h(t).
    """
    x, a_bar, b_bar, c = (as_tensor(v) for v in (x, a_bar, b_bar, c))
    state_shape = a_bar.shape[:-2] + a_bar.shape[-1:]
    h0 = as_tensor(np.zeros(state_shape)) if h0 is None else as_tensor(h0)

    if a_bar.ndim < 2 or x.shape != a_bar.shape[:-1]:
        raise ShapeError("linear_recurrence", x.shape, a_bar.shape)
    for name, other in (("b_bar", b_bar), ("c", c)):
        if other.shape != a_bar.shape:
            raise ShapeError("linear_recurrence", a_bar.shape, other.shape, detail=name)
    if h0.shape != state_shape:
        raise ShapeError("linear_recurrence", state_shape, h0.shape, detail="h0")

    xs, av, bv, cv = x.data, a_bar.data, b_bar.data, c.data
    steps = xs.shape[-1]
    states = np.empty(av.shape)
    out = np.empty(xs.shape)
    h = h0.data
    for t in range(steps):
        h = av[..., t, :] * h + bv[..., t, :] * xs[..., t, None]
        states[..., t, :] = h
        out[..., t] = np.sum(cv[..., t, :] * h, axis=-1)

    def adjoint(g):
        gx = np.empty(xs.shape)
        ga = np.empty(av.shape)
        gb = np.empty(bv.shape)
        gc = np.empty(cv.shape)
        gh = np.zeros(state_shape)
        for t in range(steps - 1, -1, -1):
            gh = gh + g[..., t, None] * cv[..., t, :]
            gc[..., t, :] = g[..., t, None] * states[..., t, :]
            previous = states[..., t - 1, :] if t > 0 else h0.data
            ga[..., t, :] = gh * previous
            gb[..., t, :] = gh * xs[..., t, None]
            gx[..., t] = np.sum(gh * bv[..., t, :], axis=-1)
            gh = gh * av[..., t, :]
        return gx, ga, gb, gc, gh

    return record("linear_recurrence", (x, a_bar, b_bar, c, h0), out, adjoint)
