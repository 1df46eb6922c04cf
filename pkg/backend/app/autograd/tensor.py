"""
Tensor and Computation Tape
Dense float64 tensors with reverse-mode automatic differentiation
"""

from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union
import logging
import threading

import numpy as np

from app.exceptions import CymbaError, InvariantError, ShapeError

logger = logging.getLogger(__name__)

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[float]]
Adjoint = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """
    Dense tensor of 64-bit floats.

    Values are never written in place. Leaf tensors (constructed directly,
    including parameters and buffers) may have their whole buffer swapped
    with ``assign``; op results and detached views are fixed for life.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_leaf", "__weakref__")
    # ndarray op Tensor defers to the reflected Tensor operator
    __array_ufunc__ = None

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        if isinstance(data, Tensor):
            data = data.data
        array = np.array(data, dtype=np.float64)
        array.setflags(write=False)
        self.data: np.ndarray = array
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._leaf = True

    @classmethod
    def wrap(cls, array: np.ndarray) -> "Tensor":
        """Adopt a freshly computed array without copying it"""
        tensor = cls.__new__(cls)
        array = np.ascontiguousarray(array, dtype=np.float64)
        array.setflags(write=False)
        tensor.data = array
        tensor.grad = None
        tensor.requires_grad = False
        tensor.name = None
        tensor._leaf = False
        return tensor

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        """Writable copy of the underlying values"""
        return np.array(self.data)

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError("item", self.shape, (), detail="tensor is not scalar")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor.wrap(self.data)

    def assign(self, values: np.ndarray) -> None:
        """
        Swap in a fresh read-only buffer of the same shape.

        Only for leaf tensors (optimizer updates, checkpoint loads, running
        statistics) and never while another thread reads them. Arrays handed
        out earlier through ``data`` keep their old values.
        """
        if not self._leaf:
            raise InvariantError("assign is only allowed on leaf tensors, not op results")
        array = np.array(values, dtype=np.float64)
        if array.shape != self.data.shape:
            raise ShapeError("assign", self.shape, array.shape)
        array.setflags(write=False)
        self.data = array

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Operator sugar over app.autograd.functional
    def __add__(self, other):
        from app.autograd import functional as F
        return F.add(self, other)

    def __radd__(self, other):
        from app.autograd import functional as F
        return F.add(other, self)

    def __sub__(self, other):
        from app.autograd import functional as F
        return F.sub(self, other)

    def __rsub__(self, other):
        from app.autograd import functional as F
        return F.sub(other, self)

    def __mul__(self, other):
        from app.autograd import functional as F
        return F.mul(self, other)

    def __rmul__(self, other):
        from app.autograd import functional as F
        return F.mul(other, self)

    def __truediv__(self, other):
        from app.autograd import functional as F
        return F.div(self, other)

    def __rtruediv__(self, other):
        from app.autograd import functional as F
        return F.div(other, self)

    def __neg__(self):
        from app.autograd import functional as F
        return F.neg(self)

    def __pow__(self, exponent: float):
        from app.autograd import functional as F
        return F.power(self, exponent)

    def __matmul__(self, other):
        from app.autograd import functional as F
        return F.matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        from app.autograd import functional as F
        return F.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        from app.autograd import functional as F
        return F.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        from app.autograd import functional as F
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        from app.autograd import functional as F
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return F.transpose(self, axes)


@dataclass
class TapeEntry:
    """One executed operation and its local adjoint rule"""
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    adjoint: Adjoint


class ComputationTape:
    """Ordered record of operations executed in one thread"""

    def __init__(self):
        self.entries: List[TapeEntry] = []
        self.enabled = True

    def record(self, op: str, inputs: Tuple[Tensor, ...], output: Tensor, adjoint: Adjoint) -> None:
        self.entries.append(TapeEntry(op, inputs, output, adjoint))

    def clear(self) -> None:
        self.entries.clear()

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[TapeEntry]:
        return iter(self.entries)


_local = threading.local()


def get_tape() -> ComputationTape:
    """Tape owned by the calling thread"""
    tape = getattr(_local, "tape", None)
    if tape is None:
        tape = ComputationTape()
        _local.tape = tape
    return tape


@contextmanager
def no_grad():
    """Suspend recording for inference code"""
    tape = get_tape()
    previous = tape.enabled
    tape.enabled = False
    try:
        yield
    finally:
        tape.enabled = previous


def record(op: str, inputs: Sequence[Tensor], out_data: np.ndarray, adjoint: Adjoint) -> Tensor:
    """Wrap an op result and register it on the tape when gradients are needed"""
    out = Tensor.wrap(out_data)
    tape = get_tape()
    if tape.enabled and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(op, tuple(inputs), out, adjoint)
    return out


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a gradient back down to the shape of a broadcast operand"""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    if grad.shape != shape:
        raise ShapeError("unbroadcast", grad.shape, shape)
    return grad


def backward(loss: Tensor) -> Dict[Tensor, np.ndarray]:
    """
    Replay the tape in reverse from a scalar loss.

    Leaf tensors accumulate into ``.grad``; the returned map holds the gradient
    of every tensor reached from the loss. The tape is cleared afterwards.
    """
    if loss.size != 1:
        raise ShapeError("backward", loss.shape, (), detail="loss must be scalar")
    tape = get_tape()
    if not tape.entries or not loss.requires_grad:
        raise CymbaError("backward: tape is empty or loss does not depend on any parameter")

    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    reached: Dict[int, Tensor] = {id(loss): loss}
    produced = set()

    for entry in reversed(tape.entries):
        produced.add(id(entry.output))
        upstream = grads.get(id(entry.output))
        if upstream is None:
            continue
        local = entry.adjoint(upstream)
        for tensor, grad in zip(entry.inputs, local):
            if grad is None or not tensor.requires_grad:
                continue
            grad = unbroadcast(np.asarray(grad, dtype=np.float64), tensor.shape)
            key = id(tensor)
            if key in grads:
                grads[key] = grads[key] + grad
            else:
                grads[key] = grad
                reached[key] = tensor

    tape.clear()

    result: Dict[Tensor, np.ndarray] = {}
    for key, grad in grads.items():
        tensor = reached[key]
        result[tensor] = grad
        if key not in produced:
            tensor.grad = grad if tensor.grad is None else tensor.grad + grad
    return result
