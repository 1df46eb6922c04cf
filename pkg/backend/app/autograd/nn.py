"""
Neural Network Modules
Parameter containers and the layer set the CymbaDiff networks are built from
"""

from collections import OrderedDict
from typing import Dict, Iterator, List, Optional, Sequence, Tuple
import logging

import numpy as np

from app.autograd import functional as F
from app.autograd.conv import Triple, _triple, conv3d, conv_transpose3d
from app.autograd.tensor import Tensor
from app.exceptions import CheckpointError, ShapeError

logger = logging.getLogger(__name__)


class Parameter(Tensor):
    """Trainable tensor"""

    def __init__(self, data, name: Optional[str] = None):
        super().__init__(data, requires_grad=True, name=name)


class Buffer(Tensor):
    """Persistent non-trainable state (e.g. running statistics)"""

    def __init__(self, data, name: Optional[str] = None):
        super().__init__(data, requires_grad=False, name=name)


class Module:
    """Base class for all network blocks"""

    training: bool = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def _children(self) -> Iterator[Tuple[str, object]]:
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            yield name, value

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, value in self._children():
            full = f"{prefix}{name}"
            if isinstance(value, Parameter):
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{full}.")

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, Buffer]]:
        for name, value in self._children():
            full = f"{prefix}{name}"
            if isinstance(value, Buffer):
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_buffers(f"{full}.")

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, value in self._children():
            if isinstance(value, Module):
                yield from value.modules()

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def train(self, mode: bool = True) -> "Module":
        for module in self.modules():
            module.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for parameter in self.parameters():
            parameter.grad = None

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        state: "OrderedDict[str, np.ndarray]" = OrderedDict()
        for name, parameter in self.named_parameters():
            state[name] = parameter.numpy()
        for name, buffer in self.named_buffers():
            state[name] = buffer.numpy()
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray], strict: bool = True) -> None:
        """Replace parameter and buffer values by name"""
        owners = self._owners()
        missing = [name for name in owners if name not in state]
        unexpected = [name for name in state if name not in owners]
        if strict and (missing or unexpected):
            raise CheckpointError(
                f"State mismatch: missing={missing[:5]} unexpected={unexpected[:5]}"
            )
        for name, (module, attribute) in owners.items():
            if name not in state:
                continue
            current = getattr(module, attribute)
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != current.shape:
                raise ShapeError("load_state_dict", current.shape, value.shape, detail=name)
            current.assign(value)

    def _owners(self, prefix: str = "") -> Dict[str, Tuple["Module", str]]:
        owners: Dict[str, Tuple[Module, str]] = {}
        for name, value in self._children():
            full = f"{prefix}{name}"
            if isinstance(value, (Parameter, Buffer)):
                owners[full] = (self, name)
            elif isinstance(value, Module):
                owners.update(value._owners(f"{full}."))
        return owners


class ModuleList(Module):
    """Ordered container of sub-modules"""

    def __init__(self, modules: Sequence[Module] = ()):
        for index, module in enumerate(modules):
            setattr(self, str(index), module)
        self._count = len(modules)

    def __len__(self) -> int:
        return self._count

    def __getitem__(self, index: int) -> Module:
        if index < 0:
            index += self._count
        return getattr(self, str(index))

    def __iter__(self) -> Iterator[Module]:
        return (self[i] for i in range(self._count))


def _uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    """Affine map over the last axis"""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Parameter(_uniform(rng, (in_features, out_features), in_features))
        self.bias = Parameter(_uniform(rng, (out_features,), in_features)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_features:
            raise ShapeError("linear", x.shape, self.weight.shape)
        out = F.matmul(x, self.weight)
        if self.bias is not None:
            out = out + self.bias
        return out


class Conv3d(Module):
    """3D convolution layer"""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: Triple,
        rng: np.random.Generator,
        stride: Triple = 1,
        padding: Triple = 0,
        dilation: Triple = 1,
        bias: bool = True,
    ):
        kernel = _triple(kernel_size)
        fan_in = in_channels * int(np.prod(kernel))
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.stride = _triple(stride)
        self.padding = _triple(padding)
        self.dilation = _triple(dilation)
        self.weight = Parameter(_uniform(rng, (out_channels, in_channels) + kernel, fan_in))
        self.bias = Parameter(_uniform(rng, (out_channels,), fan_in)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return conv3d(x, self.weight, self.bias, self.stride, self.padding, self.dilation)


class ConvTranspose3d(Module):
    """Transposed 3D convolution layer (learned upsampling)"""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: Triple,
        rng: np.random.Generator,
        stride: Triple = 1,
        padding: Triple = 0,
        bias: bool = True,
    ):
        kernel = _triple(kernel_size)
        fan_in = in_channels * int(np.prod(kernel))
        self.stride = _triple(stride)
        self.padding = _triple(padding)
        self.weight = Parameter(_uniform(rng, (in_channels, out_channels) + kernel, fan_in))
        self.bias = Parameter(_uniform(rng, (out_channels,), fan_in)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return conv_transpose3d(x, self.weight, self.bias, self.stride, self.padding)


class LayerNorm(Module):
    """Layer normalization over the last axis with affine parameters"""

    def __init__(self, features: int, eps: float = 1e-5):
        self.eps = eps
        self.weight = Parameter(np.ones(features))
        self.bias = Parameter(np.zeros(features))

    def forward(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.eps) * self.weight + self.bias


class BatchNorm3d(Module):
    """Batch normalization over (B, D, H, W) per channel"""

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1):
        self.eps = eps
        self.momentum = momentum
        self.weight = Parameter(np.ones(channels))
        self.bias = Parameter(np.zeros(channels))
        self.running_mean = Buffer(np.zeros(channels))
        self.running_var = Buffer(np.ones(channels))

    def forward(self, x: Tensor) -> Tensor:
        axes = (0, 2, 3, 4)
        shape = (1, -1, 1, 1, 1)
        if self.training:
            mu = F.mean(x, axis=axes, keepdims=True)
            centered = x - mu
            var = F.mean(centered * centered, axis=axes, keepdims=True)
            count = x.size // x.shape[1]
            unbiased = var.data.reshape(-1) * count / max(count - 1, 1)
            m = self.momentum
            self.running_mean.assign((1 - m) * self.running_mean.data + m * mu.data.reshape(-1))
            self.running_var.assign((1 - m) * self.running_var.data + m * unbiased)
            normed = centered * F.power(var + self.eps, -0.5)
        else:
            mu = self.running_mean.data.reshape(shape)
            inv_std = 1.0 / np.sqrt(self.running_var.data.reshape(shape) + self.eps)
            normed = (x - mu) * inv_std
        return normed * F.reshape(self.weight, shape) + F.reshape(self.bias, shape)


class GELU(Module):
    def forward(self, x: Tensor) -> Tensor:
        return F.gelu(x)


class ReLU(Module):
    def forward(self, x: Tensor) -> Tensor:
        return F.relu(x)
