"""Layer modules with named parameters and running-statistics buffers."""
from typing import Dict, Iterator, List, Tuple, Union

import numpy as np

from src.autodiff import ops
from src.autodiff.tensor import Parameter, Tensor, get_default_dtype


class Module:
    """Container that discovers parameters, buffers and children by attribute."""

    training = True

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, value in vars(self).items():
            yield from _walk(value, f"{prefix}{name}", "parameters")

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for name, value in vars(self).items():
            if name in getattr(self, "_buffer_names", ()):
                yield f"{prefix}{name}", value
            else:
                yield from _walk(value, f"{prefix}{name}", "buffers")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def children(self) -> Iterator["Module"]:
        for value in vars(self).values():
            if isinstance(value, Module):
                yield value
            elif isinstance(value, (list, tuple)):
                yield from (v for v in value if isinstance(v, Module))

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for child in self.children():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_arrays(self) -> Dict[str, np.ndarray]:
        state = {name: p.data for name, p in self.named_parameters()}
        state.update(dict(self.named_buffers()))
        return state

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _walk(value, name: str, kind: str):
    if kind == "parameters" and isinstance(value, Parameter):
        yield name, value
    elif isinstance(value, Module):
        method = value.named_parameters if kind == "parameters" else value.named_buffers
        yield from method(prefix=f"{name}.")
    elif isinstance(value, (list, tuple)):
        for index, item in enumerate(value):
            yield from _walk(item, f"{name}.{index}", kind)


def he_normal(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / max(fan_in, 1)), size=shape).astype(get_default_dtype())


class Conv2d(Module):
    """Cross-correlation layer; ``padding="same"`` maps H to ceil(H / stride)."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, rng: np.random.Generator,
                 stride: int = 1, dilation: int = 1, padding: Union[int, str] = "same", bias: bool = False):
        self.stride = stride
        self.dilation = dilation
        self.padding = padding
        self.kernel_size = kernel_size
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = Parameter(he_normal(rng, (out_channels, in_channels, kernel_size, kernel_size), fan_in))
        self.bias = Parameter(np.zeros(out_channels)) if bias else None

    def resolve_padding(self, height: int, width: int):
        if self.padding != "same":
            return int(self.padding)
        top, bottom = ops.same_padding(height, self.kernel_size, self.stride, self.dilation)
        left, right = ops.same_padding(width, self.kernel_size, self.stride, self.dilation)
        return top, bottom, left, right

    def forward(self, x: Tensor) -> Tensor:
        pads = self.resolve_padding(x.shape[2], x.shape[3])
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.dilation, pads)


class ConvTranspose2d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, rng: np.random.Generator,
                 stride: int = 2, padding: int = 0, bias: bool = False):
        self.stride = stride
        self.padding = padding
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = Parameter(he_normal(rng, (in_channels, out_channels, kernel_size, kernel_size), fan_in))
        self.bias = Parameter(np.zeros(out_channels)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv_transpose2d(x, self.weight, self.bias, self.stride, self.padding)


class BatchNorm2d(Module):
    _buffer_names = ("running_mean", "running_var")

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        self.momentum = momentum
        self.eps = eps
        self.gamma = Parameter(np.ones(channels))
        self.beta = Parameter(np.zeros(channels))
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def forward(self, x: Tensor) -> Tensor:
        return ops.batchnorm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                             self.training, self.momentum, self.eps)


class ConvBNReLU(Module):
    def __init__(self, conv: Module, channels: int):
        self.conv = conv
        self.bn = BatchNorm2d(channels)

    def forward(self, x: Tensor) -> Tensor:
        return ops.relu(self.bn(self.conv(x)))
