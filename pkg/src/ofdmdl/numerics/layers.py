"""Parameter containers for the layers the two networks use."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Module:
    """Minimal module: attribute-walked parameters, buffers and a train flag."""

    training = True

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Tensor) and val.requires_grad:
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(name + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, np.ndarray) and key.startswith("running_"):
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_buffers(name + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_buffers(f"{name}.{i}.")

    def parameters(self) -> dict[str, Tensor]:
        return dict(self.named_parameters())

    def modules(self) -> Iterator["Module"]:
        yield self
        for val in vars(self).values():
            if isinstance(val, Module):
                yield from val.modules()
            elif isinstance(val, (list, tuple)):
                for item in val:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {k: v.data.copy() for k, v in self.named_parameters()}
        state.update({k: v.copy() for k, v in self.named_buffers()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        missing = (set(params) | set(buffers)) - set(state)
        if missing:
            raise KeyError(f"state is missing entries: {sorted(missing)[:5]}")
        for k, p in params.items():
            if state[k].shape != p.shape:
                raise ValueError(f"{k}: shape {state[k].shape} != {p.shape}")
            p.data[...] = state[k]
        for k, b in buffers.items():
            b[...] = state[k]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class Conv2d(Module):
    def __init__(self, cin: int, cout: int, rng: np.random.Generator, kernel: int = 3,
                 stride: int = 1, pad: int | None = None, bias: bool = True):
        self.stride = stride
        self.pad = (kernel - 1) // 2 if pad is None else pad
        self.weight = _uniform(rng, (kernel, kernel, cin, cout), kernel * kernel * cin)
        self.bias = Tensor(np.zeros(cout), requires_grad=True) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.bias, stride=self.stride, pad=self.pad)

    def upsampled(self, x: Tensor) -> Tensor:
        """This conv applied to ``upsample_nearest(x, 2)``."""
        if self.weight.shape[:2] == (3, 3) and self.stride == 1 and self.pad == 1 and x.ndim == 4:
            return T.upsample2_conv2d(x, self.weight, self.bias)
        return self(T.upsample_nearest(x, 2))


class BatchNorm2d(Module):
    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        self.momentum = momentum
        self.eps = eps
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta = Tensor(np.zeros(channels), requires_grad=True)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def forward(self, x: Tensor) -> Tensor:
        return T.batchnorm2d(x, self.gamma, self.beta, self.running_mean, self.running_var,
                             training=self.training, momentum=self.momentum, eps=self.eps)


class Linear(Module):
    def __init__(self, din: int, dout: int, rng: np.random.Generator, bias: bool = True):
        self.weight = _uniform(rng, (din, dout), din)
        self.bias = Tensor(np.zeros(dout), requires_grad=True) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return T.linear(x, self.weight, self.bias)


class ConvBnRelu(Module):
    def __init__(self, cin: int, cout: int, rng: np.random.Generator, stride: int = 1):
        # a bias ahead of batch norm is cancelled by the mean subtraction
        self.conv = Conv2d(cin, cout, rng, stride=stride, bias=False)
        self.bn = BatchNorm2d(cout)

    def forward(self, x: Tensor) -> Tensor:
        return T.relu(self.bn(self.conv(x)))

    def upsampled(self, x: Tensor) -> Tensor:
        return T.relu(self.bn(self.conv.upsampled(x)))
