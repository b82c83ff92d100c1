"""Parameter containers and the layer wrappers shared by both branches.

Initialization (all draws from the caller's :class:`~mmnet.rng.Rng`):

* conv / linear weights: ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``
* biases: zeros (``Conv2d(..., bias=False)`` adds a fixed zero vector instead)
* layer-norm scale/shift: ones / zeros
* embeddings: ``N(0, 1) * 0.02``
"""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from . import tensor as T
from .rng import Rng


def parameter(data, name: str | None = None) -> T.Tensor:
    return T.Tensor(data, requires_grad=True, name=name)


def fan_in_uniform(rng: Rng, shape: tuple, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Attribute-registered tree of parameters and submodules.

    Registration order is assignment order, which fixes parameter naming and
    the checkpoint layout.
    """

    def __init__(self):
        object.__setattr__(self, "_params", OrderedDict())
        object.__setattr__(self, "_modules", OrderedDict())

    def __setattr__(self, name, value):
        if isinstance(value, T.Tensor) and value.requires_grad:
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def add_module(self, name: str, module: "Module") -> None:
        self._modules[name] = module

    def named_parameters(self, prefix: str = ""):
        for name, p in self._params.items():
            yield prefix + name, p
        for name, m in self._modules.items():
            yield from m.named_parameters(prefix + name + ".")

    def parameters(self) -> list:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        self._items = []
        for m in modules:
            self.append(m)

    def append(self, m: Module) -> None:
        self.add_module(str(len(self._items)), m)
        self._items.append(m)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


class Conv2d(Module):
    def __init__(self, rng: Rng, c_in: int, c_out: int, k: int, stride: int = 1, padding: int = 0,
                 bias: bool = True):
        super().__init__()
        self.stride, self.padding = stride, padding
        self.weight = parameter(fan_in_uniform(rng, (c_out, c_in, k, k), c_in * k * k))
        # without a learnable bias a constant zero vector is added (not a parameter)
        self.bias = parameter(np.zeros(c_out)) if bias else T.Tensor(np.zeros(c_out))

    def forward(self, x):
        return T.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class Linear(Module):
    def __init__(self, rng: Rng, d_in: int, d_out: int):
        super().__init__()
        self.weight = parameter(fan_in_uniform(rng, (d_out, d_in), d_in))
        self.bias = parameter(np.zeros(d_out))

    def forward(self, x):
        return T.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, dim: int, axis: int = -1, eps: float = 1e-5):
        super().__init__()
        self.axis, self.eps = axis, eps
        self.weight = parameter(np.ones(dim))
        self.bias = parameter(np.zeros(dim))

    def forward(self, x):
        return T.layer_norm(x, self.weight, self.bias, axis=self.axis, eps=self.eps)


class MapLayerNorm(Module):
    """Layer norm over a whole ``[C,H,W]`` map with a per-channel affine."""

    def __init__(self, channels: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.weight = parameter(np.ones(channels))
        self.bias = parameter(np.zeros(channels))

    def forward(self, x):
        return T.map_layer_norm(x, self.weight, self.bias, eps=self.eps)
