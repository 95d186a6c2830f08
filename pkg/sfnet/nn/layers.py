"""Parameter containers, Xavier initialization and tensor enumeration."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Any, Iterator, Sequence

import numpy as np

from ..tensor.core import Precision, Tensor
from ..tensor.ops import add, gelu, layer_norm, matmul


@dataclass
class Linear:
    weight: Tensor  # in × out
    bias: Tensor  # out

    def __call__(self, x: Tensor) -> Tensor:
        return add(matmul(x, self.weight), self.bias)


@dataclass
class LayerNormParams:
    gamma: Tensor
    beta: Tensor
    eps: float = 1e-5

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta, self.eps)


@dataclass
class FeedForward:
    fc1: Linear
    fc2: Linear

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(gelu(self.fc1(x)))


class Initializer:
    """Deterministic per-seed parameter factory.

    Weights are drawn uniform in ±sqrt(6 / (fan_in + fan_out)); biases and
    layer-norm shifts start at zero, layer-norm scales at one.
    """

    def __init__(self, seed: int, precision: Precision | str = Precision.STANDARD, ln_eps: float = 1e-5):
        self._rng = np.random.default_rng(seed)
        self._precision = Precision(precision)
        self._ln_eps = ln_eps

    @property
    def precision(self) -> Precision:
        return self._precision

    def param(self, data: np.ndarray) -> Tensor:
        return Tensor(data, requires_grad=True, precision=self._precision)

    def xavier(self, shape: Sequence[int], fan_in: int, fan_out: int, gain: float = 1.0) -> Tensor:
        bound = gain * math.sqrt(6.0 / (fan_in + fan_out))
        return self.param(self._rng.uniform(-bound, bound, size=tuple(shape)))

    def zeros(self, shape: Sequence[int]) -> Tensor:
        return self.param(np.zeros(tuple(shape)))

    def constant(self, shape: Sequence[int], value: float) -> Tensor:
        return self.param(np.full(tuple(shape), value))

    def linear(self, n_in: int, n_out: int, gain: float = 1.0) -> Linear:
        return Linear(self.xavier((n_in, n_out), n_in, n_out, gain), self.zeros((n_out,)))

    def layer_norm(self, width: int) -> LayerNormParams:
        return LayerNormParams(self.constant((width,), 1.0), self.zeros((width,)), self._ln_eps)

    def feed_forward(self, width: int, hidden: int) -> FeedForward:
        return FeedForward(self.linear(width, hidden), self.linear(hidden, width))

    def conv_kernels(self, filters: int, channels: int, ksize: Sequence[int]) -> Tensor:
        receptive = math.prod(ksize)
        return self.xavier((filters, channels, *ksize), channels * receptive, filters * receptive)


def named_tensors(obj: Any, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
    """Walk dataclass fields and lists, yielding (dotted name, tensor) in declaration order."""
    if isinstance(obj, Tensor):
        yield prefix, obj
    elif dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        for f in dataclasses.fields(obj):
            if f.metadata.get("skip"):
                continue
            name = f"{prefix}.{f.name}" if prefix else f.name
            yield from named_tensors(getattr(obj, f.name), name)
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            yield from named_tensors(item, f"{prefix}.{i}" if prefix else str(i))


def zero_linear(layer: Linear) -> None:
    layer.weight.assign(np.zeros(layer.weight.shape))
    layer.bias.assign(np.zeros(layer.bias.shape))
