"""Differentiable forward ops over Tensor."""
from __future__ import annotations

import math
from typing import Any, Sequence

import numpy as np

from ..errors import ContractError, DegenerateRowError, ShapeError
from .core import Tensor, check_precision

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_K = 0.044715


def _lift(value: Any, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value), precision=like.precision)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to an operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"{op}: shapes {list(a.shape)} and {list(b.shape)} do not broadcast") from exc


def add(a: Any, b: Any) -> Tensor:
    if not isinstance(a, Tensor):
        a = _lift(a, b)
    b = _lift(b, a)
    _broadcast_shape(a, b, "add")

    def backward(g: np.ndarray):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor.make_result(a.data + b.data, (a, b), backward, "add")


def sub(a: Any, b: Any) -> Tensor:
    if not isinstance(a, Tensor):
        a = _lift(a, b)
    b = _lift(b, a)
    _broadcast_shape(a, b, "sub")

    def backward(g: np.ndarray):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor.make_result(a.data - b.data, (a, b), backward, "sub")


def mul(a: Any, b: Any) -> Tensor:
    if not isinstance(a, Tensor):
        a = _lift(a, b)
    b = _lift(b, a)
    _broadcast_shape(a, b, "mul")

    def backward(g: np.ndarray):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor.make_result(a.data * b.data, (a, b), backward, "mul")


def scale(a: Tensor, factor: float) -> Tensor:
    factor = float(factor)

    def backward(g: np.ndarray):
        return (g * factor,)

    return Tensor.make_result(a.data * factor, (a,), backward, "scale")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {list(a.shape)} x {list(b.shape)}")
    check_precision(a, b)

    def backward(g: np.ndarray):
        return g @ b.data.T, a.data.T @ g

    return Tensor.make_result(a.data @ b.data, (a, b), backward, "matmul")


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {list(a.shape)}")

    def backward(g: np.ndarray):
        return (g.T,)

    return Tensor.make_result(a.data.T, (a,), backward, "transpose")


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if math.prod(shape) != a.size:
        raise ShapeError(f"cannot reshape {list(a.shape)} into {list(shape)}")
    original = a.shape

    def backward(g: np.ndarray):
        return (g.reshape(original),)

    return Tensor.make_result(a.data.reshape(shape), (a,), backward, "reshape")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ContractError("concat needs at least one tensor")
    check_precision(*tensors)
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: incompatible shapes {[list(t.shape) for t in tensors]}") from exc
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g: np.ndarray):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor.make_result(out, tuple(tensors), backward, "concat")


def total(a: Tensor) -> Tensor:
    """Sum of all entries as a scalar tensor."""
    shape = a.shape

    def backward(g: np.ndarray):
        return (np.broadcast_to(g, shape).copy(),)

    return Tensor.make_result(np.asarray(a.data.sum()), (a,), backward, "sum")


def mean(a: Tensor, axis: int) -> Tensor:
    extent = a.shape[axis]
    shape = a.shape

    def backward(g: np.ndarray):
        return (np.broadcast_to(np.expand_dims(g, axis) / extent, shape).copy(),)

    return Tensor.make_result(a.data.mean(axis=axis), (a,), backward, "mean")


def relu(a: Tensor) -> Tensor:
    positive = a.data > 0

    def backward(g: np.ndarray):
        return (np.where(positive, g, 0.0),)

    return Tensor.make_result(np.where(positive, a.data, 0.0), (a,), backward, "relu")


def gelu(a: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    x = a.data
    t = np.tanh(_GELU_C * (x + _GELU_K * x * x * x))
    out = 0.5 * x * (1.0 + t)

    def backward(g: np.ndarray):
        dt = (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * _GELU_K * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * dt),)

    return Tensor.make_result(out, (a,), backward, "gelu")


def masked_fill(a: Tensor, keep: np.ndarray, value: float) -> Tensor:
    """Keep entries where ``keep`` holds, replace the rest with ``value``.

    The mask is a constant: no gradient reaches masked entries.
    """
    keep = np.asarray(keep, dtype=bool)
    if keep.shape != a.shape:
        raise ShapeError(f"mask shape {list(keep.shape)} != tensor shape {list(a.shape)}")

    def backward(g: np.ndarray):
        return (np.where(keep, g, 0.0),)

    return Tensor.make_result(np.where(keep, a.data, value), (a,), backward, "masked_fill")


def row_softmax(x: Tensor) -> Tensor:
    """Row-wise softmax; sentinel entries map to exactly 0."""
    if x.ndim != 2:
        raise ShapeError(f"row_softmax expects a matrix, got shape {list(x.shape)}")
    data = x.data
    keep = data > x.precision.sentinel
    live = keep.any(axis=1)
    if not live.all():
        rows = np.flatnonzero(~live).tolist()
        raise DegenerateRowError(f"row_softmax: rows {rows} are fully masked")
    row_max = np.where(keep, data, -np.inf).max(axis=1, keepdims=True)
    shifted = np.full_like(data, -np.inf)
    np.subtract(data, row_max, out=shifted, where=keep)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def backward(g: np.ndarray):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return Tensor.make_result(y, (x,), backward, "row_softmax")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    if x.ndim != 2:
        raise ShapeError(f"layer_norm expects N×D input, got {list(x.shape)}")
    d = x.shape[1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(
            f"layer_norm: gamma {list(gamma.shape)} / beta {list(beta.shape)} do not match width {d}"
        )
    if eps <= 0:
        raise ContractError(f"layer_norm eps must be positive, got {eps}")
    check_precision(x, gamma, beta)
    mu = x.data.mean(axis=1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + float(eps))
    xhat = centered * inv
    out = xhat * gamma.data + beta.data

    def backward(g: np.ndarray):
        dxhat = g * gamma.data
        dx = (inv / d) * (
            d * dxhat
            - dxhat.sum(axis=1, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=1, keepdims=True)
        )
        return dx, (g * xhat).sum(axis=0), g.sum(axis=0)

    return Tensor.make_result(out, (x, gamma, beta), backward, "layer_norm")


def weighted_sum(tensors: Sequence[Tensor], weights: Tensor) -> Tensor:
    """Σ_i weights[i] · tensors[i] for same-shape tensors."""
    if weights.shape != (len(tensors),):
        raise ShapeError(f"weighted_sum: {len(tensors)} tensors but weights shape {list(weights.shape)}")
    shape = tensors[0].shape
    for t in tensors:
        if t.shape != shape:
            raise ShapeError(f"weighted_sum: mismatched shapes {list(shape)} and {list(t.shape)}")
    check_precision(weights, *tensors)
    w = weights.data
    out = np.zeros(shape, dtype=w.dtype)
    for i, t in enumerate(tensors):
        out = out + w[i] * t.data

    def backward(g: np.ndarray):
        dw = np.array([(g * t.data).sum() for t in tensors], dtype=w.dtype)
        return (dw, *(g * w[i] for i in range(len(tensors))))

    return Tensor.make_result(out, (weights, *tensors), backward, "weighted_sum")
