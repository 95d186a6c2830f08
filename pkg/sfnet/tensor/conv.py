"""2-D and 3-D convolution (cross-correlation, no kernel flip)."""
from __future__ import annotations

import itertools
import math
from typing import Literal

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ContractError, ShapeError
from .core import Tensor, check_precision

Padding = Literal["valid", "same"]


def _pad_amounts(extent: int, kernel: int, stride: int, padding: Padding) -> tuple[int, int]:
    if padding == "valid":
        return 0, 0
    if padding == "same":
        out = math.ceil(extent / stride)
        total = max((out - 1) * stride + kernel - extent, 0)
        return total // 2, total - total // 2
    raise ContractError(f"unknown padding mode '{padding}'")


def _convnd(x: Tensor, kernels: Tensor, stride: int, padding: Padding, nd: int, op: str) -> Tensor:
    if x.ndim != nd + 1 or kernels.ndim != nd + 2:
        raise ShapeError(f"{op}: input {list(x.shape)} / kernels {list(kernels.shape)} have wrong rank")
    if kernels.shape[1] != x.shape[0]:
        raise ShapeError(
            f"{op}: kernels expect {kernels.shape[1]} channels, input has {x.shape[0]} "
            f"(input {list(x.shape)}, kernels {list(kernels.shape)})"
        )
    if stride < 1:
        raise ContractError(f"{op}: stride must be >= 1, got {stride}")
    check_precision(x, kernels)

    spatial = x.shape[1:]
    ksize = kernels.shape[2:]
    pads = [_pad_amounts(n, k, stride, padding) for n, k in zip(spatial, ksize)]
    for n, k, (lo, hi) in zip(spatial, ksize, pads):
        if k > n + lo + hi:
            raise ShapeError(
                f"{op}: kernel {list(ksize)} larger than padded input {list(spatial)} (padding={padding})"
            )

    xp = np.pad(x.data, [(0, 0), *pads])
    windows = sliding_window_view(xp, ksize, axis=tuple(range(1, nd + 1)))
    windows = windows[(slice(None), *([slice(None, None, stride)] * nd))]
    out_spatial = windows.shape[1 : nd + 1]
    w_axes = list(range(1, nd + 2))
    win_axes = [0, *range(nd + 1, 2 * nd + 1)]
    out = np.tensordot(kernels.data, windows, axes=(w_axes, win_axes))
    padded_shape = xp.shape

    def backward(g: np.ndarray):
        g_axes = list(range(1, nd + 1))
        gk = np.tensordot(g, windows, axes=(g_axes, g_axes))
        gxp = np.zeros(padded_shape, dtype=x.data.dtype)
        for offset in itertools.product(*(range(k) for k in ksize)):
            region = (
                slice(None),
                *(slice(o, o + stride * (m - 1) + 1, stride) for o, m in zip(offset, out_spatial)),
            )
            tap = kernels.data[(slice(None), slice(None), *offset)]
            gxp[region] += np.tensordot(tap, g, axes=([0], [0]))
        crop = (slice(None), *(slice(lo, lo + n) for (lo, _), n in zip(pads, spatial)))
        return gxp[crop], gk

    return Tensor.make_result(out, (x, kernels), backward, op)


def conv2d(x: Tensor, kernels: Tensor, stride: int = 1, padding: Padding = "valid") -> Tensor:
    """x: C×H×W, kernels: F×C×kh×kw -> F×H'×W'."""
    return _convnd(x, kernels, stride, padding, nd=2, op="conv2d")


def conv3d(x: Tensor, kernels: Tensor, stride: int = 1, padding: Padding = "valid") -> Tensor:
    """x: C×B×H×W, kernels: F×C×kb×kh×kw -> F×B'×H'×W'."""
    return _convnd(x, kernels, stride, padding, nd=3, op="conv3d")
