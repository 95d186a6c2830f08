"""Cross-Attention Fusion Block over the HSI and SAR/LiDAR token streams."""
from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import ShapeError
from ..nn.layers import FeedForward, Initializer, LayerNormParams, Linear
from ..tensor.core import Tensor
from ..tensor.ops import add, concat, matmul, row_softmax
from .sparse import attention_scores


@dataclass
class CafbParams:
    ln_h: LayerNormParams
    ln_x: LayerNormParams
    w_qh: Linear
    w_kh: Linear
    w_vh: Linear
    w_qx: Linear
    w_kx: Linear
    w_vx: Linear
    ln2_h: LayerNormParams
    ln2_x: LayerNormParams
    ffn_h: FeedForward
    ffn_x: FeedForward
    # X stream takes the H-stream residual (T_H + T_H') instead of its own.
    paper_literal_eq8: bool = field(default=False, metadata={"skip": True})

    @property
    def width(self) -> int:
        return self.w_qh.weight.shape[0]


def _check_streams(t_h: Tensor, t_x: Tensor, width: int) -> None:
    if t_h.shape != t_x.shape:
        raise ShapeError(f"CAFB streams disagree: HSI {list(t_h.shape)} vs aux {list(t_x.shape)}")
    if t_h.ndim != 2 or t_h.shape[1] != width:
        raise ShapeError(f"CAFB expects N×{width} tokens, got {list(t_h.shape)}")


def cross_attention_weights(t_h: Tensor, t_x: Tensor, p: CafbParams) -> tuple[Tensor, Tensor]:
    """(softmax(Q_X K_Hᵀ/√D), softmax(Q_H K_Xᵀ/√D))."""
    _check_streams(t_h, t_x, p.width)
    a_h = row_softmax(attention_scores(p.w_qx(t_x), p.w_kh(t_h)))
    a_x = row_softmax(attention_scores(p.w_qh(t_h), p.w_kx(t_x)))
    return a_h, a_x


def cross_attention(t_h: Tensor, t_x: Tensor, p: CafbParams) -> tuple[Tensor, Tensor]:
    """T_H' = softmax(Q_X K_Hᵀ/√D) V_H and T_X' = softmax(Q_H K_Xᵀ/√D) V_X."""
    a_h, a_x = cross_attention_weights(t_h, t_x, p)
    return matmul(a_h, p.w_vh(t_h)), matmul(a_x, p.w_vx(t_x))


def cafb_forward(t_h: Tensor, t_x: Tensor, p: CafbParams) -> Tensor:
    _check_streams(t_h, t_x, p.width)
    th1, tx1 = cross_attention(p.ln_h(t_h), p.ln_x(t_x), p)
    res_h = add(t_h, th1)
    res_x = add(t_x, tx1)
    th2 = add(p.ffn_h(p.ln2_h(res_h)), res_h)
    tx2 = add(p.ffn_x(p.ln2_x(res_x)), res_h if p.paper_literal_eq8 else res_x)
    return concat([th2, tx2], axis=1)


def init_cafb(
    init: Initializer, width: int, ffn_multiplier: int = 2, paper_literal_eq8: bool = False
) -> CafbParams:
    hidden = ffn_multiplier * width
    return CafbParams(
        ln_h=init.layer_norm(width),
        ln_x=init.layer_norm(width),
        w_qh=init.linear(width, width),
        w_kh=init.linear(width, width),
        w_vh=init.linear(width, width),
        w_qx=init.linear(width, width),
        w_kx=init.linear(width, width),
        w_vx=init.linear(width, width),
        ln2_h=init.layer_norm(width),
        ln2_x=init.layer_norm(width),
        ffn_h=init.feed_forward(width, hidden),
        ffn_x=init.feed_forward(width, hidden),
        paper_literal_eq8=paper_literal_eq8,
    )
