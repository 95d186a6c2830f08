"""Multi-branch top-k sparse self-attention and the Sparse Transformer Block."""
from __future__ import annotations

import math
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from ..errors import ConfigurationError, ContractError, ShapeError
from ..nn.layers import FeedForward, Initializer, LayerNormParams, Linear
from ..tensor.core import Tensor
from ..tensor.ops import add, masked_fill, matmul, row_softmax, scale, transpose, weighted_sum

DEFAULT_ALPHAS: tuple[float, ...] = (1 / 2, 2 / 3, 3 / 4, 4 / 5)

_selection_trace: ContextVar[list[np.ndarray] | None] = ContextVar("sfnet_selection_trace", default=None)


@dataclass
class SparseAttentionParams:
    w_q: Linear
    w_k: Linear
    w_v: Linear
    w_o: Linear
    branch_weights: Tensor  # Wt_γ, one scalar per branch
    alphas: tuple[float, ...] = field(default=DEFAULT_ALPHAS, metadata={"skip": True})

    def __post_init__(self):
        self.alphas = tuple(float(a) for a in self.alphas)
        validate_alphas(self.alphas)
        if self.branch_weights.shape != (len(self.alphas),):
            raise ConfigurationError(
                f"{len(self.alphas)} sparsity branches but branch_weights shape {list(self.branch_weights.shape)}"
            )

    @property
    def width(self) -> int:
        return self.w_q.weight.shape[0]

    @property
    def scale(self) -> float:
        return 1.0 / math.sqrt(self.width)


@dataclass
class StbParams:
    attn: SparseAttentionParams
    ln1: LayerNormParams
    ln2: LayerNormParams
    ffn: FeedForward

    def __post_init__(self):
        width = self.attn.width
        hidden = self.ffn.fc1.weight.shape[1]
        if hidden < width:
            raise ConfigurationError(f"FFN width {hidden} smaller than token width {width}")


def validate_alphas(alphas: Sequence[float]) -> None:
    if not alphas:
        raise ConfigurationError("at least one sparsity level is required")
    for a in alphas:
        if not 0.0 < a <= 1.0:
            raise ConfigurationError(f"sparsity fraction {a} outside (0, 1]")
    for lo, hi in zip(alphas, alphas[1:]):
        if hi <= lo:
            raise ConfigurationError(f"sparsity fractions must increase strictly, got {list(alphas)}")


def sparsity_levels(n_tokens: int, alphas: Sequence[float]) -> list[int]:
    """k_γ = floor(α_γ · N), clamped to N."""
    if n_tokens < 2:
        raise ConfigurationError(f"sparse attention needs at least 2 tokens, got {n_tokens}")
    levels = []
    for a in alphas:
        # Exact rational arithmetic; float products can land just below an integer.
        k = min(math.floor(Fraction(a).limit_denominator(1_000_000) * n_tokens), n_tokens)
        if k < 1:
            raise ConfigurationError(f"sparsity fraction {a} keeps no entries at N={n_tokens}")
        levels.append(k)
    return levels


def attention_scores(q: Tensor, k: Tensor) -> Tensor:
    """Score = Q·Kᵀ / √D."""
    if q.ndim != 2 or k.ndim != 2 or q.shape[1] != k.shape[1]:
        raise ShapeError(f"attention_scores: q {list(q.shape)} and k {list(k.shape)} disagree on width")
    return scale(matmul(q, transpose(k)), 1.0 / math.sqrt(q.shape[1]))


def top_k_mask(score: np.ndarray, k: int) -> np.ndarray:
    """Boolean mask of the k largest entries per row; ties keep the lowest column index."""
    order = np.argsort(-score, axis=1, kind="stable")[:, :k]
    keep = np.zeros(score.shape, dtype=bool)
    np.put_along_axis(keep, order, True, axis=1)
    return keep


def selection_margin(score: np.ndarray, k: int) -> float:
    """Smallest gap between the k-th and (k+1)-th largest score over all rows."""
    n = score.shape[1]
    if k >= n:
        return math.inf
    ranked = -np.sort(-score, axis=1)
    return float((ranked[:, k - 1] - ranked[:, k]).min())


@contextmanager
def selection_trace() -> Iterator[list[np.ndarray]]:
    """Collect every top-k mask built while the block is active."""
    masks: list[np.ndarray] = []
    token = _selection_trace.set(masks)
    try:
        yield masks
    finally:
        _selection_trace.reset(token)


def sparse_row_mask(score: Tensor, k: int) -> Tensor:
    if score.ndim != 2:
        raise ShapeError(f"sparse_row_mask expects a matrix, got {list(score.shape)}")
    n = score.shape[1]
    if not 1 <= k <= n:
        raise ContractError(f"top-k size {k} outside [1, {n}]")
    keep = top_k_mask(score.data, k)
    trace = _selection_trace.get()
    if trace is not None:
        trace.append(keep)
    return masked_fill(score, keep, score.precision.sentinel)


def _project(x: Tensor, p: SparseAttentionParams) -> tuple[Tensor, Tensor, Tensor]:
    if x.ndim != 2 or x.shape[1] != p.width:
        raise ShapeError(f"attention input {list(x.shape)} does not match width {p.width}")
    return p.w_q(x), p.w_k(x), p.w_v(x)


def attention_maps(x: Tensor, p: SparseAttentionParams) -> list[Tensor]:
    """The per-branch row-stochastic matrices M_γ."""
    q, k, _ = _project(x, p)
    score = attention_scores(q, k)
    return [row_softmax(sparse_row_mask(score, kg)) for kg in sparsity_levels(x.shape[0], p.alphas)]


def sparse_attention(x: Tensor, p: SparseAttentionParams) -> Tensor:
    """Z = Σ_γ Wt_γ · M_γ V, followed by the output projection."""
    q, k, v = _project(x, p)
    score = attention_scores(q, k)
    branches = [
        matmul(row_softmax(sparse_row_mask(score, kg)), v)
        for kg in sparsity_levels(x.shape[0], p.alphas)
    ]
    return p.w_o(weighted_sum(branches, p.branch_weights))


def dense_attention(x: Tensor, p: SparseAttentionParams) -> Tensor:
    """Plain scaled dot-product attention with the same projections."""
    q, k, v = _project(x, p)
    return p.w_o(matmul(row_softmax(attention_scores(q, k)), v))


def stb_forward(x: Tensor, p: StbParams) -> Tensor:
    """Pre-norm block: y = x + SA(LN₁ x); out = y + FFN(LN₂ y)."""
    y = add(x, sparse_attention(p.ln1(x), p.attn))
    return add(y, p.ffn(p.ln2(y)))


def init_sparse_attention(
    init: Initializer, width: int, alphas: Sequence[float] = DEFAULT_ALPHAS, out_gain: float = 0.1
) -> SparseAttentionParams:
    n = len(alphas)
    return SparseAttentionParams(
        w_q=init.linear(width, width),
        w_k=init.linear(width, width),
        w_v=init.linear(width, width),
        w_o=init.linear(width, width, gain=out_gain),
        branch_weights=init.constant((n,), 1.0 / n),
        alphas=tuple(alphas),
    )


def init_stb(
    init: Initializer, width: int, alphas: Sequence[float] = DEFAULT_ALPHAS, ffn_multiplier: int = 2
) -> StbParams:
    return StbParams(
        attn=init_sparse_attention(init, width, alphas),
        ln1=init.layer_norm(width),
        ln2=init.layer_norm(width),
        ffn=init.feed_forward(width, ffn_multiplier * width),
    )
