"""SF-Net assembly: conv stems, three STBs per stream, CAFB and the classifier head."""
from __future__ import annotations

import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from ..attention.fusion import CafbParams, cafb_forward, init_cafb
from ..attention.sparse import StbParams, init_stb, stb_forward
from ..config import ModelConfig
from ..errors import ShapeError
from ..nn.layers import Initializer, Linear, named_tensors, zero_linear
from ..tensor.conv import conv2d, conv3d
from ..tensor.core import Tensor
from ..tensor.ops import add, gelu, mean, reshape, transpose
from .pca import PcaModel

logger = logging.getLogger("sfnet.model")


@dataclass
class ConvStem:
    kernels: Tensor
    bias: Tensor  # [filters]

    @property
    def filters(self) -> int:
        return self.kernels.shape[0]

    @property
    def channels(self) -> int:
        return self.kernels.shape[1]


@dataclass
class SfNetModel:
    config: ModelConfig = field(metadata={"skip": True})
    pca: PcaModel = field(metadata={"skip": True})
    hsi_stem: ConvStem
    aux_stem: ConvStem
    hsi_proj: Linear
    aux_proj: Linear
    stb_h: list[StbParams]
    stb_x: list[StbParams]
    cafb: CafbParams
    classifier: Linear
    pos_h: Tensor | None = None
    pos_x: Tensor | None = None
    # Stratified split the weights were trained on, restored from checkpoints for evaluation.
    split_seed: int | None = field(default=None, metadata={"skip": True})
    train_fraction: float | None = field(default=None, metadata={"skip": True})

    @property
    def aux_channels(self) -> int:
        return self.aux_stem.channels

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        return list(named_tensors(self))

    def parameters(self) -> list[Tensor]:
        return [t for _, t in named_tensors(self)]


def build_model(config: ModelConfig, pca: PcaModel, aux_channels: int) -> SfNetModel:
    """Fresh model with deterministic per-seed initialization."""
    if pca.r != config.pca_components:
        raise ShapeError(f"PCA keeps {pca.r} components but config expects {config.pca_components}")
    init = Initializer(config.seed, config.precision, config.ln_eps)
    d = config.token_dim
    kh, ka = config.hsi_stem_kernel, config.aux_stem_kernel
    fh, fa = config.hsi_stem_filters, config.aux_stem_filters
    n = config.n_tokens

    hsi_stem = ConvStem(init.conv_kernels(fh, 1, (kh, kh, kh)), init.zeros((fh,)))
    aux_stem = ConvStem(init.conv_kernels(fa, aux_channels, (ka, ka)), init.zeros((fa,)))
    hsi_proj = init.linear(fh * config.pca_components, d)
    aux_proj = init.linear(fa, d)
    stb_h = [init_stb(init, d, config.alphas, config.ffn_multiplier) for _ in range(config.stb_depth)]
    stb_x = [init_stb(init, d, config.alphas, config.ffn_multiplier) for _ in range(config.stb_depth)]
    cafb = init_cafb(init, d, config.ffn_multiplier, config.paper_literal_eq8)
    classifier = init.linear(2 * d, config.n_classes)
    pos_h = pos_x = None
    if config.positional_embedding:
        pos_h = init.xavier((n, d), n, d, gain=0.1)
        pos_x = init.xavier((n, d), n, d, gain=0.1)

    model = SfNetModel(
        config=config,
        pca=pca.astype(config.precision.dtype),
        hsi_stem=hsi_stem,
        aux_stem=aux_stem,
        hsi_proj=hsi_proj,
        aux_proj=aux_proj,
        stb_h=stb_h,
        stb_x=stb_x,
        cafb=cafb,
        classifier=classifier,
        pos_h=pos_h,
        pos_x=pos_x,
    )
    logger.debug(
        "model.build tokens=%d width=%d tensors=%d scalars=%d",
        n, d, len(model.named_tensors()), sum(t.size for t in model.parameters()),
    )
    return model


@contextmanager
def _stage(name: str) -> Iterator[None]:
    try:
        yield
    except ShapeError as exc:
        raise ShapeError(f"{name}: {exc}") from exc


def hsi_tokens(model: SfNetModel, hsi_patch: Tensor) -> Tensor:
    """3-D conv over (reduced bands × p × p), flattened to p² tokens, projected to D."""
    cfg = model.config
    p, r = cfg.patch_size, cfg.pca_components
    with _stage("hsi stem"):
        if hsi_patch.shape != (r, p, p):
            raise ShapeError(f"expected patch {[r, p, p]}, got {list(hsi_patch.shape)}")
        stem = model.hsi_stem
        f = conv3d(reshape(hsi_patch, (1, r, p, p)), stem.kernels, padding="same")
        f = gelu(add(f, reshape(stem.bias, (stem.filters, 1, 1, 1))))
        tokens = transpose(reshape(f, (stem.filters * r, p * p)))
    with _stage("hsi projection"):
        t = model.hsi_proj(tokens)
        return add(t, model.pos_h) if model.pos_h is not None else t


def aux_tokens(model: SfNetModel, aux_patch: Tensor) -> Tensor:
    """2-D conv over (channels × p × p), flattened to p² tokens, projected to D."""
    p = model.config.patch_size
    with _stage("aux stem"):
        if aux_patch.shape != (model.aux_channels, p, p):
            raise ShapeError(f"expected patch {[model.aux_channels, p, p]}, got {list(aux_patch.shape)}")
        stem = model.aux_stem
        f = conv2d(aux_patch, stem.kernels, padding="same")
        f = gelu(add(f, reshape(stem.bias, (stem.filters, 1, 1))))
        tokens = transpose(reshape(f, (stem.filters, p * p)))
    with _stage("aux projection"):
        t = model.aux_proj(tokens)
        return add(t, model.pos_x) if model.pos_x is not None else t


def classify_tokens(model: SfNetModel, fused: Tensor) -> Tensor:
    """Mean-pool the fused N×2D tokens and apply the linear head."""
    with _stage("classifier"):
        pooled = reshape(mean(fused, axis=0), (1, fused.shape[1]))
        return reshape(model.classifier(pooled), (model.config.n_classes,))


def sfnet_forward(model: SfNetModel, hsi_patch: Tensor, aux_patch: Tensor) -> Tensor:
    th = hsi_tokens(model, hsi_patch)
    tx = aux_tokens(model, aux_patch)
    with _stage("hsi transformer"):
        for block in model.stb_h:
            th = stb_forward(th, block)
    with _stage("aux transformer"):
        for block in model.stb_x:
            tx = stb_forward(tx, block)
    with _stage("fusion"):
        fused = cafb_forward(th, tx, model.cafb)
    return classify_tokens(model, fused)


def as_inputs(model: SfNetModel, hsi: np.ndarray, aux: np.ndarray) -> tuple[Tensor, Tensor]:
    precision = model.config.precision
    return Tensor(hsi, precision=precision), Tensor(aux, precision=precision)


def zero_residual_terminals(model: SfNetModel) -> None:
    """Zero every layer that closes a residual branch, making each block an identity."""
    for block in (*model.stb_h, *model.stb_x):
        zero_linear(block.attn.w_o)
        zero_linear(block.ffn.fc2)
    for layer in (model.cafb.w_vh, model.cafb.w_vx, model.cafb.ffn_h.fc2, model.cafb.ffn_x.fc2):
        zero_linear(layer)
