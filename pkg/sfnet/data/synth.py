"""Synthetic co-registered HSI + auxiliary scene.

Classes come in pairs: both members of a pair share one spectral bump, the second at a
slightly lower amplitude, and differ mainly in the auxiliary level, while the auxiliary
level alone repeats across pairs. Under the default noise the amplitude gap stays below
the noise of an 11x11 patch mean, so a pixel is identifiable only from both sources.
"""
from __future__ import annotations

import logging
import math

import numpy as np

from ..errors import ConfigurationError
from .raster import RasterPair

logger = logging.getLogger("sfnet.data")

AUX_LEVELS = (0.2, 0.8)
PAIR_AMPLITUDE_GAP = 0.001
TEXTURE_AMPLITUDE = 0.1
TEXTURE_PERIOD = 8.0
MIN_CELL = 2


def _grid(n_classes: int, height: int, width: int) -> tuple[int, int]:
    rows = math.ceil(math.sqrt(n_classes))
    cols = math.ceil(n_classes / rows)
    if height // rows < MIN_CELL or width // cols < MIN_CELL:
        raise ConfigurationError(
            f"cannot pack {n_classes} class regions into {height}x{width} "
            f"(grid {rows}x{cols} needs cells of at least {MIN_CELL}x{MIN_CELL})"
        )
    return rows, cols


def _label_map(n_classes: int, height: int, width: int, rng: np.random.Generator) -> np.ndarray:
    rows, cols = _grid(n_classes, height, width)
    cells = rows * cols
    classes = np.concatenate([
        np.arange(1, n_classes + 1),
        rng.integers(1, n_classes + 1, size=cells - n_classes),
    ])
    classes = rng.permutation(classes)
    row_edges = np.linspace(0, height, rows + 1).round().astype(int)
    col_edges = np.linspace(0, width, cols + 1).round().astype(int)
    labels = np.zeros((height, width), dtype=np.uint16)
    for i in range(rows):
        for j in range(cols):
            labels[row_edges[i]:row_edges[i + 1], col_edges[j]:col_edges[j + 1]] = classes[i * cols + j]
    return labels


def spectral_signatures(n_classes: int, bands: int) -> np.ndarray:
    """n_classes × bands Gaussian bumps; classes 2k+1 and 2k+2 share a bump position."""
    groups = math.ceil(n_classes / 2)
    sigma = max(bands / (3.0 * groups), 1.0)
    axis = np.arange(bands, dtype=np.float64)
    sig = np.empty((n_classes, bands))
    for c in range(n_classes):
        center = (c // 2 + 0.5) * bands / groups
        amplitude = 1.0 - PAIR_AMPLITUDE_GAP * (c % 2)
        sig[c] = amplitude * np.exp(-0.5 * ((axis - center) / sigma) ** 2)
    return sig


def aux_levels(n_classes: int, channels: int) -> np.ndarray:
    """n_classes × channels mean levels; odd channels carry the complementary level."""
    levels = np.empty((n_classes, channels))
    for c in range(n_classes):
        base = AUX_LEVELS[c % 2]
        for j in range(channels):
            levels[c, j] = base if j % 2 == 0 else 1.0 - base
    return levels


def synth_generate(
    n_classes: int,
    height: int,
    width: int,
    bands: int,
    aux_channels: int,
    seed: int,
    noise: float = 0.05,
) -> RasterPair:
    if n_classes < 2:
        raise ConfigurationError(f"synthetic scene needs at least 2 classes, got {n_classes}")
    if bands < 1 or aux_channels < 1:
        raise ConfigurationError(f"need at least one band and one aux channel, got {bands}/{aux_channels}")
    if noise < 0:
        raise ConfigurationError(f"noise must be non-negative, got {noise}")

    rng = np.random.default_rng(seed)
    labels = _label_map(n_classes, height, width, rng)
    idx = labels.astype(np.int64) - 1

    hsi = spectral_signatures(n_classes, bands)[idx].transpose(2, 0, 1)
    hsi = hsi + rng.normal(0.0, noise, size=hsi.shape)

    yy, xx = np.mgrid[0:height, 0:width]
    aux = aux_levels(n_classes, aux_channels)[idx].transpose(2, 0, 1)
    phase = np.arange(aux_channels)[:, None, None] * (np.pi / 2)
    texture = np.sin(2 * np.pi * xx / TEXTURE_PERIOD + phase) * np.sin(2 * np.pi * yy / TEXTURE_PERIOD)
    aux = aux + TEXTURE_AMPLITUDE * texture + rng.normal(0.0, noise, size=aux.shape)

    names = [f"class {c}" for c in range(1, n_classes + 1)]
    logger.info(
        "synth.generate classes=%d size=%dx%d bands=%d aux=%d seed=%d",
        n_classes, height, width, bands, aux_channels, seed,
    )
    return RasterPair(hsi.astype(np.float32), aux.astype(np.float32), labels, names)
