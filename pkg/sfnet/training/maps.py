"""Classification-map export as binary portable pixmaps."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from ..data.raster import RasterPair
from ..model.backbone import SfNetModel
from .trainer import build_dataset, predict

logger = logging.getLogger("sfnet.train")

UNLABELED = (0, 0, 0)

# Colors for classes 1..20, in order.
PALETTE: tuple[tuple[int, int, int], ...] = (
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200), (245, 130, 48),
    (145, 30, 180), (70, 240, 240), (240, 50, 230), (210, 245, 60), (250, 190, 212),
    (0, 128, 128), (220, 190, 255), (170, 110, 40), (255, 250, 200), (128, 0, 0),
    (170, 255, 195), (128, 128, 0), (255, 215, 180), (0, 0, 128), (128, 128, 128),
)


def class_color(label: int) -> tuple[int, int, int]:
    """Class 0 is black; classes past the palette wrap around it."""
    if label <= 0:
        return UNLABELED
    return PALETTE[(label - 1) % len(PALETTE)]


def encode_ppm(labels: np.ndarray) -> bytes:
    """P6 image coloring an H×W map of 1-based classes (0 = black)."""
    h, w = labels.shape
    table = np.array((UNLABELED, *PALETTE), dtype=np.uint8)
    idx = np.where(labels > 0, (labels.astype(np.int64) - 1) % len(PALETTE) + 1, 0)
    return f"P6\n{w} {h}\n255\n".encode("ascii") + table[idx].tobytes()


def classify_raster(model: SfNetModel, raster: RasterPair, workers: int = 1) -> np.ndarray:
    """H×W map of predicted 1-based classes at labeled pixels, 0 elsewhere."""
    dataset = build_dataset(model, raster)
    samples = dataset.samples()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            predicted = list(pool.map(lambda s: predict(model, s), samples))
    else:
        predicted = [predict(model, s) for s in samples]
    out = np.zeros(raster.labels.shape, dtype=np.uint16)
    for sample, cls in zip(samples, predicted):
        out[sample.row, sample.col] = cls + 1
    return out


def export_map(model: SfNetModel, raster: RasterPair, path: str | Path, workers: int = 1) -> np.ndarray:
    predicted = classify_raster(model, raster, workers)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_ppm(predicted))
    logger.info("map.write path=%s size=%dx%d labeled=%d", path, raster.height, raster.width, int((predicted > 0).sum()))
    return predicted
