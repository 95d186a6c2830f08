"""Converter from numpy array dumps of real multi-source scenes to SFNR.

The Berlin (HSI + SAR) and Houston 2018 (HSI + LiDAR) scenes are not bundled; export
their cubes with any GIS tool to ``.npy`` and pass them here together with a class-name
preset.
"""
from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from ..errors import DataError
from .raster import RasterPair, write_raster

logger = logging.getLogger("sfnet.data")

BERLIN_CLASSES = [
    "Forest", "Residential area", "Industrial area", "Low plants",
    "Soil", "Allotment", "Commercial area", "Water",
]

HOUSTON2018_CLASSES = [
    "Healthy grass", "Stressed grass", "Artificial turf", "Evergreen trees",
    "Deciduous trees", "Bare earth", "Water", "Residential buildings",
    "Non-residential buildings", "Roads", "Sidewalks", "Crosswalks",
    "Major thoroughfares", "Highways", "Railways", "Paved parking lots",
    "Unpaved parking lots", "Cars", "Trains", "Stadium seats",
]

PRESETS = {"berlin": BERLIN_CLASSES, "houston2018": HOUSTON2018_CLASSES}


def _load(path: str | Path, what: str) -> np.ndarray:
    try:
        return np.load(path, allow_pickle=False)
    except ValueError as exc:
        raise DataError(f"{what} {path}: not a plain .npy array ({exc})") from exc


def _planes(arr: np.ndarray, channels_last: bool, what: str) -> np.ndarray:
    if arr.ndim == 2:
        arr = arr[None] if not channels_last else arr[..., None]
    if arr.ndim != 3:
        raise DataError(f"{what} must be 2-D or 3-D, got shape {list(arr.shape)}")
    return np.moveaxis(arr, -1, 0) if channels_last else arr


def convert_arrays(
    hsi_path: str | Path,
    aux_path: str | Path,
    labels_path: str | Path,
    class_names: list[str],
    out: str | Path,
    channels_last: bool = True,
) -> RasterPair:
    """Write an SFNR raster from three ``.npy`` files.

    ``channels_last`` matches the H×W×bands layout most scene exports use; labels are H×W
    with 0 for unlabeled pixels.
    """
    hsi = _planes(_load(hsi_path, "HSI"), channels_last, "HSI")
    aux = _planes(_load(aux_path, "aux"), channels_last, "aux")
    labels = _load(labels_path, "labels")
    if labels.ndim != 2:
        raise DataError(f"labels must be H×W, got shape {list(labels.shape)}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise DataError(f"labels must be integers, got {labels.dtype}")
    if labels.size and int(labels.max()) > 0xFFFF:
        raise DataError(f"label {int(labels.max())} does not fit u16")

    raster = RasterPair(hsi, aux, labels, list(class_names))
    write_raster(raster, out)
    logger.info("convert.done out=%s labeled=%d", out, int((raster.labels > 0).sum()))
    return raster
