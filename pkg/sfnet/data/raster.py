"""SFNR raster container.

Layout (little-endian):
    "SFNR" | version u8 | H u32 | W u32 | bands u32 | aux channels u32 | classes u32 | dtype code u8
    | HSI planes (band-sequential, row-major) | aux planes | labels u16 row-major
    | class names (u16 length + utf-8 bytes each)
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..binio import DTYPE_CODES, ByteReader, ByteWriter
from ..errors import DataError, FormatError, ShapeError

logger = logging.getLogger("sfnet.data")

MAGIC = b"SFNR"
VERSION = 1
_PLANES = DTYPE_CODES[0]
_LABELS = np.dtype("<u2")


@dataclass
class RasterPair:
    hsi: np.ndarray  # bands × H × W, float32
    aux: np.ndarray  # channels × H × W, float32
    labels: np.ndarray  # H × W, uint16, 0 = unlabeled
    class_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.hsi = np.asarray(self.hsi, dtype=np.float32)
        self.aux = np.asarray(self.aux, dtype=np.float32)
        self.labels = np.asarray(self.labels)
        if self.hsi.ndim != 3 or self.aux.ndim != 3 or self.labels.ndim != 2:
            raise ShapeError(
                f"raster wants bands×H×W, channels×H×W and H×W labels, got "
                f"{list(self.hsi.shape)}, {list(self.aux.shape)}, {list(self.labels.shape)}"
            )
        if self.hsi.shape[1:] != self.aux.shape[1:] or self.hsi.shape[1:] != self.labels.shape:
            raise ShapeError(
                f"HSI {list(self.hsi.shape[1:])}, aux {list(self.aux.shape[1:])} and labels "
                f"{list(self.labels.shape)} are not co-registered"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() > len(self.class_names)):
            raise DataError(
                f"label values must lie in 0..{len(self.class_names)}, got max {int(self.labels.max())}"
            )
        self.labels = self.labels.astype(np.uint16)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def bands(self) -> int:
        return self.hsi.shape[0]

    @property
    def aux_channels(self) -> int:
        return self.aux.shape[0]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


def encode_raster(raster: RasterPair) -> bytes:
    out = ByteWriter()
    out.raw(MAGIC)
    out.u8(VERSION)
    for extent in (raster.height, raster.width, raster.bands, raster.aux_channels, raster.n_classes):
        out.u32(extent)
    out.u8(0)
    out.array(raster.hsi, _PLANES)
    out.array(raster.aux, _PLANES)
    out.array(raster.labels, _LABELS)
    for name in raster.class_names:
        out.text(name)
    return out.getvalue()


def decode_raster(payload: bytes) -> RasterPair:
    reader = ByteReader(payload, "SFNR raster")
    reader.magic(MAGIC)
    version = reader.u8()
    if version != VERSION:
        raise FormatError(f"SFNR raster: unsupported version {version}")
    h, w, bands, channels, n_classes = (reader.u32() for _ in range(5))
    code = reader.u8()
    if code != 0:
        raise FormatError(f"SFNR raster: unsupported dtype code {code}")
    hsi = reader.array((bands, h, w), _PLANES)
    aux = reader.array((channels, h, w), _PLANES)
    labels = reader.array((h, w), _LABELS)
    names = [reader.text() for _ in range(n_classes)]
    reader.finish()
    return RasterPair(hsi, aux, labels, names)


def write_raster(raster: RasterPair, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = encode_raster(raster)
    path.write_bytes(payload)
    logger.info(
        "raster.write path=%s size=%dx%d bands=%d aux=%d classes=%d",
        path, raster.height, raster.width, raster.bands, raster.aux_channels, raster.n_classes,
    )


def read_raster(path: str | Path) -> RasterPair:
    raster = decode_raster(Path(path).read_bytes())
    logger.debug("raster.read path=%s size=%dx%d", path, raster.height, raster.width)
    return raster
