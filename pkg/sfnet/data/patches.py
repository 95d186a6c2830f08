"""Per-pixel patch access over mirror-padded rasters."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, EmptyDatasetError, ShapeError
from ..model.pca import PcaModel, reduce_cube
from .raster import RasterPair


@dataclass(frozen=True)
class PatchSample:
    hsi: np.ndarray  # bands × p × p
    aux: np.ndarray  # channels × p × p
    label: int  # 1..C
    row: int
    col: int

    @property
    def target(self) -> int:
        return self.label - 1


def reduce_raster(raster: RasterPair, pca: PcaModel) -> np.ndarray:
    """Project every pixel spectrum onto the retained components: r × H × W."""
    if raster.bands != pca.bands:
        raise ShapeError(f"PCA was fit on {pca.bands} bands, raster has {raster.bands}")
    return reduce_cube(pca, raster.hsi.astype(pca.mean.dtype))


class PatchDataset:
    """Samples are addressed by flat row-major pixel index, matching SplitSpec."""

    def __init__(
        self,
        hsi: np.ndarray,
        aux: np.ndarray,
        labels: np.ndarray,
        patch_size: int,
        dtype: np.dtype | None = None,
        ablate_aux: bool = False,
    ):
        if patch_size < 1 or patch_size % 2 == 0:
            raise ConfigurationError(f"patch_size must be a positive odd integer, got {patch_size}")
        if hsi.shape[1:] != labels.shape or aux.shape[1:] != labels.shape:
            raise ShapeError(
                f"sources {list(hsi.shape)} and {list(aux.shape)} do not match labels {list(labels.shape)}"
            )
        dtype = np.dtype(dtype or hsi.dtype)
        half = patch_size // 2
        pad = ((0, 0), (half, half), (half, half))
        self._hsi = np.pad(hsi.astype(dtype), pad, mode="reflect")
        aux = np.zeros_like(aux, dtype=dtype) if ablate_aux else aux.astype(dtype)
        self._aux = np.pad(aux, pad, mode="reflect")
        self._labels = np.asarray(labels)
        self._width = labels.shape[1]
        self._p = patch_size
        self.labeled = np.flatnonzero(self._labels.ravel() > 0)

    @classmethod
    def from_raster(
        cls,
        raster: RasterPair,
        pca: PcaModel,
        patch_size: int,
        ablate_aux: bool = False,
    ) -> "PatchDataset":
        reduced = reduce_raster(raster, pca)
        return cls(reduced, raster.aux, raster.labels, patch_size, reduced.dtype, ablate_aux)

    @property
    def patch_size(self) -> int:
        return self._p

    def __len__(self) -> int:
        return len(self.labeled)

    def sample(self, index: int) -> PatchSample:
        row, col = divmod(int(index), self._width)
        p = self._p
        # Padded coordinates shift by half, so the window starts at the pixel itself.
        return PatchSample(
            hsi=self._hsi[:, row:row + p, col:col + p],
            aux=self._aux[:, row:row + p, col:col + p],
            label=int(self._labels[row, col]),
            row=row,
            col=col,
        )

    def samples(self, indices=None) -> list[PatchSample]:
        indices = self.labeled if indices is None else indices
        return [self.sample(i) for i in indices]


def extract_patches(raster: RasterPair, patch_size: int) -> list[PatchSample]:
    """One mirror-padded neighborhood per labeled pixel, in row-major order."""
    dataset = PatchDataset(raster.hsi, raster.aux, raster.labels, patch_size)
    if len(dataset) == 0:
        raise EmptyDatasetError("raster has no labeled pixels")
    return dataset.samples()
