"""PCA spectral reduction."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, ShapeError


@dataclass
class PcaModel:
    mean: np.ndarray  # [bands]
    components: np.ndarray  # bands × r, orthonormal columns, descending variance
    explained_variance: np.ndarray  # [r]

    @property
    def bands(self) -> int:
        return self.components.shape[0]

    @property
    def r(self) -> int:
        return self.components.shape[1]

    def astype(self, dtype: np.dtype) -> "PcaModel":
        return PcaModel(
            self.mean.astype(dtype),
            self.components.astype(dtype),
            self.explained_variance.astype(dtype),
        )


def pca_fit(samples: np.ndarray, r: int) -> PcaModel:
    """Top-r eigenvectors of the sample covariance.

    Each component is sign-normalized so that its largest-magnitude entry is positive.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"pca_fit expects an M×bands matrix, got shape {list(x.shape)}")
    m, bands = x.shape
    if r < 1 or r > bands:
        raise ConfigurationError(f"cannot retain {r} components from {bands} bands")
    if m <= r:
        raise ConfigurationError(f"pca_fit needs more samples than components ({m} <= {r})")

    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (m - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(-evals, kind="stable")[:r]
    components = evecs[:, order]
    pivots = np.abs(components).argmax(axis=0)
    signs = np.sign(components[pivots, np.arange(r)])
    signs[signs == 0] = 1.0
    components = components * signs
    return PcaModel(mean, components, np.clip(evals[order], 0.0, None))


def pca_transform(model: PcaModel, x: np.ndarray) -> np.ndarray:
    """(x − mean) · components."""
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] != model.bands:
        raise ShapeError(f"pca_transform: model has {model.bands} bands, input shape {list(x.shape)}")
    return (x - model.mean) @ model.components


def pca_inverse(model: PcaModel, y: np.ndarray) -> np.ndarray:
    return np.asarray(y) @ model.components.T + model.mean


def reduce_cube(model: PcaModel, cube: np.ndarray) -> np.ndarray:
    """Project a bands×H×W cube to r×H×W."""
    bands, h, w = cube.shape
    flat = cube.reshape(bands, h * w).T
    return pca_transform(model, flat).T.reshape(model.r, h, w)
