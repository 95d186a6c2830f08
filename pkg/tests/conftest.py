import numpy as np
import pytest

from sfnet.config import ModelConfig
from sfnet.data.raster import RasterPair
from sfnet.data.synth import synth_generate
from sfnet.model.backbone import SfNetModel
from sfnet.tensor.core import Precision, Tensor
from sfnet.training.trainer import prepare_pipeline

VERIFY = Precision.VERIFICATION


def vt(data, grad: bool = False) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=grad, precision=VERIFY)


def small_config(**overrides) -> ModelConfig:
    values = dict(
        patch_size=3,
        pca_components=4,
        hsi_stem_filters=2,
        aux_stem_filters=3,
        token_dim=8,
        n_classes=3,
        precision=VERIFY,
        seed=11,
    )
    values.update(overrides)
    return ModelConfig(**values)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)


@pytest.fixture
def small_raster() -> RasterPair:
    return synth_generate(3, 12, 12, 8, 2, seed=3)


@pytest.fixture
def small_model(small_raster) -> SfNetModel:
    return prepare_pipeline(small_raster, small_config())
