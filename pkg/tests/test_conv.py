import itertools

import numpy as np
import pytest

from sfnet.errors import ShapeError
from sfnet.gradcheck import suite_conv
from sfnet.tensor.conv import conv2d, conv3d

from .conftest import vt


def conv_oracle(x: np.ndarray, k: np.ndarray, stride: int) -> np.ndarray:
    """Direct nested-loop cross-correlation with valid padding."""
    spatial, ksize = x.shape[1:], k.shape[2:]
    out_shape = [(n - kk) // stride + 1 for n, kk in zip(spatial, ksize)]
    out = np.zeros((k.shape[0], *out_shape))
    for f in range(k.shape[0]):
        for pos in itertools.product(*(range(m) for m in out_shape)):
            acc = 0.0
            for c in range(x.shape[0]):
                for off in itertools.product(*(range(kk) for kk in ksize)):
                    src = tuple(p * stride + o for p, o in zip(pos, off))
                    acc += x[(c, *src)] * k[(f, c, *off)]
            out[(f, *pos)] = acc
    return out


def test_unit_kernel_sums_channels(rng):
    x = rng.standard_normal((3, 4, 5))
    out = conv2d(vt(x), vt(np.ones((2, 3, 1, 1)))).numpy()
    for f in range(2):
        np.testing.assert_allclose(out[f], x.sum(axis=0), atol=1e-12)


def test_all_ones_counts():
    out2 = conv2d(vt(np.ones((1, 5, 5))), vt(np.ones((1, 1, 3, 3)))).numpy()
    assert out2.shape == (1, 3, 3)
    assert (out2 == 9.0).all()
    out3 = conv3d(vt(np.ones((1, 3, 4, 4))), vt(np.ones((1, 1, 2, 2, 2)))).numpy()
    assert out3.shape == (1, 2, 3, 3)
    assert (out3 == 8.0).all()


def test_unit_kernel_3d_sums_channels(rng):
    x = rng.standard_normal((2, 3, 4, 4))
    out = conv3d(vt(x), vt(np.ones((1, 2, 1, 1, 1)))).numpy()
    np.testing.assert_allclose(out[0], x.sum(axis=0), atol=1e-12)


@pytest.mark.parametrize("stride", [1, 2])
def test_conv2d_matches_loop_oracle(rng, stride):
    x = rng.standard_normal((2, 4, 4))
    k = rng.standard_normal((3, 2, 2, 2))
    np.testing.assert_allclose(conv2d(vt(x), vt(k), stride=stride).numpy(), conv_oracle(x, k, stride), atol=1e-6)


def test_conv3d_matches_loop_oracle(rng):
    x = rng.standard_normal((2, 3, 4, 5))
    k = rng.standard_normal((2, 2, 2, 3, 2))
    np.testing.assert_allclose(conv3d(vt(x), vt(k)).numpy(), conv_oracle(x, k, 1), atol=1e-6)


def test_same_padding_keeps_extent_and_matches_padded_oracle(rng):
    x = rng.standard_normal((2, 5, 6))
    k = rng.standard_normal((4, 2, 3, 3))
    out = conv2d(vt(x), vt(k), padding="same").numpy()
    assert out.shape == (4, 5, 6)
    padded = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    np.testing.assert_allclose(out, conv_oracle(padded, k, 1), atol=1e-12)


def test_kernel_larger_than_input_is_shape_error():
    with pytest.raises(ShapeError):
        conv2d(vt(np.ones((1, 2, 2))), vt(np.ones((1, 1, 3, 3))))


def test_channel_mismatch_is_shape_error():
    with pytest.raises(ShapeError):
        conv2d(vt(np.ones((2, 4, 4))), vt(np.ones((1, 3, 3, 3))))


@pytest.mark.parametrize("seed", range(20))
def test_conv_gradients_match_finite_differences(seed):
    result = suite_conv(seed, max_coords=10)
    assert result.checked > 0
    assert not result.failures, result.failures
