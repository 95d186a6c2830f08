import math

import numpy as np
import pytest

from sfnet.attention.sparse import (
    DEFAULT_ALPHAS,
    SparseAttentionParams,
    attention_maps,
    attention_scores,
    dense_attention,
    init_sparse_attention,
    init_stb,
    selection_margin,
    selection_trace,
    sparse_attention,
    sparse_row_mask,
    sparsity_levels,
    stb_forward,
)
from sfnet.errors import ConfigurationError, ContractError
from sfnet.gradcheck import suite_stb
from sfnet.nn.layers import Initializer, zero_linear
from sfnet.tensor.core import Precision, Tensor

from .conftest import VERIFY, vt


def _softmax(s: np.ndarray) -> np.ndarray:
    e = np.exp(s - s.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _top_k_softmax(s: np.ndarray, k: int) -> np.ndarray:
    keep = np.zeros_like(s, dtype=bool)
    np.put_along_axis(keep, np.argsort(-s, axis=1, kind="stable")[:, :k], True, axis=1)
    return _softmax(np.where(keep, s, -np.inf))


def _lin(layer, x):
    return x @ layer.weight.numpy() + layer.bias.numpy()


def _ln(x, p):
    mu = x.mean(axis=1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
    return (x - mu) / np.sqrt(var + p.eps) * p.gamma.numpy() + p.beta.numpy()


def _gelu(x):
    return 0.5 * x * (1.0 + np.tanh(math.sqrt(2.0 / math.pi) * (x + 0.044715 * x**3)))


def _attention_oracle(x, p, weights=None):
    q, k, v = _lin(p.w_q, x), _lin(p.w_k, x), _lin(p.w_v, x)
    s = q @ k.T / math.sqrt(x.shape[1])
    weights = p.branch_weights.numpy() if weights is None else weights
    z = sum(w * _top_k_softmax(s, kg) @ v for w, kg in zip(weights, sparsity_levels(x.shape[0], p.alphas)))
    return _lin(p.w_o, z)


def test_sparsity_levels_default_alphas():
    assert sparsity_levels(8, DEFAULT_ALPHAS) == [4, 5, 6, 6]
    assert sparsity_levels(4, DEFAULT_ALPHAS) == [2, 2, 3, 3]
    assert sparsity_levels(6, [2 / 3]) == [4]


def test_sparsity_levels_reject_empty_selection():
    with pytest.raises(ConfigurationError):
        sparsity_levels(1, [0.5])
    with pytest.raises(ConfigurationError):
        sparsity_levels(3, [0.2])


def test_attention_scores_examples():
    eye = vt(np.eye(2))
    np.testing.assert_allclose(attention_scores(eye, eye).numpy(), np.eye(2) / math.sqrt(2))
    assert (attention_scores(vt(np.zeros((2, 3))), vt(np.ones((2, 3)))).numpy() == 0).all()


def test_sparse_row_mask_examples():
    sentinel = VERIFY.sentinel
    out = sparse_row_mask(vt([[0.9, 0.1, 0.5]]), 2).numpy()
    np.testing.assert_array_equal(out, [[0.9, sentinel, 0.5]])
    x = vt([[0.3, 0.2, 0.1]])
    np.testing.assert_array_equal(sparse_row_mask(x, 3).numpy(), x.numpy())


def test_sparse_row_mask_ties_keep_lowest_index():
    out = sparse_row_mask(vt([[0.5, 0.5, 0.1]]), 1).numpy()
    assert out[0, 0] == 0.5
    assert out[0, 1] == VERIFY.sentinel


@pytest.mark.parametrize("k", [0, 4])
def test_sparse_row_mask_k_out_of_range(k):
    with pytest.raises(ContractError):
        sparse_row_mask(vt(np.zeros((3, 3))), k)


def test_single_branch_keeps_k_entries_per_row():
    init = Initializer(0, VERIFY)
    maps = [m.numpy() for m in attention_maps(vt(np.eye(3)), init_sparse_attention(init, 3, (2 / 3,)))]
    assert maps[0].shape == (3, 3)
    assert ((maps[0] > 0).sum(axis=1) == 2).all()


def test_selection_margin_and_trace():
    assert selection_margin(np.array([[0.9, 0.1, 0.5]]), 2) == pytest.approx(0.4)
    assert selection_margin(np.array([[0.9, 0.1]]), 2) == math.inf
    with selection_trace() as masks:
        sparse_row_mask(vt([[0.9, 0.1, 0.5]]), 2)
    assert len(masks) == 1
    np.testing.assert_array_equal(masks[0], [[True, False, True]])


def test_dense_equivalence_random_instances():
    rng = np.random.default_rng(1)
    for i in range(50):
        n, d = int(rng.integers(2, 17)), int(rng.integers(1, 33))
        p = init_sparse_attention(Initializer(i, VERIFY), d, (1.0,))
        x = rng.standard_normal((n, d))
        sparse = sparse_attention(vt(x), p).numpy()
        q, k, v = _lin(p.w_q, x), _lin(p.w_k, x), _lin(p.w_v, x)
        dense = _lin(p.w_o, _softmax(q @ k.T / math.sqrt(d)) @ v)
        assert np.abs(sparse - dense).max() < 1e-12


def test_degenerate_mixing_equals_dense(rng):
    init = Initializer(3, VERIFY)
    alphas = (1 / 2, 2 / 3, 3 / 4, 1.0)
    p = init_sparse_attention(init, 6, alphas)
    p.branch_weights.assign(np.array([0.0, 0.0, 0.0, 1.0]))
    x = vt(rng.standard_normal((7, 6)))
    np.testing.assert_allclose(sparse_attention(x, p).numpy(), dense_attention(x, p).numpy(), atol=1e-12)


def test_two_token_hard_branch_picks_argmax_value(rng):
    init = Initializer(5, VERIFY)
    p = init_sparse_attention(init, 3, (1 / 2, 1.0))
    p.branch_weights.assign(np.array([1.0, 0.0]))
    x = rng.standard_normal((2, 3))
    q, k, v = _lin(p.w_q, x), _lin(p.w_k, x), _lin(p.w_v, x)
    scores = q @ k.T / math.sqrt(3)
    expected = _lin(p.w_o, v[scores.argmax(axis=1)])
    np.testing.assert_allclose(sparse_attention(vt(x), p).numpy(), expected, atol=1e-12)


@pytest.mark.parametrize("seed", range(100))
def test_branch_maps_are_nested_top_k_distributions(seed):
    rng = np.random.default_rng(seed)
    n = 8
    p = init_sparse_attention(Initializer(seed, VERIFY), 4, DEFAULT_ALPHAS)
    maps = [m.numpy() for m in attention_maps(vt(rng.standard_normal((n, 4))), p)]
    levels = sparsity_levels(n, DEFAULT_ALPHAS)
    for m, k in zip(maps, levels):
        np.testing.assert_allclose(m.sum(axis=1), 1.0, atol=1e-6)
        assert ((m > 0).sum(axis=1) == k).all()
    for small, large in zip(maps, maps[1:]):
        assert not ((small > 0) & ~(large > 0)).any()


def test_matches_numpy_oracle(rng):
    p = init_sparse_attention(Initializer(2, VERIFY), 5, DEFAULT_ALPHAS)
    x = rng.standard_normal((6, 5))
    np.testing.assert_allclose(sparse_attention(vt(x), p).numpy(), _attention_oracle(x, p), atol=1e-12)


def test_permutation_equivariance(rng):
    p = init_sparse_attention(Initializer(4, VERIFY), 4, DEFAULT_ALPHAS)
    x = rng.standard_normal((8, 4))
    perm = rng.permutation(8)
    out = sparse_attention(vt(x), p).numpy()
    np.testing.assert_allclose(sparse_attention(vt(x[perm]), p).numpy(), out[perm], atol=1e-12)


def test_params_validate_branch_count():
    init = Initializer(0, VERIFY)
    p = init_sparse_attention(init, 4)
    with pytest.raises(ConfigurationError):
        SparseAttentionParams(p.w_q, p.w_k, p.w_v, p.w_o, init.constant((3,), 0.25), DEFAULT_ALPHAS)
    with pytest.raises(ConfigurationError):
        init_sparse_attention(init, 4, (0.8, 0.5))


def test_stb_residual_identity(rng):
    block = init_stb(Initializer(1, VERIFY), 8)
    zero_linear(block.attn.w_o)
    zero_linear(block.ffn.fc2)
    x = vt(rng.standard_normal((5, 8)))
    np.testing.assert_array_equal(stb_forward(x, block).numpy(), x.numpy())


def test_stb_matches_step_by_step_oracle(rng):
    block = init_stb(Initializer(8, VERIFY), 8)
    x = rng.standard_normal((4, 8))
    y = x + _attention_oracle(_ln(x, block.ln1), block.attn)
    expected = y + _lin(block.ffn.fc2, _gelu(_lin(block.ffn.fc1, _ln(y, block.ln2))))
    out = stb_forward(vt(x), block).numpy()
    assert out.shape == x.shape
    assert np.abs(out - expected).max() < 1e-10


def test_stb_standard_precision_shape(rng):
    block = init_stb(Initializer(1, Precision.STANDARD), 16)
    out = stb_forward(Tensor(rng.standard_normal((9, 16)).astype(np.float32)), block)
    assert out.shape == (9, 16)
    assert out.numpy().dtype == np.float32
    assert np.isfinite(out.numpy()).all()


@pytest.mark.parametrize("seed", range(20))
def test_stb_gradients_match_finite_differences(seed):
    result = suite_stb(seed)
    assert result.passed()
