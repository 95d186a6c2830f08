import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pydantic import ValidationError

from sfnet.attention.fusion import cafb_forward
from sfnet.attention.sparse import stb_forward
from sfnet.config import ModelConfig
from sfnet.errors import ShapeError
from sfnet.gradcheck import suite_classifier, suite_model, suite_stems
from sfnet.model.backbone import (
    as_inputs,
    aux_tokens,
    build_model,
    classify_tokens,
    hsi_tokens,
    sfnet_forward,
    zero_residual_terminals,
)
from sfnet.model.pca import pca_fit

from .conftest import VERIFY, small_config, vt


def _model(config: ModelConfig, bands: int = 12, aux: int = 2, seed: int = 0):
    rng = np.random.default_rng(seed)
    pca = pca_fit(rng.standard_normal((64, bands)), config.pca_components)
    return build_model(config, pca, aux)


def _inputs(model, seed: int = 1):
    rng = np.random.default_rng(seed)
    p, r = model.config.patch_size, model.config.pca_components
    return vt(rng.standard_normal((r, p, p))), vt(rng.standard_normal((model.aux_channels, p, p)))


@pytest.mark.parametrize("patch", [7, 9, 11])
@pytest.mark.parametrize("r", [10, 30])
def test_logits_length_sweep(patch, r):
    config = small_config(patch_size=patch, pca_components=r, n_classes=5)
    model = _model(config, bands=32)
    logits = sfnet_forward(model, *_inputs(model))
    assert logits.shape == (5,)
    assert np.isfinite(logits.numpy()).all()


@settings(max_examples=15, deadline=None)
@given(st.sampled_from([3, 5, 7, 9]), st.integers(1, 6), st.integers(1, 3))
def test_both_streams_tokenize_to_same_grid(patch, r, aux):
    model = _model(small_config(patch_size=patch, pca_components=r), bands=8, aux=aux)
    hsi, aux_patch = _inputs(model)
    th, tx = hsi_tokens(model, hsi), aux_tokens(model, aux_patch)
    assert th.shape == tx.shape == (patch * patch, model.config.token_dim)


def test_residual_identity_chain():
    model = _model(small_config())
    zero_residual_terminals(model)
    hsi, aux = _inputs(model)
    fused = np.concatenate([hsi_tokens(model, hsi).numpy(), aux_tokens(model, aux).numpy()], axis=1)
    expected = fused.mean(axis=0) @ model.classifier.weight.numpy() + model.classifier.bias.numpy()
    np.testing.assert_allclose(sfnet_forward(model, hsi, aux).numpy(), expected, atol=1e-12)


def test_forward_matches_composed_ops():
    model = _model(small_config())
    hsi, aux = _inputs(model)
    th, tx = hsi_tokens(model, hsi), aux_tokens(model, aux)
    for block in model.stb_h:
        th = stb_forward(th, block)
    for block in model.stb_x:
        tx = stb_forward(tx, block)
    expected = classify_tokens(model, cafb_forward(th, tx, model.cafb)).numpy()
    assert np.abs(sfnet_forward(model, hsi, aux).numpy() - expected).max() < 1e-10


def test_forward_is_deterministic():
    model = _model(small_config(precision="standard"))
    rng = np.random.default_rng(3)
    p, r = model.config.patch_size, model.config.pca_components
    hsi = rng.standard_normal((r, p, p)).astype(np.float32)
    aux = rng.standard_normal((2, p, p)).astype(np.float32)
    first = sfnet_forward(model, *as_inputs(model, hsi, aux)).numpy()
    second = sfnet_forward(model, *as_inputs(model, hsi, aux)).numpy()
    assert first.dtype == np.float32
    assert first.tobytes() == second.tobytes()


def test_shape_errors_name_the_stage():
    model = _model(small_config())
    hsi, aux = _inputs(model)
    with pytest.raises(ShapeError, match="hsi stem"):
        sfnet_forward(model, vt(np.zeros((3, 3, 3))), aux)
    with pytest.raises(ShapeError, match="aux stem"):
        sfnet_forward(model, hsi, vt(np.zeros((5, 3, 3))))


def test_initialization_is_seeded():
    a = _model(small_config(seed=4))
    b = _model(small_config(seed=4))
    c = _model(small_config(seed=5))
    for (name, ta), (_, tb), (_, tc) in zip(a.named_tensors(), b.named_tensors(), c.named_tensors()):
        np.testing.assert_array_equal(ta.numpy(), tb.numpy(), err_msg=name)
    assert any(not np.array_equal(ta.numpy(), tc.numpy()) for (_, ta), (_, tc) in zip(a.named_tensors(), c.named_tensors()))


def test_named_tensors_are_unique_and_cover_parameters():
    model = _model(small_config())
    names = [n for n, _ in model.named_tensors()]
    assert len(names) == len(set(names))
    assert "stb_h.2.attn.branch_weights" in names
    assert "cafb.w_qx.weight" in names
    assert len(model.parameters()) == len(names)


def test_positional_embeddings_are_optional():
    plain = _model(small_config())
    with_pos = _model(small_config(positional_embedding=True))
    names = {n for n, _ in with_pos.named_tensors()}
    assert {"pos_h", "pos_x"} <= names
    assert "pos_h" not in {n for n, _ in plain.named_tensors()}
    assert sfnet_forward(with_pos, *_inputs(with_pos)).shape == (3,)


def test_dense_variant_runs():
    model = _model(small_config(alphas=[1.0]))
    assert sfnet_forward(model, *_inputs(model)).shape == (3,)


def test_depth_is_fixed_unless_overridden():
    with pytest.raises(ValidationError):
        small_config(stb_depth=2)
    model = _model(small_config(stb_depth=1, allow_depth_override=True))
    assert len(model.stb_h) == len(model.stb_x) == 1


def test_even_patch_is_rejected():
    with pytest.raises(ValidationError):
        small_config(patch_size=4)


def test_pca_rank_must_match_config():
    rng = np.random.default_rng(0)
    pca = pca_fit(rng.standard_normal((20, 8)), 3)
    with pytest.raises(ShapeError):
        build_model(small_config(), pca, 2)


def test_pca_is_stored_at_model_precision():
    model = _model(small_config(precision="standard"))
    assert model.pca.components.dtype == np.float32
    assert model.config.precision != VERIFY


@pytest.mark.parametrize("suite", [suite_stems, suite_classifier, suite_model])
def test_block_gradients_match_finite_differences(suite):
    assert suite(0).passed()
