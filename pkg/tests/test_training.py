import logging
import math

import numpy as np
import pytest

from sfnet.config import TrainConfig
from sfnet.data.split import SplitSpec, stratified_split
from sfnet.data.synth import synth_generate
from sfnet.errors import ContractError, NanLossError, ShapeError
from sfnet.model.checkpoint import load_checkpoint
from sfnet.nn.layers import zero_linear
from sfnet.tensor.core import Precision
from sfnet.training.loss import cross_entropy
from sfnet.training.optim import Adam
from sfnet.training.trainer import build_dataset, evaluate, predict, prepare_pipeline, train

from .conftest import small_config, vt

VERIFY = Precision.VERIFICATION


def train_config(**overrides) -> TrainConfig:
    values = dict(epochs=2, batch_size=4, learning_rate=1e-2, seed=5, precision=VERIFY)
    values.update(overrides)
    return TrainConfig(**values)


def test_cross_entropy_uniform_logits():
    assert cross_entropy(vt(np.zeros(4)), 1).item() == pytest.approx(math.log(4))


def test_cross_entropy_saturates():
    assert cross_entropy(vt([100.0, 0.0, 0.0]), 0).item() < 1e-8
    assert cross_entropy(vt([1000.0, 0.0]), 1).item() == pytest.approx(1000.0)


def test_cross_entropy_example_and_gradient():
    logits = vt([1.0, 2.0, 3.0], grad=True)
    loss = cross_entropy(logits, 2)
    assert loss.item() == pytest.approx(0.40760596, abs=1e-7)
    loss.backward()
    probs = np.exp([1.0, 2.0, 3.0]) / np.exp([1.0, 2.0, 3.0]).sum()
    np.testing.assert_allclose(logits.grad, probs - np.array([0.0, 0.0, 1.0]))


def test_cross_entropy_contract():
    with pytest.raises(ContractError):
        cross_entropy(vt([0.0, 1.0]), 2)
    with pytest.raises(ShapeError):
        cross_entropy(vt([[0.0, 1.0]]), 0)


def test_adam_zero_learning_rate_is_a_no_op(small_model):
    before = [p.data.copy() for p in small_model.parameters()]
    optim = Adam(small_model.parameters(), lr=0.0)
    for p in small_model.parameters():
        p.grad = np.ones_like(p.data)
    optim.step()
    assert optim.steps == 1
    for b, p in zip(before, small_model.parameters()):
        assert np.array_equal(b, p.data)


def test_adam_first_step_moves_by_lr():
    w = vt([1.0, -2.0], grad=True)
    w.grad = np.array([0.5, -3.0])
    Adam([w], lr=0.1).step()
    np.testing.assert_allclose(w.data, [0.9, -1.9], atol=1e-6)


def test_same_seed_same_history(small_raster):
    split = stratified_split(small_raster.labels, 0.3, seed=5)
    runs = []
    for _ in range(2):
        model = prepare_pipeline(small_raster, small_config())
        runs.append(train(model, build_dataset(model, small_raster), split, train_config()))
    assert runs[0].losses == runs[1].losses
    assert runs[0].accuracies == runs[1].accuracies
    assert len(runs[0].records) == 2


def test_non_finite_loss_is_reported(small_model, small_raster):
    small_model.classifier.bias.assign(np.full(small_model.classifier.bias.shape, np.nan))
    split = stratified_split(small_raster.labels, 0.3, seed=5)
    with pytest.raises(NanLossError) as info:
        train(small_model, build_dataset(small_model, small_raster), split, train_config())
    assert info.value.epoch == 1 and info.value.step == 1
    assert info.value.sample is not None


def test_overfits_a_single_sample(small_model, small_raster):
    dataset = build_dataset(small_model, small_raster)
    first, second = dataset.labeled[:2]
    split = SplitSpec(0.5, 0, np.array([first]), np.array([second]))
    history = train(small_model, dataset, split, train_config(epochs=200, batch_size=1, learning_rate=2e-2))
    assert history.losses[-1] < 0.01
    assert history.losses[-1] < history.losses[0]
    assert predict(small_model, dataset.sample(first)) == dataset.sample(first).target


def test_threaded_evaluation_matches_serial(small_model, small_raster):
    dataset = build_dataset(small_model, small_raster)
    split = stratified_split(small_raster.labels, 0.3, seed=1)
    serial = evaluate(small_model, dataset, split, workers=1)
    threaded = evaluate(small_model, dataset, split, workers=3)
    np.testing.assert_array_equal(serial.confusion, threaded.confusion)


def test_zeroed_head_scores_chance():
    raster = synth_generate(4, 16, 16, 6, 2, seed=2)
    assert (np.bincount(raster.labels.ravel())[1:] == 64).all()
    model = prepare_pipeline(raster, small_config(n_classes=4))
    zero_linear(model.classifier)
    split = stratified_split(raster.labels, 0.5, seed=0)
    metrics = evaluate(model, build_dataset(model, raster), split)
    assert metrics.oa == pytest.approx(1 / 4)


def test_untrained_model_scores_near_chance():
    raster = synth_generate(9, 18, 18, 6, 2, seed=4)
    split = stratified_split(raster.labels, 0.1, seed=0)
    scores = []
    for seed in range(5):
        model = prepare_pipeline(raster, small_config(n_classes=9, seed=seed))
        scores.append(evaluate(model, build_dataset(model, raster), split).oa)
    assert abs(np.mean(scores) - 1 / 9) <= 0.15


def test_writes_checkpoint_and_history(small_model, small_raster, tmp_path):
    split = stratified_split(small_raster.labels, 0.3, seed=5)
    cfg = train_config(
        epochs=1,
        checkpoint_path=str(tmp_path / "m.sfnm"),
        history_path=str(tmp_path / "h.csv"),
    )
    history = train(small_model, build_dataset(small_model, small_raster), split, cfg)
    assert (tmp_path / "h.csv").read_text() == history.to_csv()
    assert history.to_csv().splitlines()[0] == "epoch,loss,accuracy"
    restored = load_checkpoint(tmp_path / "m.sfnm")
    dataset = build_dataset(restored, small_raster)
    for sample in dataset.samples(split.test[:5]):
        assert predict(restored, sample) == predict(small_model, sample)


def test_epoch_progress_is_logged(small_model, small_raster, caplog, monkeypatch):
    monkeypatch.setattr(logging.getLogger("sfnet"), "propagate", True)
    split = stratified_split(small_raster.labels, 0.3, seed=5)
    with caplog.at_level(logging.INFO, logger="sfnet.train"):
        train(small_model, build_dataset(small_model, small_raster), split, train_config(epochs=1))
    assert any(r.getMessage().startswith("train.epoch epoch=1 ") for r in caplog.records)


def test_aux_channel_mismatch(small_model):
    raster = synth_generate(3, 12, 12, 8, 3, seed=3)
    with pytest.raises(ShapeError):
        build_dataset(small_model, raster)


@pytest.mark.slow
def test_fusion_beats_hsi_alone_end_to_end():
    raster = synth_generate(6, 64, 64, 32, 2, seed=7)
    split = stratified_split(raster.labels, 0.1, seed=7)
    cfg = TrainConfig(epochs=30, batch_size=16, learning_rate=1e-3, seed=7)
    scores = {}
    for ablate in (False, True):
        model = prepare_pipeline(raster, small_config(
            patch_size=11, pca_components=30, hsi_stem_filters=8, aux_stem_filters=16,
            token_dim=64, n_classes=6, precision=Precision.STANDARD, seed=7,
        ))
        dataset = build_dataset(model, raster, ablate_aux=ablate)
        train(model, dataset, split, cfg.model_copy(update={"ablate_aux": ablate}))
        scores[ablate] = evaluate(model, dataset, split).oa
    assert scores[False] >= 0.95
    assert scores[True] <= 0.85
