"""Training loop, evaluation and pipeline assembly."""
from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..config import ModelConfig, TrainConfig
from ..data.patches import PatchDataset, PatchSample
from ..data.raster import RasterPair
from ..data.split import SplitSpec
from ..errors import EmptyDatasetError, NanLossError, ShapeError
from ..model.backbone import SfNetModel, as_inputs, build_model, sfnet_forward
from ..model.checkpoint import save_checkpoint
from ..model.pca import PcaModel, pca_fit
from .loss import cross_entropy
from .metrics import Metrics
from .optim import Adam

logger = logging.getLogger("sfnet.train")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    accuracy: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    @property
    def losses(self) -> list[float]:
        return [r.loss for r in self.records]

    @property
    def accuracies(self) -> list[float]:
        return [r.accuracy for r in self.records]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["epoch", "loss", "accuracy"])
        for r in self.records:
            writer.writerow([r.epoch, repr(r.loss), repr(r.accuracy)])
        return buf.getvalue()


def fit_pca(raster: RasterPair, r: int) -> PcaModel:
    """PCA over every pixel spectrum of the scene, labeled or not."""
    spectra = raster.hsi.reshape(raster.bands, -1).T
    return pca_fit(spectra, r)


def prepare_pipeline(raster: RasterPair, config: ModelConfig) -> SfNetModel:
    """Fit PCA on the scene and build a fresh model sized for it."""
    if config.n_classes != raster.n_classes:
        logger.info("pipeline.classes config=%d raster=%d using=raster", config.n_classes, raster.n_classes)
        config = config.model_copy(update={"n_classes": raster.n_classes})
    pca = fit_pca(raster, config.pca_components)
    return build_model(config, pca, raster.aux_channels)


def build_dataset(model: SfNetModel, raster: RasterPair, ablate_aux: bool = False) -> PatchDataset:
    if raster.aux_channels != model.aux_channels:
        raise ShapeError(f"model expects {model.aux_channels} aux channels, raster has {raster.aux_channels}")
    return PatchDataset.from_raster(raster, model.pca, model.config.patch_size, ablate_aux)


def predict_logits(model: SfNetModel, sample: PatchSample) -> np.ndarray:
    hsi, aux = as_inputs(model, sample.hsi, sample.aux)
    return sfnet_forward(model, hsi, aux).numpy()


def predict(model: SfNetModel, sample: PatchSample) -> int:
    """Zero-based class; ties go to the lowest index."""
    return int(np.argmax(predict_logits(model, sample)))


def train(model: SfNetModel, dataset: PatchDataset, split: SplitSpec, cfg: TrainConfig) -> TrainHistory:
    """Mini-batch Adam over the train split; the visiting order is fixed per (seed, epoch).

    Gradients are summed per sample and averaged over the batch before each step.
    """
    if split.n_train == 0:
        raise EmptyDatasetError("train split is empty")
    model.split_seed = split.seed
    model.train_fraction = split.train_fraction
    params = model.parameters()
    optim = Adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
    history = TrainHistory()
    logger.info(
        "train.start samples=%d epochs=%d batch=%d lr=%s params=%d",
        split.n_train, cfg.epochs, cfg.batch_size, cfg.learning_rate, sum(p.size for p in params),
    )

    for epoch in range(1, cfg.epochs + 1):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(split.train)
        loss_sum = 0.0
        correct = 0
        for step, start in enumerate(range(0, len(order), cfg.batch_size), start=1):
            batch = order[start:start + cfg.batch_size]
            optim.zero_grad()
            for index in batch:
                sample = dataset.sample(index)
                hsi, aux = as_inputs(model, sample.hsi, sample.aux)
                logits = sfnet_forward(model, hsi, aux)
                loss = cross_entropy(logits, sample.target)
                value = loss.item()
                if not math.isfinite(value):
                    logger.error("train.nan epoch=%d step=%d sample=%d", epoch, step, int(index))
                    raise NanLossError(epoch, step, value, int(index))
                loss.backward()
                loss_sum += value
                correct += int(np.argmax(logits.numpy()) == sample.target)
            optim.step(grad_scale=1.0 / len(batch))
        record = EpochRecord(epoch, loss_sum / len(order), correct / len(order))
        history.records.append(record)
        logger.info("train.epoch epoch=%d loss=%.6f acc=%.4f", epoch, record.loss, record.accuracy)

    optim.zero_grad()
    if cfg.checkpoint_path:
        save_checkpoint(model, cfg.checkpoint_path)
    if cfg.history_path:
        Path(cfg.history_path).write_text(history.to_csv())
        logger.info("train.history path=%s", cfg.history_path)
    return history


def evaluate(
    model: SfNetModel,
    dataset: PatchDataset,
    split: SplitSpec,
    workers: int = 1,
    class_names: list[str] | None = None,
) -> Metrics:
    """Classify the test split; with ``workers`` > 1 samples run on a thread pool, results stay in split order."""
    if split.n_test == 0:
        raise EmptyDatasetError("test split is empty")
    samples = dataset.samples(split.test)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            predicted = list(pool.map(lambda s: predict(model, s), samples))
    else:
        predicted = [predict(model, s) for s in samples]
    truth = [s.target for s in samples]
    metrics = Metrics.from_predictions(truth, predicted, model.config.n_classes, class_names)
    logger.info("eval.done samples=%d oa=%.4f workers=%d", len(samples), metrics.oa, workers)
    return metrics
