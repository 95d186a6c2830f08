from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from ..errors import SplitError

logger = logging.getLogger("sfnet.data")

MAX_TRAIN_FRACTION = 0.9


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    seed: int
    train: np.ndarray  # flat row-major pixel indices, ascending
    test: np.ndarray

    @property
    def n_train(self) -> int:
        return len(self.train)

    @property
    def n_test(self) -> int:
        return len(self.test)


def train_count(fraction: float, n: int) -> int:
    """round(fraction·n) with halves rounding up, at least 1, leaving at least 1 for testing."""
    return min(max(1, math.floor(fraction * n + 0.5)), n - 1)


def stratified_split(labels: np.ndarray, fraction: float, seed: int) -> SplitSpec:
    """Per-class sampling without replacement over labeled pixels (label > 0)."""
    if not 0.0 < fraction <= MAX_TRAIN_FRACTION:
        raise SplitError(f"train fraction must lie in (0, {MAX_TRAIN_FRACTION}], got {fraction}")
    flat = np.asarray(labels).ravel()
    classes = np.unique(flat[flat > 0])
    if classes.size == 0:
        raise SplitError("no labeled pixels to split")

    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in classes:
        members = np.flatnonzero(flat == c)
        if members.size < 2:
            raise SplitError(f"class {int(c)} has {members.size} labeled pixel(s); need at least 2")
        order = rng.permutation(members)
        k = train_count(fraction, members.size)
        train.append(order[:k])
        test.append(order[k:])

    spec = SplitSpec(fraction, seed, np.sort(np.concatenate(train)), np.sort(np.concatenate(test)))
    logger.debug("split.stratified fraction=%s seed=%d train=%d test=%d", fraction, seed, spec.n_train, spec.n_test)
    return spec
