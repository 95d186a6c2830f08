"""Confusion-matrix metrics and their text, CSV and JSON renderings."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ContractError, EmptyDatasetError


@dataclass
class Metrics:
    confusion: np.ndarray  # C × C counts, rows = truth
    class_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.confusion = np.asarray(self.confusion, dtype=np.int64)
        if self.confusion.ndim != 2 or self.confusion.shape[0] != self.confusion.shape[1]:
            raise ContractError(f"confusion must be square, got shape {list(self.confusion.shape)}")
        if not self.class_names:
            self.class_names = [f"class {i + 1}" for i in range(self.n_classes)]

    @classmethod
    def from_predictions(
        cls,
        truth: np.ndarray,
        predicted: np.ndarray,
        n_classes: int,
        class_names: list[str] | None = None,
    ) -> "Metrics":
        """Zero-based class indices in, counts out."""
        truth = np.asarray(truth, dtype=np.int64)
        predicted = np.asarray(predicted, dtype=np.int64)
        if truth.shape != predicted.shape:
            raise ContractError(f"{truth.size} labels vs {predicted.size} predictions")
        for what, arr in (("label", truth), ("prediction", predicted)):
            if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
                raise ContractError(f"{what} outside 0..{n_classes - 1}")
        confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
        np.add.at(confusion, (truth, predicted), 1)
        return cls(confusion, list(class_names or []))

    @property
    def n_classes(self) -> int:
        return self.confusion.shape[0]

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    @property
    def counts(self) -> np.ndarray:
        return self.confusion.sum(axis=1)

    @property
    def correct(self) -> np.ndarray:
        return np.diag(self.confusion)

    @property
    def per_class_acc(self) -> np.ndarray:
        """NaN for classes absent from the evaluated set."""
        counts = self.counts
        acc = np.full(self.n_classes, np.nan)
        np.divide(self.correct, counts, out=acc, where=counts > 0)
        return acc

    @property
    def oa(self) -> float:
        if self.total == 0:
            raise EmptyDatasetError("no samples were evaluated")
        return float(np.trace(self.confusion)) / self.total

    def report(self) -> str:
        """Per-class accuracy table with the overall accuracy as the last row."""
        width = max(len("Class"), *(len(n) for n in self.class_names))
        lines = [f"{'Class':<{width}}  {'Acc (%)':>8}  {'Count':>6}"]
        for name, acc, count in zip(self.class_names, self.per_class_acc, self.counts):
            shown = "n/a" if math.isnan(acc) else f"{100.0 * acc:.2f}"
            lines.append(f"{name:<{width}}  {shown:>8}  {int(count):>6}")
        lines.append(f"{'OA':<{width}}  {100.0 * self.oa:>8.2f}  {self.total:>6}")
        lines.append("confusion (rows = truth):")
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(self.confusion.tolist())
        lines.append(buf.getvalue().rstrip("\n"))
        return "\n".join(lines)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["class", "name", "count", "correct", "accuracy"])
        for i, (name, acc) in enumerate(zip(self.class_names, self.per_class_acc)):
            writer.writerow([
                i + 1, name, int(self.counts[i]), int(self.correct[i]),
                "" if math.isnan(acc) else f"{acc:.6f}",
            ])
        writer.writerow(["OA", "", self.total, int(np.trace(self.confusion)), f"{self.oa:.6f}"])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "oa": self.oa,
            "per_class_acc": [None if math.isnan(a) else float(a) for a in self.per_class_acc],
            "class_names": list(self.class_names),
            "confusion": self.confusion.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def write(self, csv_path: str | Path | None = None, json_path: str | Path | None = None) -> None:
        if csv_path:
            Path(csv_path).write_text(self.to_csv())
        if json_path:
            Path(json_path).write_text(self.to_json())
