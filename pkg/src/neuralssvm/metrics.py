"""Node-wise and class-mean accuracy from a confusion matrix."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class MetricsReport:
    pixel_accuracy: float
    class_mean_accuracy: float
    per_class: np.ndarray  # recall per class, nan where the class is absent
    confusion: np.ndarray  # rows: ground truth, columns: prediction

    def table(self, class_names=None) -> str:
        L = len(self.per_class)
        names = class_names or [f"class{c}" for c in range(L)]
        width = max(12, max(len(n) for n in names))
        lines = [f"{'pixel-wise':<{width}} {100 * self.pixel_accuracy:6.2f}",
                 f"{'class-mean':<{width}} {100 * self.class_mean_accuracy:6.2f}"]
        for name, acc in zip(names, self.per_class):
            val = "   n/a" if np.isnan(acc) else f"{100 * acc:6.2f}"
            lines.append(f"{name:<{width}} {val}")
        return "\n".join(lines)


def confusion_matrix(truths, predictions, n_labels: int) -> np.ndarray:
    cm = np.zeros((n_labels, n_labels), dtype=np.int64)
    for y, p in zip(truths, predictions):
        np.add.at(cm, (np.asarray(y, dtype=np.intp), np.asarray(p, dtype=np.intp)), 1)
    return cm


def evaluate_predictions(truths, predictions, n_labels: int) -> MetricsReport:
    cm = confusion_matrix(truths, predictions, n_labels)
    total = cm.sum()
    support = cm.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(support > 0, np.diag(cm) / support, np.nan)
    present = support > 0
    return MetricsReport(
        pixel_accuracy=float(np.trace(cm) / total) if total else 0.0,
        class_mean_accuracy=float(per_class[present].mean()) if present.any() else 0.0,
        per_class=per_class,
        confusion=cm)
