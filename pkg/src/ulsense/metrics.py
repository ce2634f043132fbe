"""Confusion matrices, classification metrics, and dataset evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import read_batches
from .labeling import Label
from .model import InferenceSession, load_weights


class MetricsError(ValueError):
    pass


@dataclass
class ConfusionMatrix:
    """counts[i][j] = records of true class i predicted as class j."""

    counts: np.ndarray

    @classmethod
    def empty(cls, n_classes: int) -> "ConfusionMatrix":
        if n_classes < 2:
            raise MetricsError("need at least two classes")
        return cls(counts=np.zeros((n_classes, n_classes), dtype=np.int64))

    @classmethod
    def from_pairs(cls, true_labels, predicted,
                   n_classes: int) -> "ConfusionMatrix":
        cm = cls.empty(n_classes)
        for t, p in zip(true_labels, predicted):
            cm.add(int(t), int(p))
        return cm

    def add(self, true_class: int, predicted_class: int):
        self.counts[true_class, predicted_class] += 1

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row_percent(self) -> np.ndarray:
        """Row-normalized percentages (each true class sums to 100)."""
        totals = self.counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            pct = 100.0 * self.counts / totals
        return np.where(totals > 0, pct, 0.0)


@dataclass(frozen=True)
class MetricsResult:
    accuracy: float
    recall: float       # detection of the positive (interfered) class
    specificity: float  # identification of the clean class


def metrics(cm: ConfusionMatrix,
            positive_class: int = int(Label.INTERF)) -> MetricsResult:
    """Accuracy plus one-vs-rest recall/specificity for the positive class."""
    counts = cm.counts
    total = counts.sum()
    if total == 0:
        raise MetricsError("empty confusion matrix")
    if not 0 <= positive_class < cm.n_classes:
        raise MetricsError(f"positive class {positive_class} out of range")
    tp = counts[positive_class, positive_class]
    fn = counts[positive_class, :].sum() - tp
    fp = counts[:, positive_class].sum() - tp
    tn = total - tp - fn - fp
    return MetricsResult(
        accuracy=float(np.trace(counts) / total),
        recall=float(tp / (tp + fn)) if tp + fn else 0.0,
        specificity=float(tn / (tn + fp)) if tn + fp else 0.0,
    )


def true_class_of(record, n_classes: int) -> int:
    # Binary models classify the interference label; the 6-class variant
    # classifies the interferer count carried in the envelope.
    return record.n_interferers if n_classes == 6 else record.label


def evaluate(data_path, weights_path, batch_size: int = 32,
             strategy: str = "im2col"):
    """Stream a dataset through a warmed session.

    Returns (ConfusionMatrix, MetricsResult or None, per-record rows).
    The pinned default strategy keeps repeated evaluations bit-identical.
    Rows are (slot_index, true, predicted, latency_us, probs).
    """
    bundle = load_weights(weights_path)
    session = InferenceSession(bundle, strategy=strategy).warmup()
    n_classes = bundle.config.n_classes
    cm = ConfusionMatrix.empty(n_classes)
    rows = []
    for batch in read_batches(data_path, batch_size):
        for record in batch:
            pred = session.forward(record)
            truth = true_class_of(record, n_classes)
            cm.add(truth, pred.argmax)
            rows.append((record.slot_index, truth, pred.argmax,
                         pred.latency_us, pred.probs, pred.logits))
    # Recall/specificity are the binary INTERF-vs-CLEAN metrics; for the
    # 6-class variant callers read per-class rates off the matrix.
    result = metrics(cm) if (n_classes == 2 and cm.total) else None
    return cm, result, rows
