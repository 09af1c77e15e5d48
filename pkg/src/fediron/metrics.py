"""Multi-class evaluation: confusion matrix, per-class precision/recall/F1,
support-weighted averages, accuracy. Any 0/0 ratio is defined as 0."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # counts[true][pred], int64

    def __post_init__(self) -> None:
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError(f"confusion matrix must be square, got shape {c.shape}")
        if (c < 0).any():
            raise ValueError("confusion matrix entries must be non-negative")

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class ClassMetrics:
    label: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class MetricsReport:
    per_class: tuple[ClassMetrics, ...]
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    accuracy: float
    n_samples: int


def confusion(preds, labels, n_classes: int) -> ConfusionMatrix:
    """Tally counts[t][p] over paired prediction/label vectors."""
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape:
        raise ValueError(f"length mismatch: {preds.shape} predictions vs {labels.shape} labels")
    if preds.size:
        lo = min(preds.min(), labels.min())
        hi = max(preds.max(), labels.max())
        if lo < 0 or hi >= n_classes:
            raise ValueError(f"class id out of range [0, {n_classes}): saw {lo if lo < 0 else hi}")
    flat = labels * n_classes + preds
    counts = np.bincount(flat, minlength=n_classes * n_classes).reshape(n_classes, n_classes)
    return ConfusionMatrix(counts.astype(np.int64))


def per_class(cm: ConfusionMatrix, class_names: tuple[str, ...] | None = None) -> tuple[ClassMetrics, ...]:
    counts = cm.counts
    n = cm.n_classes
    if class_names is None:
        class_names = tuple(str(i) for i in range(n))
    if len(class_names) != n:
        raise ValueError(f"{len(class_names)} names for {n} classes")
    out = []
    for c in range(n):
        tp = int(counts[c, c])
        fp = int(counts[:, c].sum()) - tp
        fn = int(counts[c, :].sum()) - tp
        support = tp + fn
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0
        out.append(ClassMetrics(class_names[c], precision, recall, f1, support))
    return tuple(out)


def weighted(per: tuple[ClassMetrics, ...]) -> tuple[float, float, float]:
    """Support-weighted mean of (precision, recall, f1)."""
    total = sum(m.support for m in per)
    if total == 0:
        raise ValueError("cannot weight metrics: total support is zero")
    p = sum(m.precision * m.support for m in per) / total
    r = sum(m.recall * m.support for m in per) / total
    f = sum(m.f1 * m.support for m in per) / total
    return p, r, f


def accuracy(cm: ConfusionMatrix) -> float:
    total = cm.total
    if total == 0:
        raise ValueError("cannot compute accuracy of an empty confusion matrix")
    return float(np.trace(cm.counts)) / total


def evaluate_predictions(preds, labels, n_classes: int,
                         class_names: tuple[str, ...] | None = None) -> MetricsReport:
    cm = confusion(preds, labels, n_classes)
    per = per_class(cm, class_names)
    wp, wr, wf = weighted(per)
    return MetricsReport(
        per_class=per,
        weighted_precision=wp,
        weighted_recall=wr,
        weighted_f1=wf,
        accuracy=accuracy(cm),
        n_samples=cm.total,
    )
