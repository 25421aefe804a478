"""Confusion-matrix accounting and the reported statistics."""
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows = true class, columns = predicted

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]


@dataclass
class Summary:
    accuracy: float
    per_class_accuracy: list
    precision: float
    recall: float
    f1: float
    positive_class: int
    empty_classes: list = field(default_factory=list)
    zero_division: list = field(default_factory=list)

    def to_dict(self):
        return {
            "accuracy": self.accuracy,
            "per_class_accuracy": list(self.per_class_accuracy),
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "positive_class": self.positive_class,
            "empty_classes": list(self.empty_classes),
            "zero_division": list(self.zero_division),
        }


def confusion(preds, labels, num_classes: int) -> ConfusionMatrix:
    preds = np.ascontiguousarray(preds, dtype=np.int64)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    if preds.shape != labels.shape:
        raise ConfigError(f"length mismatch: {preds.shape[0]} predictions vs {labels.shape[0]} labels")
    for name, a in (("predictions", preds), ("labels", labels)):
        if a.size and (a.min() < 0 or a.max() >= num_classes):
            raise ConfigError(f"{name} must lie in [0, {num_classes})")
    return ConfusionMatrix(kernels.confusion_counts(preds, labels, num_classes))


def _ratio(num, den, tag, flags):
    if den == 0:
        flags.append(tag)
        return 0.0
    return float(num) / float(den)


def summarize(cm: ConfusionMatrix, positive_class: int = 1) -> Summary:
    """Accuracy, per-class accuracy and one-vs-rest precision/recall/F1.

    Any zero denominator yields 0 and is listed in ``zero_division``; classes
    with no true samples are listed in ``empty_classes``.
    """
    c = cm.counts
    total = c.sum()
    flags = []
    acc = _ratio(np.trace(c), total, "accuracy", flags)
    rows = c.sum(axis=1)
    per_class, empty = [], []
    for k in range(c.shape[0]):
        if rows[k] == 0:
            empty.append(k)
            per_class.append(0.0)
        else:
            per_class.append(float(c[k, k]) / float(rows[k]))
    tp = c[positive_class, positive_class]
    fp = c[:, positive_class].sum() - tp
    fn = c[positive_class, :].sum() - tp
    p = _ratio(tp, tp + fp, "precision", flags)
    r = _ratio(tp, tp + fn, "recall", flags)
    f1 = _ratio(2 * p * r, p + r, "f1", flags)
    return Summary(acc, per_class, p, r, f1, positive_class, empty, flags)


class RoundTimer:
    """Wall-clock bookkeeping for round durations."""

    def __init__(self, clock=None):
        import time
        self._clock = clock or time.perf_counter
        self.durations = []
        self._t0 = None

    def start(self):
        self._t0 = self._clock()

    def stop(self) -> float:
        d = self._clock() - self._t0
        self.durations.append(d)
        self._t0 = None
        return d

    def mean(self) -> float:
        return float(np.mean(self.durations)) if self.durations else 0.0
