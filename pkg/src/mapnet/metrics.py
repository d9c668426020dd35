"""Pixel-level confusion accounting and the precision / recall / F1 / IoU
formulas, micro-aggregated over whole datasets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, UsageError
from .tensor import Tensor


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp,
            self.fp + other.fp,
            self.tn + other.tn,
            self.fn + other.fn,
        )

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class MetricScores:
    precision: float | None
    recall: float | None
    f1: float | None
    iou: float | None


def confusion_counts(prob, truth, threshold: float = 0.5) -> ConfusionCounts:
    """Threshold probabilities (strictly greater-than) against a binary mask."""
    p = prob.data if isinstance(prob, Tensor) else np.asarray(prob)
    t = truth.data if isinstance(truth, Tensor) else np.asarray(truth)
    if p.shape != t.shape:
        raise ShapeError(f"probability {p.shape} and truth {t.shape} differ in shape")
    pred = p > threshold
    pos = t > 0.5
    return ConfusionCounts(
        tp=int(np.count_nonzero(pred & pos)),
        fp=int(np.count_nonzero(pred & ~pos)),
        tn=int(np.count_nonzero(~pred & ~pos)),
        fn=int(np.count_nonzero(~pred & pos)),
    )


def scores(c: ConfusionCounts) -> MetricScores:
    """Precision, recall, F1 and IoU; a zero denominator yields None rather
    than a silently perfect or zero score."""
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else None
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else None
    if precision is not None and recall is not None and precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
        iou = (
            precision * recall / (precision + recall - precision * recall)
        )
    elif precision is not None and recall is not None:
        # both defined but zero: no true positives among predictions/truth
        f1 = 0.0
        iou = 0.0
    else:
        f1 = None
        iou = None
    return MetricScores(precision, recall, f1, iou)


def evaluate_dataset(model, samples, threshold: float = 0.5):
    """One global count over every pixel of every tile, then one scores()."""
    if not samples:
        raise UsageError("evaluate_dataset needs at least one tile")
    total = ConfusionCounts()
    for s in samples:
        prob = model.forward(Tensor(np.asarray(s.image, dtype=model.config.dtype)),
                             mode="infer")
        total = total + confusion_counts(prob.data, np.asarray(s.mask), threshold)
    return total, scores(total)


def write_report_csv(path, rows):
    """rows: iterables of (variant, threshold, ConfusionCounts, MetricScores)."""

    def fmt(v):
        return "undefined" if v is None else f"{v:.6f}"

    with open(path, "w") as fh:
        fh.write("variant,threshold,tp,fp,tn,fn,precision,recall,f1,iou\n")
        for variant, threshold, c, s in rows:
            fh.write(
                f"{variant},{threshold},{c.tp},{c.fp},{c.tn},{c.fn},"
                f"{fmt(s.precision)},{fmt(s.recall)},{fmt(s.f1)},{fmt(s.iou)}\n"
            )
