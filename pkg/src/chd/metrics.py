"""Confusion-matrix metrics for binary classifiers.

Ratio metrics return ``None`` when their denominator is zero; reports render
that as ``UNDEFINED_TEXT`` rather than inventing a 0 or a 1.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, fields
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import ShapeError

UNDEFINED_TEXT = "—"


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def _binary(a, name: str) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 1:
        raise ShapeError(f"{name} must be one-dimensional")
    if a.size and not np.isin(a, (0, 1)).all():
        raise ShapeError(f"{name} must contain only 0 and 1")
    return a.astype(np.int64)


def confusion(y_true: Sequence[int], y_pred: Sequence[int]) -> ConfusionMatrix:
    t = _binary(y_true, "y_true")
    p = _binary(y_pred, "y_pred")
    if t.shape != p.shape:
        raise ShapeError(f"length mismatch: {t.size} labels vs {p.size} predictions")
    return ConfusionMatrix(
        tp=int(np.sum((t == 1) & (p == 1))),
        tn=int(np.sum((t == 0) & (p == 0))),
        fp=int(np.sum((t == 0) & (p == 1))),
        fn=int(np.sum((t == 1) & (p == 0))),
    )


def _ratio(num: int, den: int) -> Optional[float]:
    return None if den == 0 else num / den


def accuracy(cm: ConfusionMatrix) -> Optional[float]:
    return _ratio(cm.tp + cm.tn, cm.total)


def precision(cm: ConfusionMatrix) -> Optional[float]:
    return _ratio(cm.tp, cm.tp + cm.fp)


def recall(cm: ConfusionMatrix) -> Optional[float]:
    return _ratio(cm.tp, cm.tp + cm.fn)


def specificity(cm: ConfusionMatrix) -> Optional[float]:
    return _ratio(cm.tn, cm.tn + cm.fp)


def npv(cm: ConfusionMatrix) -> Optional[float]:
    return _ratio(cm.tn, cm.tn + cm.fn)


def f_measure(cm: ConfusionMatrix) -> Optional[float]:
    """Harmonic mean of precision and recall.

    Undefined when either component is undefined or both are zero.
    Evaluated as ``2TP / (2TP + FP + FN)``, the same quantity with a single
    rounding, so the result never leaves ``[min(P, R), max(P, R)]``.
    """
    p, r = precision(cm), recall(cm)
    if p is None or r is None or p + r == 0:
        return None
    return 2 * cm.tp / (2 * cm.tp + cm.fp + cm.fn)


def roc_auc(y_true: Sequence[int], scores: Sequence[float]) -> Optional[float]:
    """Probability that a random positive outscores a random negative.

    Tied pairs count one half.  Computed from mid-ranks, which equals the
    pairwise count exactly.
    """
    t = _binary(y_true, "y_true")
    s = np.asarray(scores, dtype=np.float64)
    if s.shape != t.shape:
        raise ShapeError(f"length mismatch: {t.size} labels vs {s.size} scores")
    n_pos = int(t.sum())
    n_neg = t.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(s, method="average")
    u = ranks[t == 1].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True)
class MetricsReport:
    accuracy: Optional[float]
    precision: Optional[float]
    recall: Optional[float]
    f_measure: Optional[float]
    specificity: Optional[float]
    npv: Optional[float]
    roc_auc: Optional[float]

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def evaluate(y_true, y_pred, scores=None) -> MetricsReport:
    cm = confusion(y_true, y_pred)
    return MetricsReport(
        accuracy=accuracy(cm),
        precision=precision(cm),
        recall=recall(cm),
        f_measure=f_measure(cm),
        specificity=specificity(cm),
        npv=npv(cm),
        roc_auc=None if scores is None else roc_auc(y_true, scores),
    )


TABLE_COLUMNS = (
    "Classifier", "Accuracy %", "Precision", "Recall", "F-Measure",
    "Accuracy", "Specificity", "NPV", "ROC AUC",
)


def _fmt(value: Optional[float], digits: int = 4) -> str:
    return UNDEFINED_TEXT if value is None else f"{value:.{digits}f}"


def table_row(name: str, report: MetricsReport) -> list[str]:
    """Classifier, accuracy %, precision, recall and F-measure, then the extended columns."""
    pct = None if report.accuracy is None else 100.0 * report.accuracy
    return [
        name, _fmt(pct, 2), _fmt(report.precision), _fmt(report.recall),
        _fmt(report.f_measure), _fmt(report.accuracy), _fmt(report.specificity),
        _fmt(report.npv), _fmt(report.roc_auc),
    ]


def metrics_csv(rows: Sequence[tuple[str, MetricsReport]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TABLE_COLUMNS)
    for name, report in rows:
        writer.writerow(table_row(name, report))
    return buf.getvalue()
