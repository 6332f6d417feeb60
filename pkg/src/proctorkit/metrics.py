"""Threshold evaluation suite: confusion counts, accuracy/precision/recall/F1,
rank-based ROC AUC, and a serializable report.

Positive prediction is score >= threshold.  Undefined precision or recall
(zero denominator) is reported as None, never silently as 0, and F1
follows suit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EmptyMatrix, LengthMismatch, SingleClass


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]
    roc_auc: float
    threshold: float
    confusion: ConfusionMatrix
    model_id: str
    granularity: str = "frame"

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "granularity": self.granularity,
            "threshold": self.threshold,
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "roc_auc": self.roc_auc,
            "confusion": {
                "tp": self.confusion.tp,
                "fp": self.confusion.fp,
                "tn": self.confusion.tn,
                "fn": self.confusion.fn,
            },
        }

    def save(self, path) -> None:
        with open(str(path), "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=2)
            fh.write("\n")


def confusion_at(scores, labels, threshold: float) -> ConfusionMatrix:
    s = np.asarray(scores, dtype=np.float64).ravel()
    t = np.asarray(labels).ravel().astype(bool)
    if s.size != t.size:
        raise LengthMismatch(f"{s.size} scores vs {t.size} labels")
    pred = s >= threshold
    return ConfusionMatrix(
        tp=int((pred & t).sum()),
        fp=int((pred & ~t).sum()),
        tn=int((~pred & ~t).sum()),
        fn=int((~pred & t).sum()),
    )


def prf_accuracy(cm: ConfusionMatrix):
    """(accuracy, precision, recall, f1); undefined ratios come back None."""
    if cm.total == 0:
        raise EmptyMatrix("confusion matrix has no entries")
    accuracy = (cm.tp + cm.tn) / cm.total
    precision = cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp else None
    recall = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn else None
    if precision is None or recall is None or precision + recall == 0.0:
        f1 = None
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return accuracy, precision, recall, f1


def roc_auc(scores, labels) -> float:
    """Probability a random positive outscores a random negative, ties half.

    Computed from average ranks (Mann-Whitney U), equivalent to trapezoidal
    integration of the ROC curve.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    t = np.asarray(labels).ravel().astype(bool)
    if s.size != t.size:
        raise LengthMismatch(f"{s.size} scores vs {t.size} labels")
    n_pos = int(t.sum())
    n_neg = t.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUC needs both classes present")
    order = np.argsort(s, kind="stable")
    ranks = np.empty(s.size)
    sorted_s = s[order]
    # average rank within tie groups (1-based)
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum_pos = float(ranks[t].sum())
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def evaluate(scores, labels, threshold: float, model_id: str,
             granularity: str = "frame") -> EvalReport:
    """Full report at a fixed decision threshold."""
    cm = confusion_at(scores, labels, threshold)
    accuracy, precision, recall, f1 = prf_accuracy(cm)
    return EvalReport(
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        roc_auc=roc_auc(scores, labels),
        threshold=threshold,
        confusion=cm,
        model_id=model_id,
        granularity=granularity,
    )


def comparison_table(reports: list[EvalReport]) -> str:
    """Side-by-side text table of evaluation reports."""
    def fmt(v):
        return "undef" if v is None else f"{v:.3f}"

    headers = ["Metric"] + [r.model_id for r in reports]
    rows = [
        ["Accuracy"] + [fmt(r.accuracy) for r in reports],
        ["Precision"] + [fmt(r.precision) for r in reports],
        ["Recall"] + [fmt(r.recall) for r in reports],
        ["F1-Score"] + [fmt(r.f1) for r in reports],
        ["ROC AUC"] + [fmt(r.roc_auc) for r in reports],
        ["False Positives"] + [str(r.confusion.fp) for r in reports],
        ["Threshold"] + [fmt(r.threshold) for r in reports],
        ["Granularity"] + [r.granularity for r in reports],
    ]
    widths = [max(len(str(row[i])) for row in [headers] + rows) for i in range(len(headers))]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(str(c).ljust(w) for c, w in zip(row, widths)))
    return "\n".join(lines)
