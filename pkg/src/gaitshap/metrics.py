"""Segment-level classification metrics, ROC curves and AUC.

The positive class is OlderAdult (label 1).
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import EmptyInput, EmptyMatrix, GaitShapError, LengthMismatch, OneClassOnly
from .preprocessing import Group


def _labels(values) -> np.ndarray:
    out = []
    for v in values:
        if isinstance(v, (Group, str)):
            v = Group(v).label
        out.append(int(v))
    arr = np.asarray(out, dtype=np.int64)
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise GaitShapError("labels must be binary")
    return arr


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise GaitShapError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_rates(cls, negative_correct: float, positive_correct: float,
                   n_negative: int, n_positive: int) -> "ConfusionMatrix":
        """Rebuild counts from per-class correct rates (rounded to whole samples)."""
        tn = int(round(negative_correct * n_negative))
        tp = int(round(positive_correct * n_positive))
        return cls(tp=tp, fp=n_negative - tn, tn=tn, fn=n_positive - tp)


class Metrics(NamedTuple):
    accuracy: float
    precision: float
    recall: float
    f1: float


def confusion_matrix(predicted: Sequence, truth: Sequence) -> ConfusionMatrix:
    p, t = _labels(predicted), _labels(truth)
    if len(p) != len(t):
        raise LengthMismatch(f"{len(p)} predictions vs {len(t)} labels")
    if len(p) == 0:
        raise EmptyInput("no samples")
    return ConfusionMatrix(tp=int(np.sum((p == 1) & (t == 1))), fp=int(np.sum((p == 1) & (t == 0))),
                           tn=int(np.sum((p == 0) & (t == 0))), fn=int(np.sum((p == 0) & (t == 1))))


def classification_metrics(cm: ConfusionMatrix) -> Metrics:
    """Accuracy, precision, recall and F1; undefined ratios are reported as 0."""
    if cm.total == 0:
        raise EmptyMatrix("confusion matrix is empty")
    acc = (cm.tp + cm.tn) / cm.total
    prec = cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp else 0.0
    rec = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return Metrics(acc, prec, rec, f1)


def roc_points(scores: Sequence[float], truth: Sequence) -> list[tuple[float, float]]:
    """ROC curve from positive-class scores.

    Each distinct score, taken in descending order, is one threshold
    (``score >= threshold`` is called positive), so tied scores move the
    curve in a single diagonal step. Starts at (0, 0) and ends at (1, 1).
    """
    s = np.asarray(scores, dtype=np.float64)
    t = _labels(truth)
    if len(s) != len(t):
        raise LengthMismatch(f"{len(s)} scores vs {len(t)} labels")
    P, N = int(t.sum()), int(len(t) - t.sum())
    if P == 0 or N == 0:
        raise OneClassOnly("ROC needs both classes")
    order = np.argsort(-s, kind="stable")
    s, t = s[order], t[order]
    # last index of each run of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tps = np.cumsum(t)[ends]
    fps = (ends + 1) - tps
    pts = [(0.0, 0.0)] + [(fp / N, tp / P) for fp, tp in zip(fps, tps)]
    if pts[-1] != (1.0, 1.0):
        pts.append((1.0, 1.0))
    return pts


def auc_trapezoid(points: Sequence[tuple[float, float]]) -> float:
    pts = np.asarray(points, dtype=np.float64)
    x, y = pts[:, 0], pts[:, 1]
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2.0))


@dataclass
class EvalReport:
    confusion: ConfusionMatrix
    accuracy: float
    precision: float
    recall: float
    f1: float
    roc: list
    auc: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["roc"] = [list(p) for p in self.roc]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        d = dict(d)
        d["confusion"] = ConfusionMatrix(**d["confusion"])
        d["roc"] = [tuple(p) for p in d["roc"]]
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "EvalReport":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save_roc_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("fpr", "tpr"))
            w.writerows([(repr(a), repr(b)) for a, b in self.roc])


def evaluate(scores: Sequence[float], truth: Sequence) -> EvalReport:
    """Full report from positive-class probabilities; a sample is predicted
    positive when its probability exceeds 0.5."""
    s = np.asarray(scores, dtype=np.float64)
    cm = confusion_matrix((s > 0.5).astype(int), truth)
    m = classification_metrics(cm)
    roc = roc_points(s, truth)
    return EvalReport(cm, m.accuracy, m.precision, m.recall, m.f1, roc, auc_trapezoid(roc))
