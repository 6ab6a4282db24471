"""Binary-detection metrics: ranking AUC, equal error rate, accuracy."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .errors import InputError, MetricError


def _check_two_classes(labels: np.ndarray):
    if labels.min() == labels.max():
        raise MetricError("metric needs both classes present")


def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Probability a random positive outranks a random negative (ties count 1/2).

    Mann-Whitney / rank formulation with midranks for tied scores.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape:
        raise InputError(f"scores/labels length mismatch: {s.shape} vs {y.shape}")
    _check_two_classes(y)
    order = np.argsort(s, kind="stable")
    ranks = np.empty(s.size, dtype=np.float64)
    sorted_scores = s[order]
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # midrank, 1-based
        i = j + 1
    n_pos = int((y == 1).sum())
    n_neg = y.size - n_pos
    rank_sum = ranks[y == 1].sum()
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def roc_points(scores: Sequence[float], labels: Sequence[int]) -> List[Tuple[float, float]]:
    """(FPR, TPR) at every distinct score threshold, highest threshold first."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    _check_two_classes(y)
    n_pos = int((y == 1).sum())
    n_neg = y.size - n_pos
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and s[j + 1] == s[i]:
            j += 1
        tp += int((y[i : j + 1] == 1).sum())
        fp += int((y[i : j + 1] == 0).sum())
        points.append((fp / n_neg, tp / n_pos))
        i = j + 1
    return points


def eer(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Error rate where the false-positive and false-negative rates meet.

    Walks the ROC polyline and linearly interpolates within the segment
    where FPR - FNR changes sign.
    """
    pts = roc_points(scores, labels)
    prev_fpr, prev_fnr = pts[0][0], 1.0 - pts[0][1]
    prev_diff = prev_fpr - prev_fnr
    for fpr, tpr in pts[1:]:
        fnr = 1.0 - tpr
        diff = fpr - fnr
        if diff == 0.0:
            return fpr
        if prev_diff < 0.0 < diff:
            t = -prev_diff / (diff - prev_diff)
            return prev_fpr + t * (fpr - prev_fpr)
        prev_fpr, prev_fnr, prev_diff = fpr, fnr, diff
    # No crossing inside the polyline: the scorer is degenerate at an endpoint.
    return prev_fpr if prev_diff >= 0 else prev_fnr


def acc(labels: Sequence[int], predicted: Sequence[int]) -> float:
    y = np.asarray(labels)
    p = np.asarray(predicted)
    if y.shape != p.shape:
        raise InputError(f"labels/predictions length mismatch: {y.shape} vs {p.shape}")
    return float((y == p).mean())


@dataclass
class MetricsReport:
    auc: float
    eer: float
    acc: float
    n: int
    domain: str
    split: str
    roc: List[Tuple[float, float]] = field(default_factory=list, repr=False)

    def to_json(self) -> str:
        return json.dumps(
            {"auc": self.auc, "eer": self.eer, "acc": self.acc,
             "n": self.n, "domain": self.domain, "split": self.split},
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        d = json.loads(text)
        return cls(auc=d["auc"], eer=d["eer"], acc=d["acc"],
                   n=d["n"], domain=d["domain"], split=d["split"])


def compute_report(scores, labels, predicted, domain: str, split: str) -> MetricsReport:
    return MetricsReport(
        auc=auc(scores, labels),
        eer=eer(scores, labels),
        acc=acc(labels, predicted),
        n=len(labels),
        domain=domain,
        split=split,
        roc=roc_points(scores, labels),
    )
