"""Exact ranking metrics over scored predictions: AUC, AP, accuracy.

AUC uses the rank (Mann-Whitney) formulation with ties counted as 0.5.
AP groups tied scores at a single threshold. Both are exact, not
interpolated or binned.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np


class UndefinedMetricError(ValueError):
    """Raised when a metric's preconditions are not met (e.g. one class only)."""


@dataclass(frozen=True)
class ScoredPrediction:
    clip_id: str
    score: float  # predicted fake probability
    label: int    # 0 = real, 1 = fake


def _scores_labels(preds) -> tuple[np.ndarray, np.ndarray]:
    scores = np.array([p.score for p in preds], dtype=np.float64)
    labels = np.array([p.label for p in preds], dtype=np.int64)
    if not np.isfinite(scores).all():
        raise UndefinedMetricError("non-finite score")
    return scores, labels


def auc(preds) -> float:
    """Probability a positive outranks a negative, ties counting one half."""
    scores, labels = _scores_labels(preds)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"AUC needs both classes, got {n_pos} positive / {n_neg} negative")
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    while i < len(sorted_scores):
        j = i
        while j + 1 < len(sorted_scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    pos_rank_sum = ranks[labels == 1].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def average_precision(preds) -> float:
    """Sum over distinct thresholds of (recall step) * precision."""
    scores, labels = _scores_labels(preds)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise UndefinedMetricError("AP needs at least one positive")
    order = np.argsort(-scores, kind="mergesort")
    scores, labels = scores[order], labels[order]
    ap = 0.0
    tp = fp = 0
    prev_recall = 0.0
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and scores[j + 1] == scores[i]:
            j += 1
        tp += int(labels[i:j + 1].sum())
        fp += (j + 1 - i) - int(labels[i:j + 1].sum())
        recall = tp / n_pos
        precision = tp / (tp + fp)
        ap += (recall - prev_recall) * precision
        prev_recall = recall
        i = j + 1
    return float(ap)


def accuracy(preds, threshold: float = 0.5) -> float:
    scores, labels = _scores_labels(preds)
    if len(scores) == 0:
        raise UndefinedMetricError("accuracy of an empty prediction set")
    return float(((scores >= threshold) == (labels == 1)).mean())


@dataclass(frozen=True)
class SubsetRow:
    subset: str
    ap: float | None
    auc: float | None
    acc: float | None


def per_subset_report(preds_by_subset: dict[str, list[ScoredPrediction]],
                      warn=None) -> list[SubsetRow]:
    """Per-subset metric rows plus an unweighted mean row.

    A subset failing a metric's precondition gets a blank cell; `warn`
    (callable taking a message) is invoked when that happens.
    """
    rows: list[SubsetRow] = []
    for subset in sorted(preds_by_subset):
        vals: dict[str, float | None] = {}
        for name, fn in (("ap", average_precision), ("auc", auc), ("acc", accuracy)):
            try:
                vals[name] = fn(preds_by_subset[subset])
            except UndefinedMetricError as exc:
                vals[name] = None
                if warn is not None:
                    warn(f"subset {subset!r}: {name} undefined ({exc})")
        rows.append(SubsetRow(subset, vals["ap"], vals["auc"], vals["acc"]))

    def col_mean(values):
        present = [v for v in values if v is not None]
        return sum(present) / len(present) if present else None

    rows.append(SubsetRow("mean",
                          col_mean([r.ap for r in rows]),
                          col_mean([r.auc for r in rows]),
                          col_mean([r.acc for r in rows])))
    return rows


def render_report_csv(rows: list[SubsetRow]) -> str:
    buf = io.StringIO()
    buf.write("subset,ap,auc,acc\n")
    for r in rows:
        cells = ["" if v is None else repr(v) for v in (r.ap, r.auc, r.acc)]
        buf.write(f"{r.subset},{cells[0]},{cells[1]},{cells[2]}\n")
    return buf.getvalue()
