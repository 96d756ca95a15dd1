"""Pair-classification and ranking metrics.

Degenerate cases follow fixed conventions rather than erroring where a
convention is standard (zero denominators in P/R/F1); ROC-AUC refuses
single-class input because no convention makes it meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .numerics import ContractError


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ContractError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(scores: Iterable[tuple[float, int]], theta: float) -> ConfusionCounts:
    """Counts with predict-positive iff p > theta (strict)."""
    tp = fp = tn = fn = 0
    n = 0
    for p, label in scores:
        if label not in (0, 1):
            raise ContractError(f"label must be 0 or 1, got {label!r}")
        n += 1
        predicted = p > theta
        if predicted and label == 1:
            tp += 1
        elif predicted:
            fp += 1
        elif label == 1:
            fn += 1
        else:
            tn += 1
    if n == 0:
        raise ContractError("confusion over an empty score list")
    return ConfusionCounts(tp, fp, tn, fn)


def f1_accuracy(c: ConfusionCounts) -> tuple[float, float]:
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    accuracy = (c.tp + c.tn) / c.total
    return f1, accuracy


def roc_auc(scores: Iterable[tuple[float, int]]) -> float:
    """Mann-Whitney form: P(score_pos > score_neg) with ties worth 0.5.

    Computed through midranks; exactly equal to the all-pairs count because
    wins and half-ties stay integer-plus-half throughout.
    """
    pairs = list(scores)
    values = np.array([p for p, _ in pairs], dtype=np.float64)
    labels = np.array([label for _, label in pairs], dtype=np.int64)
    if not np.isin(labels, (0, 1)).all():
        raise ContractError("labels must be 0 or 1")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ContractError("roc_auc needs at least one positive and one negative")
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        # ranks are 1-based; tied block shares the midrank
        ranks[order[i : j + 1]] = (i + j + 2) / 2.0
        i = j + 1
    rank_sum_pos = float(ranks[labels == 1].sum())
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def precision_at_k(
    ranked: Mapping, gold: Mapping, k: int
) -> float:
    """Macro mean over queries of |top-k hits| / k.

    Ranked lists shorter than k still divide by k; queries missing from
    ``gold`` contribute zero hits.
    """
    if k < 1:
        raise ContractError("k must be a positive integer")
    if not ranked:
        raise ContractError("precision_at_k over zero queries")
    total = 0.0
    for query, ids in ranked.items():
        relevant = set(gold.get(query, ()))
        hits = sum(1 for id in ids[:k] if id in relevant)
        total += hits / k
    return total / len(ranked)


@dataclass(frozen=True)
class MetricsReport:
    f1: float
    accuracy: float
    roc_auc: float
    precision_at: dict
    confusion: ConfusionCounts

    @classmethod
    def from_scores(
        cls,
        scores: Sequence[tuple[float, int]],
        theta: float,
        ranked: Mapping | None = None,
        gold: Mapping | None = None,
        ks: Sequence[int] = (),
    ) -> "MetricsReport":
        c = confusion(scores, theta)
        f1, acc = f1_accuracy(c)
        auc = roc_auc(scores)
        prec = {k: precision_at_k(ranked, gold, k) for k in ks} if ranked else {}
        return cls(f1, acc, auc, prec, c)
