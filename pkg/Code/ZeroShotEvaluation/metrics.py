from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

import numpy as np
from sklearn.metrics import precision_recall_fscore_support

from Code.Common.errors import LabelOutOfSet


class LabeledPrediction(Protocol):
    gold_label: str
    predicted_label: str


@dataclass(frozen=True)
class LabelScore:
    label: str
    precision: float
    recall: float
    f1: float
    support: int
    predicted: int


def _check(records: Sequence[LabeledPrediction], labels: set[str]) -> None:
    for record in records:
        for role, label in (("gold", record.gold_label),
                            ("predicted", record.predicted_label)):
            if label not in labels:
                raise LabelOutOfSet(
                    f"{role} label {label!r} is not in the label set "
                    f"{sorted(labels)}."
                )


def per_label_scores(records: Sequence[LabeledPrediction],
                     labelset: Iterable[str]) -> list[LabelScore]:
    """
    Precision, recall and F1 of every label, sorted by label. A label that
    is never gold and never predicted gets 0 everywhere.
    """
    labels = sorted(set(labelset))
    _check(records, set(labels))
    if not records:
        return [LabelScore(label, 0.0, 0.0, 0.0, 0, 0) for label in labels]
    gold = [record.gold_label for record in records]
    predicted = [record.predicted_label for record in records]
    precision, recall, f1, support = precision_recall_fscore_support(
        gold, predicted, labels=labels, zero_division=0)
    predicted_counts = {label: predicted.count(label) for label in labels}
    return [
        LabelScore(label, float(precision[i]), float(recall[i]), float(f1[i]),
                   int(support[i]), predicted_counts[label])
        for i, label in enumerate(labels)
    ]


def macro_f1(records: Sequence[LabeledPrediction], labelset: Iterable[str],
             exclude_zero_support: bool = False) -> float:
    """
    Unweighted mean of the per-label F1 over labelset.
    :param exclude_zero_support: Leave out labels that are neither gold nor
    predicted in any record instead of counting them as F1 = 0.
    """
    scores = per_label_scores(records, labelset)
    if exclude_zero_support:
        scores = [score for score in scores
                  if score.support or score.predicted]
    if not scores:
        return 0.0
    return float(np.mean([score.f1 for score in scores]))


def label_hit_rate(records: Sequence[LabeledPrediction]) -> float:
    """
    Share of the distinct gold labels that were predicted correctly at
    least once.
    """
    gold = {record.gold_label for record in records}
    if not gold:
        return 0.0
    hit = {record.gold_label for record in records
           if record.gold_label == record.predicted_label}
    return len(hit) / len(gold)


def population_variance(values: Sequence[float]) -> float:
    return float(np.var(np.asarray(values, dtype=np.float64)))
