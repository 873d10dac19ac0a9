from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Mapping, Sequence

import numpy as np

from Code.Common.errors import MissingEmbedding
from Code.DynamicWeightedScoring.scores import (
    RoleAggregation,
    ScoreBreakdown,
    ScoreComponents,
    ScoringMode,
    ScoringOptions,
    Weights,
    best_index,
    confidence_array,
    cosine_to_rows,
    score_array,
    weighted_sum_array,
)


@dataclass(frozen=True)
class PairEmbeddings:
    """
    The vectors of one (head, tail) pair that get compared with relation
    label vectors.
    """
    combined_description: np.ndarray | None
    head_hypernym: np.ndarray | None
    tail_hypernym: np.ndarray | None
    head_type: np.ndarray | None
    tail_type: np.ndarray | None
    head_role: np.ndarray | None
    tail_role: np.ndarray | None
    context: np.ndarray | None

    def require(self) -> None:
        for item in fields(self):
            if getattr(self, item.name) is None:
                raise MissingEmbedding(item.name)


def label_matrix(candidate_labels: Sequence[str],
                 label_embeddings: Mapping[str, np.ndarray]) -> np.ndarray:
    """Stacks the label vectors in candidate order, one row per label."""
    rows = []
    for label in candidate_labels:
        if label not in label_embeddings:
            raise MissingEmbedding(label)
        rows.append(label_embeddings[label])
    return np.vstack(rows)


def component_matrix(pair: PairEmbeddings, labels: np.ndarray,
                     options: ScoringOptions = ScoringOptions()
                     ) -> np.ndarray:
    """
    The seven components of one pair against every row of labels.
    :return: Array of shape (number of labels, 7) in COMPONENT_NAMES order.
    """
    pair.require()
    if options.role_aggregation is RoleAggregation.vector_mean_then_cosine:
        role = cosine_to_rows((pair.head_role + pair.tail_role) / 2, labels)
    else:
        role = (cosine_to_rows(pair.head_role, labels)
                + cosine_to_rows(pair.tail_role, labels)) / 2
    return np.column_stack([
        cosine_to_rows(pair.combined_description, labels),
        cosine_to_rows(pair.head_hypernym, labels),
        cosine_to_rows(pair.tail_hypernym, labels),
        cosine_to_rows(pair.head_type, labels),
        cosine_to_rows(pair.tail_type, labels),
        role,
        cosine_to_rows(pair.context, labels),
    ])


def score_matrix(components: np.ndarray, mode: ScoringMode | str,
                 weights: Weights = Weights(),
                 options: ScoringOptions = ScoringOptions()) -> np.ndarray:
    return score_array(components, mode, weights, options.confidence_scope)


def breakdowns(candidate_labels: Sequence[str], components: np.ndarray,
               mode: ScoringMode | str, weights: Weights = Weights(),
               options: ScoringOptions = ScoringOptions()
               ) -> list[ScoreBreakdown]:
    weighted = weighted_sum_array(components, weights)
    confidence = confidence_array(components, options.confidence_scope)
    mode_scores = score_matrix(components, mode, weights, options)
    return [
        ScoreBreakdown(
            label=label,
            components=ScoreComponents.from_array(components[row]),
            weighted_sum=float(weighted[row]),
            confidence=float(confidence[row]),
            final_score=float(weighted[row] * confidence[row]),
            mode_score=float(mode_scores[row])
        )
        for row, label in enumerate(candidate_labels)
    ]


def predict_relation(
        pair: PairEmbeddings,
        candidate_labels: Sequence[str],
        label_embeddings: Mapping[str, np.ndarray],
        mode: ScoringMode | str = ScoringMode.full_weighted,
        weights: Weights = Weights(),
        options: ScoringOptions = ScoringOptions()
) -> tuple[str, list[ScoreBreakdown]]:
    """
    Picks the candidate label with the highest score under mode.
    :return: The winning label and one breakdown per candidate, in candidate
    order. Ties go to the earliest candidate.
    """
    if not candidate_labels:
        raise ValueError("candidate_labels is empty.")
    components = component_matrix(
        pair, label_matrix(candidate_labels, label_embeddings), options)
    scored = breakdowns(candidate_labels, components, mode, weights, options)
    winner = best_index([breakdown.mode_score for breakdown in scored])
    return candidate_labels[winner], scored
