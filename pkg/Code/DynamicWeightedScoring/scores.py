"""
Similarity components and the scores built from them.

Every label gets seven components: cosine similarities between the relation
label embedding and the combined description (desc), the head and tail
hypernyms, the head and tail types, the mean of the two role prompts (role)
and the context prompt (context). The dynamic weighted score is the weighted
sum of the seven times a confidence factor that is high when the components
are both high and close to each other.

The array functions take (..., 7) arrays so one call scores every candidate
label of a pair; the scalar functions run through them so both paths give
the same numbers.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Mapping, Sequence

import numpy as np

from Code.Common.errors import (
    DimensionMismatch,
    RangeError,
    WeightsError,
    ZeroVector,
)

TOLERANCE = 1e-9
COMPONENT_NAMES = ("desc", "head_hyp", "tail_hyp", "head_type", "tail_type",
                   "role", "context")
CONTEXT_COLUMN = COMPONENT_NAMES.index("context")


class ScoringMode(str, Enum):
    desc_only = "desc_only"
    desc_hypernym = "desc_hypernym"
    desc_type = "desc_type"
    desc_hyp_type = "desc_hyp_type"
    full_weighted = "full_weighted"


# Components averaged by the unweighted modes.
_MODE_COLUMNS = {
    ScoringMode.desc_only: [0],
    ScoringMode.desc_hypernym: [0, 1, 2],
    ScoringMode.desc_type: [0, 3, 4],
    ScoringMode.desc_hyp_type: [0, 1, 2, 3, 4],
}


class RoleAggregation(str, Enum):
    score_mean = "score_mean"
    vector_mean_then_cosine = "vector_mean_then_cosine"


class ConfidenceScope(str, Enum):
    all_seven = "all_seven"
    exclude_context = "exclude_context"


@dataclass
class ScoringOptions:
    role_aggregation: RoleAggregation = RoleAggregation.score_mean
    confidence_scope: ConfidenceScope = ConfidenceScope.all_seven

    def __post_init__(self):
        self.role_aggregation = RoleAggregation(self.role_aggregation)
        self.confidence_scope = ConfidenceScope(self.confidence_scope)


@dataclass(frozen=True)
class ScoreComponents:
    desc: float
    head_hyp: float
    tail_hyp: float
    head_type: float
    tail_type: float
    role: float
    context: float

    def __post_init__(self):
        for name in COMPONENT_NAMES:
            value = getattr(self, name)
            if not -1 - TOLERANCE <= value <= 1 + TOLERANCE:
                raise RangeError(
                    f"Component {name}={value} is outside [-1, 1].")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in COMPONENT_NAMES],
                        dtype=np.float64)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> ScoreComponents:
        return cls(*(float(value) for value in values))


@dataclass(frozen=True)
class Weights:
    desc: float = 0.4
    head_hyp: float = 0.1
    tail_hyp: float = 0.1
    head_type: float = 0.1
    tail_type: float = 0.1
    role: float = 0.1
    context: float = 0.1

    def __post_init__(self):
        values = [getattr(self, name) for name in COMPONENT_NAMES]
        if any(value < 0 for value in values):
            raise WeightsError(f"Weights should be >= 0, got {values}.")
        total = math.fsum(values)
        if abs(total - 1.0) > TOLERANCE:
            raise WeightsError(f"Weights should sum to 1, got {total}.")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in COMPONENT_NAMES],
                        dtype=np.float64)

    def to_dict(self) -> dict[str, float]:
        return asdict(self)

    @classmethod
    def from_value(cls, value: Mapping[str, float] | Sequence[float]
                   ) -> Weights:
        """Accepts a name -> weight mapping or seven weights in order."""
        if isinstance(value, Mapping):
            unknown = set(value) - set(COMPONENT_NAMES)
            if unknown:
                raise WeightsError(f"Unknown weight names {sorted(unknown)}.")
            return cls(**{name: float(weight)
                          for name, weight in value.items()})
        values = list(value)
        if len(values) != len(COMPONENT_NAMES):
            raise WeightsError(
                f"Expected {len(COMPONENT_NAMES)} weights, got {len(values)}.")
        return cls(*(float(weight) for weight in values))


@dataclass(frozen=True)
class ScoreBreakdown:
    """
    Everything computed for one (pair, label): the components, the weighted
    sum, the confidence, the dynamic weighted score (final_score) and the
    score of the active mode that was used for ranking (mode_score).
    """
    label: str
    components: ScoreComponents
    weighted_sum: float
    confidence: float
    final_score: float
    mode_score: float = field(default=0.0)

    def to_dict(self) -> dict[str, Any]:
        record = asdict(self)
        record["components"] = asdict(self.components)
        return record


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionMismatch(u.shape[-1], v.shape[-1])
    norm_u = np.linalg.norm(u)
    norm_v = np.linalg.norm(v)
    if norm_u == 0 or norm_v == 0:
        raise ZeroVector("Cosine similarity of an all-zero vector.")
    return float(np.clip(np.dot(u, v) / (norm_u * norm_v), -1.0, 1.0))


def cosine_to_rows(u: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Cosine of u against every row of matrix."""
    u = np.asarray(u, dtype=np.float64)
    if matrix.shape[-1] != u.shape[-1]:
        raise DimensionMismatch(matrix.shape[-1], u.shape[-1])
    norm_u = np.linalg.norm(u)
    norms = np.linalg.norm(matrix, axis=1)
    if norm_u == 0 or np.any(norms == 0):
        raise ZeroVector("Cosine similarity of an all-zero vector.")
    return np.clip(matrix @ u / (norms * norm_u), -1.0, 1.0)


def role_based_score(head_role_sim: float, tail_role_sim: float) -> float:
    for value in (head_role_sim, tail_role_sim):
        if not -1 - TOLERANCE <= value <= 1 + TOLERANCE:
            raise RangeError(f"Role similarity {value} is outside [-1, 1].")
    return (head_role_sim + tail_role_sim) / 2


def confidence_array(components: np.ndarray,
                     scope: ConfidenceScope = ConfidenceScope.all_seven
                     ) -> np.ndarray:
    """(mean + (1 - population std)) / 2 over the last axis, clipped to [0, 1]."""
    if ConfidenceScope(scope) is ConfidenceScope.exclude_context:
        components = np.delete(components, CONTEXT_COLUMN, axis=-1)
    mean = components.mean(axis=-1)
    deviation = components.std(axis=-1)
    return np.clip((mean + (1 - deviation)) / 2, 0.0, 1.0)


def weighted_sum_array(components: np.ndarray, weights: Weights) -> np.ndarray:
    return components @ weights.as_array()


def score_array(components: np.ndarray, mode: ScoringMode | str,
                weights: Weights = Weights(),
                scope: ConfidenceScope = ConfidenceScope.all_seven
                ) -> np.ndarray:
    mode = ScoringMode(mode)
    if mode is ScoringMode.full_weighted:
        return (weighted_sum_array(components, weights)
                * confidence_array(components, scope))
    return components[..., _MODE_COLUMNS[mode]].mean(axis=-1)


def confidence(components: ScoreComponents,
               scope: ConfidenceScope = ConfidenceScope.all_seven) -> float:
    return float(confidence_array(components.as_array(), scope))


def dynamic_weighted_score(
        components: ScoreComponents,
        weights: Weights = Weights(),
        scope: ConfidenceScope = ConfidenceScope.all_seven,
        label: str = ""
) -> ScoreBreakdown:
    values = components.as_array()
    weighted_sum = float(weighted_sum_array(values, weights))
    confidence_factor = float(confidence_array(values, scope))
    final_score = weighted_sum * confidence_factor
    return ScoreBreakdown(
        label=label,
        components=components,
        weighted_sum=weighted_sum,
        confidence=confidence_factor,
        final_score=final_score,
        mode_score=final_score
    )


def score_mode(components: ScoreComponents, mode: ScoringMode | str,
               weights: Weights = Weights(),
               scope: ConfidenceScope = ConfidenceScope.all_seven) -> float:
    return float(score_array(components.as_array(), mode, weights, scope))


def best_index(scores: Sequence[float]) -> int:
    """
    Index of the highest score. Scores within TOLERANCE of the maximum count
    as tied and the earliest of them wins.
    """
    scores = np.asarray(scores, dtype=np.float64)
    return int(np.flatnonzero(scores >= scores.max() - TOLERANCE)[0])
