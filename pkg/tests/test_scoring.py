import math
import statistics

import numpy as np
import pytest

from Code.Common.errors import (
    DimensionMismatch,
    MissingEmbedding,
    RangeError,
    WeightsError,
    ZeroVector,
)
from Code.DynamicWeightedScoring.predict import (
    PairEmbeddings,
    component_matrix,
    label_matrix,
    predict_relation,
)
from Code.DynamicWeightedScoring.scores import (
    ConfidenceScope,
    RoleAggregation,
    ScoreComponents,
    ScoringMode,
    ScoringOptions,
    Weights,
    confidence,
    cosine,
    dynamic_weighted_score,
    role_based_score,
    score_mode,
)
from Code.SideInfoEmbedding.embed import embed_pair, pair_texts

DEFAULT_WEIGHTS = (0.4, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1)


def _components(*values):
    return ScoreComponents(*values)


def _brute_force(pair_vectors, label_vectors, weights=DEFAULT_WEIGHTS):
    """Straight-line cosine, role mean, confidence and weighted sum."""
    def cos(u, v):
        dot = sum(a * b for a, b in zip(u, v))
        return dot / (math.sqrt(sum(a * a for a in u))
                      * math.sqrt(sum(b * b for b in v)))

    a, b, c, d, e, f, g, context = pair_vectors
    finals = []
    for r in label_vectors:
        values = [cos(a, r), cos(b, r), cos(c, r), cos(d, r), cos(e, r),
                  (cos(f, r) + cos(g, r)) / 2, cos(context, r)]
        mean = statistics.fmean(values)
        spread = statistics.pstdev(values)
        conf = min(1.0, max(0.0, (mean + (1 - spread)) / 2))
        finals.append(sum(w * x for w, x in zip(weights, values)) * conf)
    best = max(range(len(finals)), key=lambda i: (finals[i], -i))
    return best, finals


def _random_pair(rng, dim):
    return PairEmbeddings(*(rng.standard_normal(dim) for _ in range(8)))


def test_cosine():
    assert cosine(np.array([1.0, 0.0]), np.array([1.0, 0.0])) == 1.0
    assert cosine(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0
    assert cosine(np.array([1.0, 2.0]), np.array([2.0, 1.0])) == \
        pytest.approx(0.8)


def test_cosine_errors():
    with pytest.raises(DimensionMismatch):
        cosine(np.ones(2), np.ones(3))
    with pytest.raises(ZeroVector):
        cosine(np.zeros(2), np.ones(2))


def test_cosine_is_clamped():
    v = np.array([0.1, 0.2, 0.3])
    assert -1.0 <= cosine(v, v * 3) <= 1.0


def test_role_based_score():
    assert role_based_score(0.6, 0.8) == pytest.approx(0.7)
    assert role_based_score(1.0, -1.0) == 0.0
    assert role_based_score(0.35, 0.35) == pytest.approx(0.35)
    with pytest.raises(RangeError):
        role_based_score(1.5, 0.0)


def test_confidence():
    assert confidence(_components(*[1.0] * 7)) == pytest.approx(1.0)
    assert confidence(_components(*[0.4] * 7)) == pytest.approx(0.7)
    assert confidence(_components(0.9, *[0.5] * 6)) == \
        pytest.approx(0.708586, abs=1e-6)


def test_confidence_without_context():
    components = _components(0.9, 0.5, 0.5, 0.5, 0.5, 0.5, -1.0)
    values = [0.9, 0.5, 0.5, 0.5, 0.5, 0.5]
    expected = (statistics.fmean(values) + 1 - statistics.pstdev(values)) / 2

    assert confidence(components, ConfidenceScope.exclude_context) == \
        pytest.approx(expected, abs=1e-12)


def test_confidence_is_clipped_at_zero():
    assert confidence(_components(*[-1.0] * 7)) == 0.0


def test_dynamic_weighted_score_fixtures():
    top = dynamic_weighted_score(_components(*[1.0] * 7))
    half = dynamic_weighted_score(_components(*[0.5] * 7))
    mixed = dynamic_weighted_score(_components(0.9, *[0.5] * 6))

    assert (top.weighted_sum, top.confidence, top.final_score) == \
        pytest.approx((1.0, 1.0, 1.0))
    assert half.weighted_sum == pytest.approx(0.5)
    assert half.confidence == pytest.approx(0.75)
    assert half.final_score == pytest.approx(0.375, abs=1e-12)
    assert mixed.weighted_sum == pytest.approx(0.66, abs=1e-12)
    assert mixed.confidence == pytest.approx(0.708586, abs=1e-6)
    # 0.66 x 0.708586
    assert mixed.final_score == pytest.approx(0.467667, abs=1e-6)
    assert mixed.final_score == pytest.approx(
        mixed.weighted_sum * mixed.confidence, abs=1e-12)


def test_components_must_be_in_range():
    with pytest.raises(RangeError):
        _components(1.2, 0, 0, 0, 0, 0, 0)


@pytest.mark.parametrize("values", [
    (0.5, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1),
    (0.4, 0.1, 0.1, 0.1, 0.1, 0.3, -0.1),
    (0.4, 0.1, 0.1, 0.1, 0.1, 0.1),
])
def test_invalid_weights(values):
    with pytest.raises(WeightsError):
        Weights.from_value(values)


def test_weights_from_mapping():
    weights = Weights.from_value({"desc": 0.7, "head_hyp": 0.3,
                                  "tail_hyp": 0, "head_type": 0,
                                  "tail_type": 0, "role": 0, "context": 0})

    assert weights.as_array().tolist() == [0.7, 0.3, 0, 0, 0, 0, 0]
    with pytest.raises(WeightsError):
        Weights.from_value({"desk": 1.0})


def test_score_modes():
    components = _components(0.6, 0.3, 0.3, 0.0, 0.3, -0.5, 0.2)

    assert score_mode(_components(0.42, 0, 0, 0, 0, 0, 0),
                      ScoringMode.desc_only) == pytest.approx(0.42)
    assert score_mode(components, "desc_hypernym") == pytest.approx(0.4)
    assert score_mode(components, "desc_type") == pytest.approx(0.3)
    assert score_mode(components, "desc_hyp_type") == pytest.approx(0.3)
    assert score_mode(components, "full_weighted") == pytest.approx(
        dynamic_weighted_score(components).final_score, abs=1e-12)


def test_weighted_sum_increases_with_each_weighted_component():
    base = [0.2] * 7
    before = dynamic_weighted_score(_components(*base)).weighted_sum
    for position in range(7):
        raised = list(base)
        raised[position] = 0.3
        assert dynamic_weighted_score(
            _components(*raised)).weighted_sum > before


def test_predict_single_candidate():
    rng = np.random.default_rng(1)
    pair = _random_pair(rng, 8)

    label, breakdowns = predict_relation(pair, ["only"],
                                         {"only": rng.standard_normal(8)})

    assert label == "only"
    assert len(breakdowns) == 1


def test_predict_picks_highest_and_breaks_ties_early():
    pair = PairEmbeddings(*[np.array([1.0, 0.0])] * 8)
    labels = {"low": np.array([1.0, 1.0]), "high": np.array([1.0, 0.0]),
              "twin": np.array([2.0, 0.0])}

    label, breakdowns = predict_relation(pair, ["low", "high", "twin"],
                                         labels)

    assert label == "high"
    assert [breakdown.label for breakdown in breakdowns] == [
        "low", "high", "twin"]
    assert breakdowns[1].final_score == pytest.approx(1.0)


def test_predict_requires_every_embedding():
    rng = np.random.default_rng(2)
    pair = _random_pair(rng, 4)
    with pytest.raises(MissingEmbedding):
        predict_relation(pair, ["a", "b"], {"a": rng.standard_normal(4)})

    partial = PairEmbeddings(*[rng.standard_normal(4)] * 7, None)
    with pytest.raises(MissingEmbedding) as error:
        predict_relation(partial, ["a"], {"a": rng.standard_normal(4)})
    assert error.value.name == "context"


def test_matches_brute_force_oracle():
    rng = np.random.default_rng(1234)
    for _ in range(1000):
        dim = int(rng.integers(4, 17))
        num_labels = int(rng.integers(1, 6))
        pair = _random_pair(rng, dim)
        labels = [f"label{i}" for i in range(num_labels)]
        vectors = {label: rng.standard_normal(dim) for label in labels}

        label, breakdowns = predict_relation(pair, labels, vectors)
        best, finals = _brute_force(
            [getattr(pair, name) for name in (
                "combined_description", "head_hypernym", "tail_hypernym",
                "head_type", "tail_type", "head_role", "tail_role",
                "context")],
            [vectors[name] for name in labels])

        assert label == labels[best]
        for breakdown, expected in zip(breakdowns, finals):
            assert breakdown.final_score == pytest.approx(expected, abs=1e-9)


def test_scale_and_permutation_invariance():
    rng = np.random.default_rng(7)
    pair = _random_pair(rng, 12)
    labels = ["a", "b", "c", "d", "e"]
    vectors = {label: rng.standard_normal(12) for label in labels}
    winner, _ = predict_relation(pair, labels, vectors)

    scaled = dict(vectors, c=vectors["c"] * 7.5)
    scaled_pair = PairEmbeddings(
        *[getattr(pair, name) * 3.0 for name in (
            "combined_description", "head_hypernym", "tail_hypernym",
            "head_type", "tail_type", "head_role", "tail_role", "context")])

    assert predict_relation(scaled_pair, labels, scaled)[0] == winner
    assert predict_relation(pair, labels[::-1], vectors)[0] == winner


def test_desc_only_weights_match_desc_only_ranking():
    rng = np.random.default_rng(3)
    pair = _random_pair(rng, 10)
    labels = ["a", "b", "c", "d"]
    matrix = component_matrix(pair, label_matrix(
        labels, {label: rng.standard_normal(10) for label in labels}))

    desc_first = Weights(1, 0, 0, 0, 0, 0, 0)
    weighted = matrix @ desc_first.as_array()

    assert np.argsort(-weighted).tolist() == np.argsort(-matrix[:, 0]).tolist()


def test_role_aggregation_options():
    head = np.array([1.0, 0.0])
    tail = np.array([0.0, 1.0])
    pair = PairEmbeddings(head, head, head, head, head, head, tail, head)
    labels = np.array([[1.0, 1.0]])

    by_score = component_matrix(pair, labels)
    by_vector = component_matrix(
        pair, labels,
        ScoringOptions(role_aggregation=RoleAggregation.vector_mean_then_cosine))

    assert by_score[0, 5] == pytest.approx(math.sqrt(0.5))
    assert by_vector[0, 5] == pytest.approx(1.0)


def test_synthetic_pair_prefers_gold_label(synthetic_dataset, synthetic_store,
                                           mock_service):
    document = synthetic_dataset.documents[0]
    relation = document.gold_relations[0]
    labels = synthetic_dataset.labels
    pair = embed_pair(mock_service, pair_texts(
        synthetic_store, document.doc_id, relation.head_index,
        relation.tail_index))

    label, _ = predict_relation(pair, labels,
                                mock_service.embed_relation_labels(labels))

    assert label == relation.relation_label
