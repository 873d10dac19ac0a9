"""
Zero-shot evaluation protocol.

For every unseen set size n and every run k, n labels are drawn from the
label inventory with the seed derive_run_seed(master_seed, n, k). Each gold
relation whose label is in the drawn set becomes one PredictionRecord: its
pair is scored against the drawn labels only and the best one is predicted.
Each run is scored with macro F1 over the drawn labels; every size reports
the mean and population variance of its runs.

The seven similarity components of a gold pair do not depend on the run, so
they are computed once against the whole inventory and each run just picks
its columns.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np
import pandas as pd
from tqdm import tqdm

from Code.Common.errors import ConfigError, CoverageError, SizeError
from Code.Common.logging_setup import get_logger
from Code.DocumentCorpus.corpus import (
    Dataset,
    PairMode,
    enumerate_entity_pairs,
    sentence_gap,
)
from Code.DynamicWeightedScoring.predict import (
    component_matrix,
    label_matrix,
    score_matrix,
)
from Code.DynamicWeightedScoring.scores import (
    ConfidenceScope,
    RoleAggregation,
    ScoringMode,
    ScoringOptions,
    Weights,
    best_index,
    confidence_array,
    weighted_sum_array,
)
from Code.EntitySideInformation.records import SideInfoStore
from Code.SideInfoEmbedding.embed import (
    EmbeddingService,
    embed_pair,
    normalize_label,
    pair_texts,
)
from Code.ZeroShotEvaluation.gap import (
    GapRow,
    gap_analysis,
    gap_rows_to_dicts,
    render_gap_table,
)
from Code.ZeroShotEvaluation.metrics import (
    label_hit_rate,
    macro_f1,
    per_label_scores,
    population_variance,
)
from Code.ZeroShotEvaluation.sampling import (
    derive_run_seed,
    sample_documents,
    sample_unseen_labels,
)

logger = get_logger(__name__)

REPORT_SCHEMA_VERSION = 1


@dataclass
class EvalConfig:
    sizes: list[int] = field(default_factory=lambda: [5, 10, 15])
    samples_per_size: int = 3
    master_seed: int = 0
    mode: ScoringMode = ScoringMode.full_weighted
    weights: Weights = field(default_factory=Weights)
    role_aggregation: RoleAggregation = RoleAggregation.score_mean
    confidence_scope: ConfidenceScope = ConfidenceScope.all_seven
    exclude_zero_support: bool = False
    verbatim_prompts: bool = False
    raw_labels: bool = False
    # share of the documents evaluated, drawn with the master seed
    document_fraction: float = 1.0

    def __post_init__(self):
        self.mode = ScoringMode(self.mode)
        self.role_aggregation = RoleAggregation(self.role_aggregation)
        self.confidence_scope = ConfidenceScope(self.confidence_scope)
        if not isinstance(self.weights, Weights):
            self.weights = Weights.from_value(self.weights)
        self.sizes = [int(size) for size in self.sizes]
        if not self.sizes or any(size < 1 for size in self.sizes):
            raise ConfigError(
                f"sizes should be a non-empty list of positive integers, "
                f"got {self.sizes}."
            )
        if self.samples_per_size < 1:
            raise ConfigError(
                f"samples_per_size should be >= 1, got "
                f"{self.samples_per_size}."
            )
        if not 0 < self.document_fraction <= 1:
            raise ConfigError(
                f"document_fraction should be in (0, 1], got "
                f"{self.document_fraction}."
            )

    @property
    def options(self) -> ScoringOptions:
        return ScoringOptions(self.role_aggregation, self.confidence_scope)

    def to_dict(self) -> dict[str, Any]:
        config = asdict(self)
        config["weights"] = self.weights.to_dict()
        for name in ("mode", "role_aggregation", "confidence_scope"):
            config[name] = getattr(self, name).value
        return config


@dataclass(frozen=True)
class PredictionRecord:
    doc_id: str
    head_index: int
    tail_index: int
    gold_label: str
    predicted_label: str
    final_score: float
    sentence_gap: int

    @property
    def correct(self) -> bool:
        return self.gold_label == self.predicted_label


@dataclass
class RunResult:
    size: int
    run: int
    seed: int
    labels: list[str]
    macro_f1: float
    label_hit_rate: float
    records: list[PredictionRecord] = field(repr=False)

    def to_dict(self) -> dict[str, Any]:
        return {
            "size": self.size,
            "run": self.run,
            "seed": self.seed,
            "labels": self.labels,
            "macro_f1": self.macro_f1,
            "label_hit_rate": self.label_hit_rate,
            "num_records": len(self.records),
        }


@dataclass
class SizeSummary:
    size: int
    f1_scores: list[float]
    mean_f1: float
    variance: float
    per_label: list[dict[str, Any]]
    gap_table: list[GapRow]

    def to_dict(self) -> dict[str, Any]:
        summary = asdict(self)
        summary["gap_table"] = gap_rows_to_dicts(self.gap_table)
        return summary


@dataclass
class EvalReport:
    config: dict[str, Any]
    runs: list[RunResult]
    sizes: list[SizeSummary]
    gap_table: list[GapRow]
    dataset: str = ""

    @property
    def records(self) -> list[dict[str, Any]]:
        """Every prediction, tagged with its size and run."""
        return [
            {"size": run.size, "run": run.run, **asdict(record),
             "correct": record.correct}
            for run in self.runs
            for record in run.records
        ]

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "dataset": self.dataset,
            "config": self.config,
            "runs": [run.to_dict() for run in self.runs],
            "sizes": [summary.to_dict() for summary in self.sizes],
            "gap_table": gap_rows_to_dicts(self.gap_table),
        }


@dataclass
class _GoldPair:
    """A gold (head, tail) pair with its components, computed once per eval."""
    doc_id: str
    head_index: int
    tail_index: int
    sentence_gap: int
    gold_labels: list[str]
    # (inventory size, 7) components against every inventory label
    components: np.ndarray


def check_coverage(dataset: Dataset, store: SideInfoStore,
                   service: EmbeddingService, cfg: EvalConfig) -> None:
    """
    Raises CoverageError if side information is missing for an entity of a
    gold pair, or, when the service is offline, if any text the evaluation
    needs is not in the embedding cache.
    """
    missing_entities = sorted({
        f"sideinfo:{document.doc_id}:{index}"
        for document in dataset.documents
        for pair in enumerate_entity_pairs(document, PairMode.gold_pairs)
        for index in pair
        if (document.doc_id, index) not in store
    })
    if missing_entities:
        raise CoverageError(missing_entities)
    if not service.offline:
        return
    texts = [normalize_label(label, cfg.raw_labels) for label in dataset.labels]
    for document in dataset.documents:
        for head, tail in enumerate_entity_pairs(document, PairMode.gold_pairs):
            texts.extend(pair_texts(store, document.doc_id, head, tail,
                                    cfg.verbatim_prompts).as_list())
    missing_texts = service.missing(texts)
    if missing_texts:
        raise CoverageError([f"embedding:{text}" for text in missing_texts])


def _gold_pairs(dataset: Dataset, store: SideInfoStore,
                service: EmbeddingService, cfg: EvalConfig) -> list[_GoldPair]:
    """
    Embeds every gold pair of the dataset and computes its components
    against all labels of the inventory. Relations sharing a pair share one
    entry listing all their labels.
    """
    inventory = dataset.labels
    labels = label_matrix(
        inventory,
        service.embed_relation_labels(inventory, cfg.raw_labels)
    )
    pairs = []
    for document in tqdm(dataset.documents, desc="scoring gold pairs"):
        # group the gold labels by pair, in order of first occurrence
        gold: dict[tuple[int, int], list[str]] = {}
        for relation in document.gold_relations:
            gold.setdefault((relation.head_index, relation.tail_index),
                            []).append(relation.relation_label)
        for (head, tail), gold_labels in gold.items():
            texts = pair_texts(store, document.doc_id, head, tail,
                               cfg.verbatim_prompts)
            pairs.append(_GoldPair(
                doc_id=document.doc_id,
                head_index=head,
                tail_index=tail,
                sentence_gap=sentence_gap(document, head, tail),
                gold_labels=gold_labels,
                components=component_matrix(embed_pair(service, texts),
                                            labels, cfg.options)
            ))
    return pairs


def _run_once(pairs: Sequence[_GoldPair], inventory: Sequence[str],
              sampled: Sequence[str], cfg: EvalConfig,
              mode: ScoringMode) -> list[PredictionRecord]:
    """
    Predicts every gold pair with a label in sampled, choosing among the
    sampled labels only.
    :param inventory: The labels the component columns of pairs follow.
    :param sampled: This run's unseen labels, in inventory order.
    :return: One record per (pair, gold label in sampled). The recorded
    final_score is the dynamic weighted score of the winner whatever the
    ranking mode.
    """
    # component rows of the sampled labels only
    columns = [inventory.index(label) for label in sampled]
    sampled_set = set(sampled)
    records = []
    for pair in pairs:
        wanted = [label for label in pair.gold_labels if label in sampled_set]
        if not wanted:
            continue
        components = pair.components[columns]
        # ties go to the earliest sampled label
        winner = best_index(score_matrix(components, mode, cfg.weights,
                                         cfg.options))
        final_score = float(
            weighted_sum_array(components[winner], cfg.weights)
            * confidence_array(components[winner], cfg.confidence_scope)
        )
        for gold_label in wanted:
            records.append(PredictionRecord(
                doc_id=pair.doc_id,
                head_index=pair.head_index,
                tail_index=pair.tail_index,
                gold_label=gold_label,
                predicted_label=sampled[winner],
                final_score=final_score,
                sentence_gap=pair.sentence_gap
            ))
    return records


def _evaluate(pairs: Sequence[_GoldPair], dataset: Dataset,
              cfg: EvalConfig, mode: ScoringMode) -> EvalReport:
    """
    Draws the label samples of every size and run and predicts each sampled
    gold pair under mode.
    :param pairs: Gold pairs scored by _gold_pairs against dataset.labels.
    :return: The report of this mode; its config lists every run seed.
    """
    inventory = dataset.labels
    runs = []
    summaries = []
    for size in cfg.sizes:
        size_runs = []
        for run in range(cfg.samples_per_size):
            seed = derive_run_seed(cfg.master_seed, size, run)
            sampled = sample_unseen_labels(inventory, size, seed)
            records = _run_once(pairs, inventory, sampled, cfg, mode)
            size_runs.append(RunResult(
                size=size,
                run=run,
                seed=seed,
                labels=sampled,
                macro_f1=macro_f1(records, sampled, cfg.exclude_zero_support),
                label_hit_rate=label_hit_rate(records),
                records=records
            ))
            logger.info("eval.run mode=%s size=%d run=%d seed=%d records=%d "
                        "macro_f1=%.4f", mode.value, size, run, seed,
                        len(records), size_runs[-1].macro_f1)
        # summary of the size: mean and population variance of the runs
        f1_scores = [run.macro_f1 for run in size_runs]
        size_records = [record for run in size_runs for record in run.records]
        summaries.append(SizeSummary(
            size=size,
            f1_scores=f1_scores,
            mean_f1=float(np.mean(f1_scores)),
            variance=population_variance(f1_scores),
            per_label=[
                {"run": run.run, **asdict(score)}
                for run in size_runs
                for score in per_label_scores(run.records, run.labels)
            ],
            gap_table=gap_analysis(size_records)
        ))
        runs.extend(size_runs)

    config = cfg.to_dict()
    config["mode"] = mode.value
    config["num_documents"] = len(dataset.documents)
    config["run_seeds"] = {str(run.size): [] for run in runs}
    for run in runs:
        config["run_seeds"][str(run.size)].append(run.seed)
    return EvalReport(
        config=config,
        runs=runs,
        sizes=summaries,
        gap_table=gap_analysis([record for run in runs
                                for record in run.records]),
        dataset=dataset.name
    )


def _prepare(dataset: Dataset, store: SideInfoStore,
             service: EmbeddingService, cfg: EvalConfig
             ) -> tuple[Dataset, list[_GoldPair]]:
    """
    Draws the document share to evaluate, checks that every size fits its
    label inventory and that every input is available, then scores the gold
    pairs once against the whole inventory.
    :return: The evaluated dataset and its scored gold pairs.
    """
    dataset = sample_documents(dataset, cfg.document_fraction,
                               cfg.master_seed)
    if cfg.document_fraction < 1:
        logger.info("eval.documents kept %d documents (fraction %.3f)",
                    len(dataset.documents), cfg.document_fraction)
    inventory = dataset.labels
    for size in cfg.sizes:
        if size > len(inventory):
            raise SizeError(
                f"Unseen set size {size} exceeds the {len(inventory)} labels "
                f"of dataset {dataset.name!r}."
            )
    check_coverage(dataset, store, service, cfg)
    return dataset, _gold_pairs(dataset, store, service, cfg)


def run_zeroshot_eval(dataset: Dataset, store: SideInfoStore,
                      service: EmbeddingService,
                      cfg: EvalConfig) -> EvalReport:
    """
    Runs the sampled unseen label protocol in cfg.mode.
    :param dataset: Corpus with gold relations; cfg.document_fraction of its
    documents are evaluated.
    :param store: Side information of every entity in a gold pair.
    :param service: Embedding service; when offline, every text has to be in
    its cache already.
    :return: Per-run and per-size results, the gap table and the resolved
    config with every run seed.
    """
    dataset, pairs = _prepare(dataset, store, service, cfg)
    return _evaluate(pairs, dataset, cfg, cfg.mode)


def run_ablation(dataset: Dataset, store: SideInfoStore,
                 service: EmbeddingService, cfg: EvalConfig,
                 modes: Sequence[ScoringMode | str] = tuple(ScoringMode)
                 ) -> dict[str, EvalReport]:
    """Runs the protocol once per scoring mode on the same label samples."""
    dataset, pairs = _prepare(dataset, store, service, cfg)
    return {
        ScoringMode(mode).value: _evaluate(pairs, dataset, cfg,
                                           ScoringMode(mode))
        for mode in modes
    }


def _f1_cell(summary: SizeSummary) -> str:
    # both in percentage points, variance over the per-run percentages
    percentages = [100 * score for score in summary.f1_scores]
    return (f"{np.mean(percentages):.2f} ± "
            f"{population_variance(percentages):.2f}")


def f1_table(reports: dict[str, EvalReport]) -> pd.DataFrame:
    """One row per scoring mode, one column per unseen set size."""
    return pd.DataFrame.from_dict(
        {
            mode: {f"n={summary.size}": _f1_cell(summary)
                   for summary in report.sizes}
            for mode, report in reports.items()
        },
        orient="index"
    )


def render_report(reports: EvalReport | dict[str, EvalReport]) -> str:
    if isinstance(reports, EvalReport):
        reports = {reports.config["mode"]: reports}
    sections = ["Macro F1 (%), mean ± variance over runs",
                f1_table(reports).to_string()]
    for mode, report in reports.items():
        for summary in report.sizes:
            sections.append("")
            sections.append(render_gap_table(
                summary.gap_table,
                title=f"Sentence gap, mode={mode}, n={summary.size}"
            ))
    return "\n".join(sections) + "\n"
