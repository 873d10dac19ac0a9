"""
Stage orchestration.

Stages always run in the order validate, sideinfo, embed, score, eval,
whatever order they are requested in. Every stage reads its inputs from the
RunConfig paths or from earlier stages of the same run and writes its
outputs under cfg.output_dir. A failing stage raises StageError naming the
stage; the manifest is still written, with status "failed".
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from Code.Common.errors import (
    ConfigError,
    StageError,
    ZsreError,
)
from Code.Common.jsonl import (
    iter_jsonl,
    read_text,
    write_json,
    write_jsonl,
    write_text,
)
from Code.Common.logging_setup import get_logger
from Code.DocumentCorpus.corpus import Dataset, enumerate_entity_pairs
from Code.DocumentCorpus.loaders import (
    ValidationReport,
    load_dataset,
    validate_dataset_file,
)
from Code.DynamicWeightedScoring.predict import predict_relation
from Code.DynamicWeightedScoring.scores import ScoreBreakdown
from Code.EntitySideInformation.generate import build_side_info
from Code.EntitySideInformation.llm_client import ChatClient, make_chat_client
from Code.EntitySideInformation.records import SideInfoStore
from Code.Pipeline.config import RunConfig
from Code.Pipeline.manifest import RunManifest
from Code.SideInfoEmbedding.cache import EmbeddingCache
from Code.SideInfoEmbedding.embed import (
    EmbeddingService,
    embed_pair,
    make_embedding_service,
    pair_texts,
    warm_cache,
)
from Code.SideInfoEmbedding.providers import TextEncoder
from Code.ZeroShotEvaluation.evaluate import (
    EvalReport,
    PredictionRecord,
    render_report,
    run_ablation,
    run_zeroshot_eval,
)
from Code.ZeroShotEvaluation.gap import gap_analysis, render_gap_table

logger = get_logger(__name__)

STAGES = ("validate", "sideinfo", "embed", "score", "eval")

VALIDATION_NAME = "validation.json"
BREAKDOWNS_NAME = "breakdowns.jsonl"
REPORT_NAME = "report.json"
PREDICTIONS_NAME = "predictions.jsonl"
ABLATION_NAME = "ablation.json"
ABLATION_TEXT_NAME = "ablation.txt"


@dataclass
class PipelineResult:
    manifest: RunManifest
    outputs: dict[str, Path] = field(default_factory=dict)
    validation: ValidationReport | None = None
    report: EvalReport | None = None
    planned: list[str] = field(default_factory=list)


def read_labels(path: str | Path) -> list[str]:
    """
    Reads a candidate label list: a JSON array of strings, or plain text
    with one label per line.
    :return: The labels in file order, blanks and repeats dropped.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Labels file {path} not found.")
    text = read_text(path)
    if path.suffix == ".json":
        try:
            labels = json.loads(text)
        except json.JSONDecodeError as error:
            raise ConfigError(
                f"Labels file {path} is not valid JSON: {error}") from error
        if not isinstance(labels, list) or not all(
                isinstance(label, str) for label in labels):
            raise ConfigError(
                f"Labels file {path} should hold a JSON array of strings.")
    else:
        labels = [line.strip() for line in text.splitlines()]
    labels = [label for label in labels if label]
    if not labels:
        raise ConfigError(f"Labels file {path} lists no labels.")
    return list(dict.fromkeys(labels))


class _Run:
    """State shared by the stages of one run."""

    def __init__(self, cfg: RunConfig, manifest: RunManifest,
                 client: ChatClient | None, encoder: TextEncoder | None):
        self.cfg = cfg
        self.manifest = manifest
        self.output_dir = Path(cfg.output_dir)
        self._client = client
        self._given_client = client
        self._encoder = encoder
        self._dataset: Dataset | None = None
        self._store: SideInfoStore | None = None
        self._service: EmbeddingService | None = None

    @property
    def dataset(self) -> Dataset:
        if self._dataset is None:
            if self.cfg.dataset_path is None:
                raise ConfigError("Dataset Path is required.")
            self._dataset = load_dataset(
                self.cfg.dataset_path, self.cfg.dataset_format,
                self.cfg.relation_names_path, lenient=self.cfg.lenient
            )
        return self._dataset

    @property
    def labels(self) -> list[str]:
        if self.cfg.labels_path is not None:
            return read_labels(self.cfg.labels_path)
        return self.dataset.labels

    def store(self, stage: str, must_exist: bool = True) -> SideInfoStore:
        if self._store is None:
            path = self.cfg.sideinfo_path
            if path is None:
                raise ConfigError("Sideinfo Path is required.")
            if must_exist and not Path(path).exists():
                raise StageError(stage, f"missing sideinfo: {path} not found")
            self._store = SideInfoStore(path)
        return self._store

    def require_sideinfo(self, stage: str) -> SideInfoStore:
        store = self.store(stage)
        missing = [
            f"{document.doc_id}:{index}"
            for document in self.dataset.documents
            for pair in enumerate_entity_pairs(document, self.cfg.pair_mode)
            for index in pair
            if (document.doc_id, index) not in store
        ]
        if missing:
            raise StageError(
                stage, f"missing sideinfo for {len(set(missing))} entities, "
                       f"e.g. {missing[0]}")
        return store

    @property
    def client(self) -> ChatClient:
        if self._client is None:
            self._client = make_chat_client(self.cfg.generation, self.dataset)
        return self._client

    @property
    def service(self) -> EmbeddingService:
        if self._service is None:
            encoder_cfg = self.cfg.encoder
            # a dry run answers from the cache alone and never writes it
            offline = self.cfg.offline or self.cfg.dry_run
            if self._encoder is None:
                self._service = make_embedding_service(
                    encoder_cfg, offline, read_only=self.cfg.dry_run)
            else:
                cache = EmbeddingCache(encoder_cfg.cache_identity(),
                                       encoder_cfg.dim, encoder_cfg.cache_path,
                                       read_only=self.cfg.dry_run)
                self._service = EmbeddingService(self._encoder, encoder_cfg,
                                                 cache, offline)
        return self._service

    def close(self) -> None:
        """Closes the HTTP clients this run created itself."""
        owned = []
        if self._client is not None and self._client is not self._given_client:
            owned.append(self._client)
        if self._service is not None and self._encoder is None:
            owned.append(self._service.encoder)
        for resource in owned:
            close = getattr(resource, "close", None)
            if close is not None:
                close()


def _validate(run: _Run, result: PipelineResult) -> None:
    cfg = run.cfg
    if cfg.dataset_path is None:
        raise ConfigError("Dataset Path is required.")
    report = validate_dataset_file(cfg.dataset_path, cfg.dataset_format,
                                   cfg.relation_names_path)
    result.validation = report
    logger.info("Validated %s: %d documents, %d entities, %d relations, "
                "%d labels, %d problems", cfg.dataset_path, report.documents,
                report.entities, report.relations, report.labels,
                len(report.problems))
    if not cfg.dry_run:
        path = run.output_dir / VALIDATION_NAME
        write_json(path, report.to_dict())
        result.outputs["validation"] = path
    if not report.valid and not cfg.lenient:
        first = report.problems[0]
        raise StageError(
            "validate", f"{len(report.problems)} invalid documents, first "
                        f"{first.doc_id!r} {first.field}: {first.reason}")


def _sideinfo(run: _Run, result: PipelineResult) -> None:
    store = run.store("sideinfo", must_exist=False)
    build_side_info(run.dataset, run.client, run.cfg.generation, store,
                    offline=run.cfg.offline)
    result.outputs["sideinfo"] = Path(run.cfg.sideinfo_path)


def _embed(run: _Run, result: PipelineResult) -> None:
    store = run.require_sideinfo("embed")
    warm_cache(run.service, run.dataset, store, run.labels,
               run.cfg.pair_mode, run.cfg.eval.verbatim_prompts,
               run.cfg.eval.raw_labels)
    if run.cfg.encoder.cache_path is not None:
        result.outputs["embeddings"] = Path(run.cfg.encoder.cache_path)


def score_pairs(run: _Run) -> Iterable[dict[str, Any]]:
    """One breakdown record per (pair, candidate label)."""
    store = run.require_sideinfo("score")
    eval_cfg = run.cfg.eval
    labels = run.labels
    label_embeddings = run.service.embed_relation_labels(labels,
                                                         eval_cfg.raw_labels)
    for document in run.dataset.documents:
        for head, tail in enumerate_entity_pairs(document, run.cfg.pair_mode):
            texts = pair_texts(store, document.doc_id, head, tail,
                               eval_cfg.verbatim_prompts)
            winner, scored = predict_relation(
                embed_pair(run.service, texts), labels, label_embeddings,
                eval_cfg.mode, eval_cfg.weights, eval_cfg.options
            )
            for breakdown in scored:
                yield {
                    "doc_id": document.doc_id,
                    "head_index": head,
                    "tail_index": tail,
                    "mode": eval_cfg.mode.value,
                    "winner": breakdown.label == winner,
                    **breakdown.to_dict(),
                }


def _score(run: _Run, result: PipelineResult) -> None:
    path = (Path(run.cfg.breakdowns_path) if run.cfg.breakdowns_path
            else run.output_dir / BREAKDOWNS_NAME)
    count = write_jsonl(path, score_pairs(run))
    logger.info("Wrote %d breakdowns to %s", count, path)
    result.outputs["breakdowns"] = path


def _write_eval(run: _Run, result: PipelineResult, report: EvalReport) -> None:
    """
    Writes the report JSON, its text rendering and every prediction. The
    last two go next to the report, which defaults to output_dir.
    """
    report_path = (Path(run.cfg.report_path) if run.cfg.report_path
                   else run.output_dir / REPORT_NAME)
    predictions_path = report_path.parent / PREDICTIONS_NAME
    text_path = report_path.with_suffix(".txt")
    write_json(report_path, report.to_dict())
    write_jsonl(predictions_path, report.records)
    write_text(text_path, render_report(report))
    result.outputs.update(report=report_path, predictions=predictions_path,
                          report_text=text_path)


def _eval(run: _Run, result: PipelineResult) -> None:
    store = run.store("eval")
    report = run_zeroshot_eval(run.dataset, store, run.service, run.cfg.eval)
    result.report = report
    _write_eval(run, result, report)


_STAGE_FUNCTIONS = {
    "validate": _validate,
    "sideinfo": _sideinfo,
    "embed": _embed,
    "score": _score,
    "eval": _eval,
}


def _plan(run: _Run, stages: Sequence[str], result: PipelineResult) -> None:
    """Dry run: check what can be checked without writing or calling out."""
    for stage in stages:
        if stage == "validate":
            _validate(run, result)
        elif stage != "sideinfo":
            run.store(stage)
        result.planned.append(stage)
        logger.info("Dry run: would run stage %s into %s", stage,
                    run.output_dir)


def run_pipeline(
        cfg: RunConfig,
        stages: Iterable[str] = STAGES,
        command: str = "pipeline run",
        client: ChatClient | None = None,
        encoder: TextEncoder | None = None
) -> PipelineResult:
    """
    Runs the requested stages and writes manifest.json next to their
    outputs.
    :param client: Chat client to use instead of the configured one.
    :param encoder: Text encoder to use instead of the configured one.
    :return: The manifest, the written output paths and, if the stages ran,
    the validation report and evaluation report.
    """
    requested = set(stages)
    unknown = requested - set(STAGES)
    if unknown:
        raise ConfigError(f"Unknown stages {sorted(unknown)}; expected a "
                          f"subset of {list(STAGES)}.")
    ordered = [stage for stage in STAGES if stage in requested]
    manifest = RunManifest(command=command, config=cfg.to_dict())
    result = PipelineResult(manifest=manifest)
    run = _Run(cfg, manifest, client, encoder)

    if cfg.dry_run:
        _plan(run, ordered, result)
        return result

    manifest.record_prompts(cfg.generation.description_prompt,
                            cfg.generation.hypernym_prompt)
    manifest.record_inputs(cfg.dataset_path, cfg.relation_names_path,
                           cfg.labels_path, cfg.sideinfo_path,
                           cfg.encoder.cache_path)
    try:
        for stage in ordered:
            with manifest.stage(stage):
                try:
                    _STAGE_FUNCTIONS[stage](run, result)
                except (StageError, ConfigError):
                    raise
                except (ZsreError, OSError, KeyError, ValueError) as error:
                    raise StageError(stage, error) from error
    finally:
        run.close()
        manifest.record_outputs(*result.outputs.values())
        manifest.finish()
        result.outputs["manifest"] = manifest.write(run.output_dir)
    return result


def run_ablation_command(cfg: RunConfig,
                         encoder: TextEncoder | None = None
                         ) -> dict[str, EvalReport]:
    """Evaluates every scoring mode on the same samples."""
    manifest = RunManifest(command="ablation", config=cfg.to_dict())
    run = _Run(cfg, manifest, None, encoder)
    output_dir = Path(cfg.output_dir)
    if cfg.dry_run:
        run.store("ablation")
        logger.info("Dry run: would run the ablation into %s", output_dir)
        return {}
    manifest.record_inputs(cfg.dataset_path, cfg.sideinfo_path,
                           cfg.encoder.cache_path)
    try:
        with manifest.stage("ablation"):
            try:
                reports = run_ablation(run.dataset, run.store("ablation"),
                                       run.service, cfg.eval)
            except (StageError, ConfigError):
                raise
            except (ZsreError, OSError, KeyError, ValueError) as error:
                raise StageError("ablation", error) from error
            write_json(output_dir / ABLATION_NAME,
                       {mode: report.to_dict()
                        for mode, report in reports.items()})
            write_text(output_dir / ABLATION_TEXT_NAME,
                       render_report(reports))
            manifest.record_outputs(output_dir / ABLATION_NAME,
                                    output_dir / ABLATION_TEXT_NAME)
    finally:
        run.close()
        manifest.finish()
        manifest.write(output_dir)
    return reports


def gap_from_predictions(path: str | Path, size: int | None = None) -> str:
    """Renders the sentence gap table of a predictions.jsonl file."""
    records = [
        PredictionRecord(**{name: row[name] for name in (
            "doc_id", "head_index", "tail_index", "gold_label",
            "predicted_label", "final_score", "sentence_gap")})
        for row in iter_jsonl(path)
        if size is None or row.get("size") == size
    ]
    title = "Sentence gap" + (f", n={size}" if size is not None else "")
    return render_gap_table(gap_analysis(records), title=title)


@dataclass
class Explanation:
    doc_id: str
    head_index: int
    tail_index: int
    winner: str
    rows: list[ScoreBreakdown]

    def render(self) -> str:
        header = (f"{'label':<28} {'desc':>7} {'h_hyp':>7} {'t_hyp':>7} "
                  f"{'h_type':>7} {'t_type':>7} {'role':>7} {'context':>7} "
                  f"{'conf':>7} {'final':>7} {'score':>7}")
        lines = [f"Document {self.doc_id}, pair ({self.head_index}, "
                 f"{self.tail_index})", header]
        for row in self.rows:
            c = row.components
            marker = "  <- winner" if row.label == self.winner else ""
            lines.append(
                f"{row.label:<28} {c.desc:7.4f} {c.head_hyp:7.4f} "
                f"{c.tail_hyp:7.4f} {c.head_type:7.4f} {c.tail_type:7.4f} "
                f"{c.role:7.4f} {c.context:7.4f} {row.confidence:7.4f} "
                f"{row.final_score:7.4f} {row.mode_score:7.4f}{marker}"
            )
        return "\n".join(lines)


def explain_pair(cfg: RunConfig, doc_id: str, head_index: int,
                 tail_index: int, labels: Sequence[str] | None = None,
                 encoder: TextEncoder | None = None) -> Explanation:
    """
    Scores one pair against the candidate labels and returns every
    breakdown, best first. With cfg.dry_run the embeddings come from the
    cache only and the cache file is left untouched.
    :param labels: Candidate labels; defaults to the configured labels.
    :param encoder: Text encoder to use instead of the configured one.
    """
    run = _Run(cfg, RunManifest(command="explain", config={}), None, encoder)
    try:
        document = run.dataset.document(doc_id)
        store = run.store("explain")
        candidates = list(labels) if labels else run.labels
        try:
            document.entity(head_index)
            document.entity(tail_index)
            texts = pair_texts(store, doc_id, head_index, tail_index,
                               cfg.eval.verbatim_prompts)
        except (IndexError, KeyError) as error:
            raise StageError("explain", error) from error
        label_embeddings = run.service.embed_relation_labels(
            candidates, cfg.eval.raw_labels)
        winner, scored = predict_relation(
            embed_pair(run.service, texts), candidates, label_embeddings,
            cfg.eval.mode, cfg.eval.weights, cfg.eval.options
        )
    finally:
        run.close()
    rows = sorted(scored, key=lambda breakdown: -breakdown.mode_score)
    return Explanation(doc_id, head_index, tail_index, winner, rows)
