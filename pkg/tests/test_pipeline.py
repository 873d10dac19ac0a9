import json
from collections import defaultdict
from pathlib import Path

import pytest
from click.testing import CliRunner

from Code.Common.errors import (
    ConfigError,
    OfflineError,
    StageError,
    UnknownDocument,
)
from Code.Common.jsonl import iter_jsonl
from Code.DocumentCorpus.corpus import PairMode
from Code.DocumentCorpus.synthetic import (
    SyntheticChatClient,
    write_synthetic_dataset,
)
from Code.EntitySideInformation.llm_client import API_KEY_ENV
from Code.EntitySideInformation.records import GenerationConfig
from Code.Pipeline.cli import cli
from Code.Pipeline.config import RunConfig, load_run_config
from Code.Pipeline.pipeline import (
    STAGES,
    explain_pair,
    gap_from_predictions,
    read_labels,
    run_ablation_command,
    run_pipeline,
)
from Code.SideInfoEmbedding.providers import (
    DeterministicMockEncoder,
    EncoderConfig,
)
from Code.ZeroShotEvaluation.evaluate import EvalConfig

from tests.conftest import TINY_DOCUMENT

DEFAULT_CONFIG = Path(__file__).parents[1] / "Code" / "Pipeline" / \
    "default_config.json"


def _synthetic_config(tmp_path, **changes):
    dataset = write_synthetic_dataset(tmp_path / "synthetic.json")
    values = dict(
        dataset_path=str(dataset),
        sideinfo_path=str(tmp_path / "sideinfo.jsonl"),
        output_dir=str(tmp_path / "out"),
        seed=7,
        generation=GenerationConfig(provider="synthetic_stub", parallelism=1),
        encoder=EncoderConfig(provider="deterministic_mock", dim=128,
                              cache_path=str(tmp_path / "embeddings.jsonl")),
        eval=EvalConfig(sizes=[5], samples_per_size=2),
    )
    values.update(changes)
    return RunConfig(**values)


def _macro_f1(rows, labels):
    scores = []
    for label in labels:
        tp = sum(row["gold_label"] == label == row["predicted_label"]
                 for row in rows)
        fp = sum(row["gold_label"] != label == row["predicted_label"]
                 for row in rows)
        fn = sum(row["gold_label"] == label != row["predicted_label"]
                 for row in rows)
        scores.append(0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn))
    return sum(scores) / len(scores)


def test_default_config_file_matches_defaults():
    assert RunConfig.from_file(DEFAULT_CONFIG) == RunConfig()


def test_config_file_round_trip(tmp_path):
    cfg = _synthetic_config(tmp_path, pair_mode=PairMode.all_ordered_pairs)
    path = tmp_path / "config.json"
    cfg.to_file(path)

    assert RunConfig.from_file(path) == cfg
    assert json.loads(path.read_text())["Encoder"]["Provider"] == \
        "deterministic_mock"


def test_seed_drives_every_random_choice():
    cfg = RunConfig(seed=42)

    assert cfg.eval.master_seed == 42
    assert cfg.encoder.mock_seed == 42


def test_config_precedence(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"Seed": 3, "Output Dir": "from-file",
                                "Eval": {"Sizes": [5]}}))
    environ = {"ZSRE_SEED": "5", "ZSRE_ENCODER_URL": "http://enc.test",
               "ZSRE_OFFLINE": "true"}

    from_env = load_run_config(path, environ=environ)
    from_flags = load_run_config(
        path, {"seed": 9, "output_dir": "from-flags",
               "eval": {"samples_per_size": 1}}, environ)

    assert from_env.seed == 5 and from_env.eval.master_seed == 5
    assert from_env.output_dir == "from-file"
    assert from_env.offline is True
    assert from_env.encoder.base_url == "http://enc.test"
    assert from_flags.seed == 9
    assert from_flags.output_dir == "from-flags"
    assert from_flags.eval.sizes == [5]
    assert from_flags.eval.samples_per_size == 1


@pytest.mark.parametrize("contents", [
    '{"Unknown Key": 1}',
    '{"Pair Mode": "every_pair"}',
    '{"Eval": {"Weights": [0.5, 0.5]}}',
    '{"Generation": {"Parallelism": 0}}',
    "[1, 2]",
    "{not json",
])
def test_invalid_config_files(tmp_path, contents):
    path = tmp_path / "config.json"
    path.write_text(contents)

    with pytest.raises(ConfigError):
        load_run_config(path, environ={})


def test_missing_config_file_and_bad_seed(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "missing.json", environ={})
    with pytest.raises(ConfigError):
        load_run_config(environ={"ZSRE_SEED": "seven"})


def test_read_labels(tmp_path):
    text = tmp_path / "labels.txt"
    text.write_text("employer\n\neducated_at\nemployer\n")
    array = tmp_path / "labels.json"
    array.write_text('["spouse", "author"]')
    empty = tmp_path / "empty.txt"
    empty.write_text("\n")

    assert read_labels(text) == ["employer", "educated_at"]
    assert read_labels(array) == ["spouse", "author"]
    with pytest.raises(ConfigError):
        read_labels(empty)


@pytest.mark.parametrize("contents", ['["a",', '{"a": 1}', '["a", 2]'])
def test_read_labels_rejects_bad_json(tmp_path, contents):
    path = tmp_path / "labels.json"
    path.write_text(contents)

    with pytest.raises(ConfigError):
        read_labels(path)


def test_validate_stage(tmp_path):
    cfg = _synthetic_config(tmp_path)
    result = run_pipeline(cfg, ["validate"])

    assert result.validation.valid
    assert result.validation.documents == 10
    assert json.loads(result.outputs["validation"].read_text())["valid"]


def test_validate_stage_fails_on_invalid_documents(tmp_path):
    bad = dict(TINY_DOCUMENT, labels=[{"h": 0, "t": 9, "r": "P69"}])
    dataset = tmp_path / "bad.json"
    dataset.write_text(json.dumps([bad]))
    cfg = RunConfig(dataset_path=str(dataset), output_dir=str(tmp_path))

    with pytest.raises(StageError) as error:
        run_pipeline(cfg, ["validate"])
    assert error.value.stage == "validate"
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["status"] == "failed"
    assert manifest["failed_stage"] == "validate"


def test_score_without_side_information(tmp_path):
    cfg = _synthetic_config(tmp_path)

    with pytest.raises(StageError) as error:
        run_pipeline(cfg, ["score"])
    assert error.value.stage == "score"
    assert "missing sideinfo" in str(error.value)


def test_unknown_stage(tmp_path):
    with pytest.raises(ConfigError):
        run_pipeline(_synthetic_config(tmp_path), ["validate", "publish"])


def test_dry_run_writes_nothing(tmp_path):
    cfg = _synthetic_config(tmp_path, dry_run=True)
    client_calls = []

    class RecordingClient:
        def complete(self, *args, **kwargs):
            client_calls.append(args)
            return ""

    result = run_pipeline(cfg, ["sideinfo", "validate"],
                          client=RecordingClient())

    assert result.planned == ["validate", "sideinfo"]
    assert not (tmp_path / "out").exists()
    assert not (tmp_path / "sideinfo.jsonl").exists()
    assert client_calls == []
    with pytest.raises(StageError):
        run_pipeline(cfg, ["eval"])


def test_full_synthetic_pipeline(tmp_path, monkeypatch):
    monkeypatch.setenv(API_KEY_ENV, "sk-never-written")
    cfg = _synthetic_config(tmp_path)

    result = run_pipeline(cfg)

    out = tmp_path / "out"
    assert set(result.outputs) == {
        "validation", "sideinfo", "embeddings", "breakdowns", "report",
        "predictions", "report_text", "manifest"}
    breakdowns = list(iter_jsonl(out / "breakdowns.jsonl"))
    assert len(breakdowns) == 40 * 10
    winners = defaultdict(int)
    for row in breakdowns:
        winners[(row["doc_id"], row["head_index"], row["tail_index"])] += \
            row["winner"]
    assert set(winners.values()) == {1}

    report = json.loads((out / "report.json").read_text())
    predictions = list(iter_jsonl(out / "predictions.jsonl"))
    assert report["schema_version"] == 1
    for run in report["runs"]:
        rows = [row for row in predictions
                if (row["size"], row["run"]) == (run["size"], run["run"])]
        assert run["num_records"] == len(rows)
        assert run["macro_f1"] == pytest.approx(
            _macro_f1(rows, run["labels"]), abs=1e-12)
        assert run["macro_f1"] > 0.4
    assert "±" in (out / "report.txt").read_text(encoding="utf-8")

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "ok"
    assert list(manifest["stage_seconds"]) == list(STAGES)
    assert cfg.dataset_path in manifest["input_hashes"]
    assert str(out / "report.json") in manifest["output_hashes"]
    assert set(manifest["prompt_versions"]) == {"description_v1",
                                                "hypernym_v1"}
    for path in list(out.iterdir()) + [tmp_path / "sideinfo.jsonl",
                                       tmp_path / "embeddings.jsonl"]:
        assert "sk-never-written" not in path.read_text(encoding="utf-8")


def test_manifest_input_hashes_change_with_inputs(tmp_path):
    cfg = _synthetic_config(tmp_path)

    first = run_pipeline(cfg, ["validate"]).manifest.input_hashes
    again = run_pipeline(cfg, ["validate"]).manifest.input_hashes
    write_synthetic_dataset(cfg.dataset_path, seed=14)
    changed = run_pipeline(cfg, ["validate"]).manifest.input_hashes

    assert again == first
    assert changed[cfg.dataset_path] != first[cfg.dataset_path]
    del changed[cfg.dataset_path], first[cfg.dataset_path]
    assert changed == first


def test_pipeline_closes_the_clients_it_creates(tmp_path, monkeypatch):
    closed = []

    class ClosingClient(SyntheticChatClient):
        def close(self):
            closed.append("chat")

    class ClosingEncoder(DeterministicMockEncoder):
        def close(self):
            closed.append("encoder")

    monkeypatch.setattr(
        "Code.Pipeline.pipeline.make_chat_client",
        lambda cfg, dataset: ClosingClient.from_dataset(dataset))
    monkeypatch.setattr(
        "Code.SideInfoEmbedding.embed.make_encoder",
        lambda cfg: ClosingEncoder(cfg.dim, cfg.mock_seed,
                                   cfg.mock_token_weight))

    run_pipeline(_synthetic_config(tmp_path), ["sideinfo", "embed"])

    assert sorted(closed) == ["chat", "encoder"]


def test_dry_run_explain_reads_the_cache_only(tmp_path):
    cfg = _synthetic_config(tmp_path)
    run_pipeline(cfg, ["sideinfo", "embed"])
    cache = Path(cfg.encoder.cache_path)
    before = cache.read_bytes()
    cfg.dry_run = True
    encoder = DeterministicMockEncoder(cfg.encoder.dim, cfg.encoder.mock_seed)

    explanation = explain_pair(cfg, "synthetic-00", 0, 1, encoder=encoder)

    assert explanation.winner == "educated_at"
    assert encoder.calls == 0
    assert cache.read_bytes() == before

    cfg.encoder.cache_path = str(tmp_path / "cold.jsonl")
    with pytest.raises(OfflineError):
        explain_pair(cfg, "synthetic-00", 0, 1, encoder=encoder)
    assert encoder.calls == 0
    assert not (tmp_path / "cold.jsonl").exists()


def test_explain_unknown_entity(tmp_path):
    cfg = _synthetic_config(tmp_path)
    run_pipeline(cfg, ["sideinfo"])

    with pytest.raises(StageError):
        explain_pair(cfg, "synthetic-00", 0, 99)


def test_rerun_reuses_side_information_and_embeddings(tmp_path):
    cfg = _synthetic_config(tmp_path)
    first = run_pipeline(cfg)
    first_report = (tmp_path / "out" / "report.json").read_text()

    cfg.offline = True
    cfg.output_dir = str(tmp_path / "again")

    class NoCalls:
        def complete(self, *args, **kwargs):
            raise AssertionError("chat client called on a resumed run")

    second = run_pipeline(cfg, client=NoCalls())

    assert second.report.to_dict() == first.report.to_dict()
    assert (tmp_path / "again" / "report.json").read_text() == first_report


def test_offline_eval_without_cache_fails(tmp_path):
    cfg = _synthetic_config(tmp_path)
    run_pipeline(cfg, ["sideinfo"])
    cfg.offline = True

    with pytest.raises(StageError) as error:
        run_pipeline(cfg, ["eval"])
    assert error.value.stage == "eval"


def test_ablation_command(tmp_path):
    cfg = _synthetic_config(tmp_path)
    run_pipeline(cfg, ["sideinfo"])

    reports = run_ablation_command(cfg)

    assert len(reports) == 5
    ablation = json.loads((tmp_path / "out" / "ablation.json").read_text())
    assert set(ablation) == set(reports)
    assert "desc_hyp_type" in (tmp_path / "out" / "ablation.txt").read_text(
        encoding="utf-8")


def test_explain_pair(tmp_path):
    cfg = _synthetic_config(tmp_path)
    run_pipeline(cfg, ["sideinfo"])

    explanation = explain_pair(cfg, "synthetic-00", 0, 1)

    scores = [row.mode_score for row in explanation.rows]
    assert scores == sorted(scores, reverse=True)
    assert explanation.rows[0].label == explanation.winner == "educated_at"
    assert len(explanation.rows) == 10
    assert "<- winner" in explanation.render()
    with pytest.raises(UnknownDocument):
        explain_pair(cfg, "synthetic-99", 0, 1)


def test_gap_from_predictions(tmp_path):
    cfg = _synthetic_config(tmp_path)
    run_pipeline(cfg)

    table = gap_from_predictions(tmp_path / "out" / "predictions.jsonl", 5)

    assert table.splitlines()[0] == "Sentence gap, n=5"
    assert "Incorrect (%)" in table


def test_cli_missing_config_exits_with_config_error(tmp_path):
    result = CliRunner().invoke(
        cli, ["--config", str(tmp_path / "missing.json"), "eval", "run"])

    assert result.exit_code == 2


def test_cli_stage_error_exit_code(tmp_path):
    path = tmp_path / "config.json"
    _synthetic_config(tmp_path).to_file(path)

    result = CliRunner().invoke(cli, ["--config", str(path), "score"])

    assert result.exit_code == 3


def test_cli_synthetic_pipeline(tmp_path):
    runner = CliRunner()
    path = tmp_path / "config.json"
    _synthetic_config(tmp_path).to_file(path)

    synth = runner.invoke(cli, ["corpus", "synth", "--out",
                                str(tmp_path / "synthetic.json")])
    run = runner.invoke(cli, ["--config", str(path), "pipeline", "run",
                              "--sizes", "5", "--samples", "1"])
    gap = runner.invoke(cli, ["gap", "--predictions",
                              str(tmp_path / "out" / "predictions.jsonl")])

    assert synth.exit_code == 0
    assert run.exit_code == 0, run.output
    assert "report:" in run.output
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["config"]["samples_per_size"] == 1
    assert gap.exit_code == 0
    assert "Total" in gap.output


def test_cli_dry_run(tmp_path):
    path = tmp_path / "config.json"
    _synthetic_config(tmp_path).to_file(path)

    result = CliRunner().invoke(cli, ["--config", str(path), "--dry-run",
                                      "pipeline", "run",
                                      "--stages", "validate,sideinfo"])

    assert result.exit_code == 0
    assert "Planned stages: validate, sideinfo" in result.output
    assert not (tmp_path / "out").exists()


def test_cli_dry_run_explain_with_cold_cache(tmp_path):
    cfg = _synthetic_config(tmp_path)
    run_pipeline(cfg, ["sideinfo"])
    path = tmp_path / "config.json"
    cfg.to_file(path)

    result = CliRunner().invoke(cli, ["--config", str(path), "--dry-run",
                                      "explain", "--doc-id", "synthetic-00",
                                      "--head", "0", "--tail", "1"])

    assert result.exit_code == 3
    assert not (tmp_path / "embeddings.jsonl").exists()


def test_cli_dry_run_score_writes_nothing(tmp_path):
    cfg = _synthetic_config(tmp_path)
    run_pipeline(cfg, ["sideinfo", "embed"])
    path = tmp_path / "config.json"
    cfg.to_file(path)

    result = CliRunner().invoke(cli, ["--config", str(path), "--dry-run",
                                      "score", "--out",
                                      str(tmp_path / "b.jsonl")])

    assert result.exit_code == 0, result.output
    assert not (tmp_path / "b.jsonl").exists()
    assert not (tmp_path / "manifest.json").exists()


def test_cli_bad_weights_and_labels_are_config_errors(tmp_path):
    runner = CliRunner()
    cfg = _synthetic_config(tmp_path)
    run_pipeline(cfg, ["sideinfo", "embed"])
    path = tmp_path / "config.json"
    cfg.to_file(path)
    weights = tmp_path / "weights.json"
    weights.write_text("{not json")
    labels = tmp_path / "labels.json"
    labels.write_text('["a",')

    bad_weights = runner.invoke(cli, ["--config", str(path), "score",
                                      "--weights", str(weights)])
    bad_labels = runner.invoke(cli, ["--config", str(path), "score",
                                     "--labels", str(labels)])

    assert bad_weights.exit_code == 2
    assert bad_labels.exit_code == 2
    assert "Traceback" not in bad_weights.output + bad_labels.output


def test_cli_stage_commands_with_output_files(tmp_path):
    runner = CliRunner()
    dataset = str(write_synthetic_dataset(tmp_path / "ds.json"))
    side = str(tmp_path / "side.jsonl")
    cache = str(tmp_path / "cache.jsonl")
    labels = tmp_path / "labels.txt"
    labels.write_text("educated_at\nemployer\nspouse\n")
    weights = tmp_path / "w.json"
    weights.write_text(json.dumps([0.3, 0.15, 0.15, 0.1, 0.1, 0.1, 0.1]))
    eval_config = tmp_path / "eval.json"
    RunConfig(
        encoder=EncoderConfig(provider="deterministic_mock", cache_path=cache),
        eval=EvalConfig(sizes=[5], samples_per_size=1),
        output_dir=str(tmp_path / "unused"),
    ).to_file(eval_config)

    build = runner.invoke(cli, [
        "sideinfo", "build", "--dataset", dataset, "--out", side,
        "--provider", "synthetic_stub", "--model", "stub",
        "--parallelism", "2"])
    warm = runner.invoke(cli, [
        "embed", "warm", "--dataset", dataset, "--sideinfo", side,
        "--encoder", "deterministic_mock", "--out", cache])
    scored = runner.invoke(cli, [
        "score", "--dataset", dataset, "--sideinfo", side,
        "--embeddings", cache, "--encoder", "deterministic_mock",
        "--labels", str(labels), "--mode", "full_weighted",
        "--weights", str(weights),
        "--out", str(tmp_path / "scores" / "breakdowns.jsonl")])
    evaluated = runner.invoke(cli, [
        "eval", "run", "--dataset", dataset, "--sideinfo", side,
        "--config", str(eval_config),
        "--out", str(tmp_path / "eval" / "report.json")])

    for result in (build, warm, scored, evaluated):
        assert result.exit_code == 0, result.output
    assert len(list(iter_jsonl(side))) == 80
    assert Path(cache).exists()
    breakdowns = list(iter_jsonl(tmp_path / "scores" / "breakdowns.jsonl"))
    assert {row["label"] for row in breakdowns} == {
        "educated_at", "employer", "spouse"}
    assert (tmp_path / "scores" / "manifest.json").exists()
    report = json.loads((tmp_path / "eval" / "report.json").read_text())
    assert report["config"]["samples_per_size"] == 1
    assert (tmp_path / "eval" / "report.txt").exists()
    assert (tmp_path / "eval" / "predictions.jsonl").exists()
    assert not (tmp_path / "unused").exists()
