"""
zsre command line.

Exit codes: 0 success, 2 configuration error, 3 stage error.

Commands that produce one file (sideinfo build, embed warm, score, eval run)
take it as --out; manifest.json goes to --out-dir, or next to that file when
no --out-dir is given.
"""
from __future__ import annotations

import functools
import json
import sys
from pathlib import Path
from typing import Any, Callable

import click

from Code.Common.errors import ConfigError, ZsreError
from Code.Common.logging_setup import configure_logging, get_logger
from Code.DocumentCorpus.synthetic import write_synthetic_dataset
from Code.Pipeline.config import RunConfig, load_run_config
from Code.Pipeline.pipeline import (
    STAGES,
    explain_pair,
    gap_from_predictions,
    run_ablation_command,
    run_pipeline,
)

logger = get_logger(__name__)

EXIT_CONFIG = 2
EXIT_STAGE = 3


def _handle_errors(command: Callable) -> Callable:
    """
    Turns the errors of a command into the documented exit codes instead of
    a traceback.
    """
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except ConfigError as error:
            logger.error("Configuration error: %s", error)
            sys.exit(EXIT_CONFIG)
        except (ZsreError, OSError, ValueError) as error:
            logger.error("%s", error)
            sys.exit(EXIT_STAGE)
    return wrapper


def _run_options(command: Callable) -> Callable:
    """Options naming the inputs of a run, shared by most commands."""
    options = [
        click.option("--dataset", "dataset_path", type=click.Path(),
                     help="Dataset JSON file."),
        click.option("--format", "dataset_format",
                     type=click.Choice(["docred_json", "men_json"]),
                     help="Dataset layout."),
        click.option("--relation-names", "relation_names_path",
                     type=click.Path(),
                     help="JSON map of relation ids to readable names."),
        click.option("--sideinfo", "sideinfo_path", type=click.Path(),
                     help="Side information JSONL store."),
        click.option("--labels", "labels_path", type=click.Path(),
                     help="Candidate labels, one per line or a JSON array."),
        click.option("--embeddings", "cache_path", type=click.Path(),
                     help="Embedding cache file."),
        click.option("--encoder", "encoder_provider",
                     type=click.Choice(["remote_http", "deterministic_mock"]),
                     help="Text encoder provider."),
        click.option("--pairs", "pair_mode", type=click.Choice(["gold", "all"]),
                     help="Score gold pairs only or every ordered pair."),
        click.option("--mode", type=click.Choice(
            ["desc_only", "desc_hypernym", "desc_type", "desc_hyp_type",
             "full_weighted"]), help="Scoring mode."),
        click.option("--weights", "weights_path", type=click.Path(),
                     help="JSON file with the seven component weights."),
        click.option("--verbatim-appendix-prompts", "verbatim_prompts",
                     is_flag=True, default=None,
                     help="Render the tail role prompt with 'a subject'."),
        click.option("--out-dir", "output_dir", type=click.Path(),
                     help="Output directory."),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def _out_option(help: str) -> Callable:
    """The --out file of a command that writes one main output."""
    return click.option("--out", "out_path",
                        type=click.Path(dir_okay=False), help=help)


def _read_weights(path: str) -> Any:
    """
    Reads a --weights file.
    :return: The parsed JSON, checked later by Weights.from_value.
    """
    try:
        with open(path, "r", encoding="utf-8") as file:
            return json.load(file)
    except OSError as error:
        raise ConfigError(f"Cannot read weights file {path}: {error}") \
            from error
    except (json.JSONDecodeError, UnicodeDecodeError) as error:
        raise ConfigError(f"Weights file {path} is not valid JSON: {error}") \
            from error


def _config(ctx: click.Context, out_target: str | None = None,
            **values: Any) -> RunConfig:
    """
    Builds the RunConfig of a command from the global and local options.
    :param out_target: RunConfig field the command's --out file sets
    (cache_path means the encoder's cache file).
    """
    root = ctx.find_root().obj
    eval_values = {}
    if values.get("mode"):
        eval_values["mode"] = values["mode"]
    if values.get("weights_path"):
        eval_values["weights"] = _read_weights(values["weights_path"])
    for name in ("verbatim_prompts", "sizes", "samples_per_size"):
        if values.get(name) is not None:
            eval_values[name] = values[name]
    encoder_values = {}
    if values.get("cache_path"):
        encoder_values["cache_path"] = values["cache_path"]
    if values.get("encoder_provider"):
        encoder_values["provider"] = values["encoder_provider"]
    generation_values = {}
    for name in ("provider", "model_id", "parallelism"):
        if values.get(name) is not None:
            generation_values[name] = values[name]
    pair_mode = {"gold": "gold_pairs", "all": "all_ordered_pairs"}.get(
        values.get("pair_mode"))

    overrides = {
        "dataset_path": values.get("dataset_path"),
        "dataset_format": values.get("dataset_format"),
        "relation_names_path": values.get("relation_names_path"),
        "sideinfo_path": values.get("sideinfo_path"),
        "labels_path": values.get("labels_path"),
        "output_dir": values.get("output_dir"),
        "pair_mode": pair_mode,
        "seed": root["seed"],
        "offline": root["offline"] or None,
        "dry_run": root["dry_run"] or None,
    }

    # --out names the command's main output file
    out_path = values.get("out_path")
    if out_path and out_target is not None:
        if out_target == "cache_path":
            encoder_values["cache_path"] = out_path
        else:
            overrides[out_target] = out_path
        if not values.get("output_dir"):
            overrides["output_dir"] = str(Path(out_path).parent)

    overrides.update(generation=generation_values or None,
                     encoder=encoder_values or None,
                     eval=eval_values or None)
    config_path = values.get("local_config") or root["config"]
    return load_run_config(config_path, overrides)


@click.group()
@click.option("--config", type=click.Path(), default=None,
              help="Run config JSON file.")
@click.option("--seed", type=int, default=None,
              help="Seed for every random choice of the run.")
@click.option("--offline", is_flag=True,
              help="Fail on cache misses instead of calling any service.")
@click.option("--dry-run", is_flag=True,
              help="Check inputs and print the plan; write nothing.")
@click.option("--verbose", is_flag=True, help="Debug logging.")
@click.pass_context
def cli(ctx, config, seed, offline, dry_run, verbose):
    """Zero-shot document-level relation extraction with side information."""
    configure_logging(verbose)
    ctx.obj = {"config": config, "seed": seed, "offline": offline,
               "dry_run": dry_run}


@cli.group()
def corpus():
    """Dataset files."""


@corpus.command("validate")
@_run_options
@click.pass_context
@_handle_errors
def corpus_validate(ctx, **values):
    """Checks a dataset file and writes validation.json."""
    cfg = _config(ctx, **values)
    cfg.lenient = True
    result = run_pipeline(cfg, ["validate"], command="corpus validate")
    click.echo(json.dumps(result.validation.to_dict(), indent=4))
    if not result.validation.valid:
        sys.exit(EXIT_STAGE)


@corpus.command("synth")
@click.option("--out", "path", type=click.Path(), required=True)
@click.option("--documents", type=int, default=10, show_default=True)
@click.option("--relations-per-document", type=int, default=4,
              show_default=True)
@click.option("--corpus-seed", type=int, default=13, show_default=True)
@click.pass_context
@_handle_errors
def corpus_synth(ctx, path, documents, relations_per_document, corpus_seed):
    """Writes the synthetic corpus used for offline runs."""
    if ctx.find_root().obj["dry_run"]:
        click.echo(f"Would write a synthetic corpus to {path}")
        return
    write_synthetic_dataset(path, num_documents=documents,
                            relations_per_document=relations_per_document,
                            seed=corpus_seed)
    click.echo(f"Wrote {path}")


@cli.group()
def sideinfo():
    """Entity descriptions and hypernyms."""


@sideinfo.command("build")
@_run_options
@_out_option("Side information JSONL store to fill (same as --sideinfo).")
@click.option("--provider", type=click.Choice(["remote_http",
                                               "synthetic_stub"]))
@click.option("--model", "model_id")
@click.option("--parallelism", type=int)
@click.pass_context
@_handle_errors
def sideinfo_build(ctx, **values):
    """Generates side information for every entity of the dataset."""
    cfg = _config(ctx, out_target="sideinfo_path", **values)
    run_pipeline(cfg, ["sideinfo"], command="sideinfo build")


@cli.group()
def embed():
    """Embedding cache."""


@embed.command("warm")
@_run_options
@_out_option("Embedding cache file to fill (same as --embeddings).")
@click.pass_context
@_handle_errors
def embed_warm(ctx, **values):
    """Embeds every text later stages need into the cache."""
    cfg = _config(ctx, out_target="cache_path", **values)
    run_pipeline(cfg, ["embed"], command="embed warm")


@cli.command("score")
@_run_options
@_out_option("Breakdowns JSONL file.")
@click.pass_context
@_handle_errors
def score(ctx, **values):
    """Writes breakdowns.jsonl: one record per (pair, candidate label)."""
    cfg = _config(ctx, out_target="breakdowns_path", **values)
    result = run_pipeline(cfg, ["score"], command="score")
    if "breakdowns" in result.outputs:
        click.echo(f"Wrote {result.outputs['breakdowns']}")


def _eval_options(command: Callable) -> Callable:
    """--sizes and --samples of the evaluation protocol."""
    command = click.option("--samples", "samples_per_size", type=int,
                           help="Runs per unseen set size.")(command)
    command = click.option("--sizes", callback=_parse_sizes,
                           help="Comma separated unseen set sizes.")(command)
    return command


def _parse_sizes(ctx, param, value):
    """
    Parses a comma separated size list such as "5,10,15".
    :return: The sizes as integers, or None if the option was not given.
    """
    if value is None:
        return None
    try:
        return [int(size) for size in value.split(",") if size.strip()]
    except ValueError:
        raise click.BadParameter(f"{value!r} is not a list of integers.")


@cli.group("eval")
def eval_group():
    """Zero-shot evaluation."""


@eval_group.command("run")
@_run_options
@_eval_options
@_out_option("Report JSON file; report.txt and predictions.jsonl go next "
             "to it.")
@click.option("--config", "local_config", type=click.Path(),
              help="Run config JSON file, in place of the global --config.")
@click.pass_context
@_handle_errors
def eval_run(ctx, **values):
    """Runs the sampled unseen label protocol and writes report.json."""
    cfg = _config(ctx, out_target="report_path", **values)
    result = run_pipeline(cfg, ["eval"], command="eval run")
    if result.report is not None:
        for summary in result.report.sizes:
            click.echo(f"n={summary.size}: macro F1 {summary.mean_f1:.4f} "
                       f"(variance {summary.variance:.6f})")


@cli.command("ablation")
@_run_options
@_eval_options
@click.pass_context
@_handle_errors
def ablation(ctx, **values):
    """Evaluates all five scoring modes on the same samples."""
    cfg = _config(ctx, **values)
    reports = run_ablation_command(cfg)
    for mode, report in reports.items():
        scores = ", ".join(f"n={summary.size} {summary.mean_f1:.4f}"
                           for summary in report.sizes)
        click.echo(f"{mode}: {scores}")


@cli.command("gap")
@click.option("--predictions", type=click.Path(exists=True), required=True)
@click.option("--size", type=int, default=None,
              help="Only the runs of this unseen set size.")
@_handle_errors
def gap(predictions, size):
    """Prints the sentence gap table of a predictions.jsonl file."""
    click.echo(gap_from_predictions(predictions, size))


@cli.command("explain")
@_run_options
@click.option("--doc-id", required=True)
@click.option("--head", "head_index", type=int, required=True)
@click.option("--tail", "tail_index", type=int, required=True)
@click.pass_context
@_handle_errors
def explain(ctx, doc_id, head_index, tail_index, **values):
    """Prints every label's score breakdown for one pair, best first."""
    cfg = _config(ctx, **values)
    explanation = explain_pair(cfg, doc_id, head_index, tail_index)
    click.echo(explanation.render())


@cli.group()
def pipeline():
    """Several stages in one go."""


@pipeline.command("run")
@_run_options
@_eval_options
@click.option("--stages", default=",".join(STAGES), show_default=True,
              help="Comma separated stages to run.")
@click.option("--provider", type=click.Choice(["remote_http",
                                               "synthetic_stub"]))
@click.pass_context
@_handle_errors
def pipeline_run(ctx, stages, **values):
    """Runs the requested stages in pipeline order."""
    cfg = _config(ctx, **values)
    requested = [stage.strip() for stage in stages.split(",")
                 if stage.strip()]
    result = run_pipeline(cfg, requested, command="pipeline run")
    for name, path in result.outputs.items():
        click.echo(f"{name}: {Path(path)}")
    if result.planned:
        click.echo("Planned stages: " + ", ".join(result.planned))


def main():
    cli(prog_name="zsre")


if __name__ == "__main__":
    main()
