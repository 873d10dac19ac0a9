"""
Run configuration.

A config file is a UTF-8 JSON object whose keys are the RunConfig field names
in Title Case ("dataset_path" is "Dataset Path"); the Generation, Encoder and
Eval sections use their own config classes' field names the same way. See
default_config.json for every key with its default.

Values are resolved in this order, later ones winning: dataclass defaults,
the config file, environment variables, command line flags.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields, is_dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Mapping

from Code.Common.errors import ConfigError
from Code.DocumentCorpus.corpus import PairMode
from Code.DocumentCorpus.loaders import DatasetFormat
from Code.DynamicWeightedScoring.scores import Weights
from Code.EntitySideInformation.records import GenerationConfig
from Code.SideInfoEmbedding.providers import ENCODER_URL_ENV, EncoderConfig
from Code.ZeroShotEvaluation.evaluate import EvalConfig

LLM_BASE_URL_ENV = "ZSRE_LLM_BASE_URL"
SEED_ENV = "ZSRE_SEED"
OFFLINE_ENV = "ZSRE_OFFLINE"

_SECTIONS = {
    "generation": GenerationConfig,
    "encoder": EncoderConfig,
    "eval": EvalConfig,
}
_TRUE = {"1", "true", "yes", "on"}


@dataclass
class RunConfig:
    dataset_path: str | None = None
    dataset_format: DatasetFormat = DatasetFormat.docred_json
    relation_names_path: str | None = None
    lenient: bool = False
    sideinfo_path: str | None = None
    labels_path: str | None = None
    output_dir: str = "Results"
    # files written by the score and eval stages; default under output_dir
    breakdowns_path: str | None = None
    report_path: str | None = None
    pair_mode: PairMode = PairMode.gold_pairs
    seed: int | None = None
    offline: bool = False
    dry_run: bool = False
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        try:
            self.dataset_format = DatasetFormat(self.dataset_format)
            self.pair_mode = PairMode(self.pair_mode)
        except ValueError as error:
            raise ConfigError(str(error)) from error
        if self.seed is not None:
            self.seed = int(self.seed)
            # one seed drives every random choice of a run
            self.eval.master_seed = self.seed
            self.encoder.mock_seed = self.seed

    def to_dict(self) -> dict[str, Any]:
        return _to_title_dict(self)

    @classmethod
    def from_dict(cls, values: Mapping[str, Any]) -> RunConfig:
        values = _from_title_dict(values)
        known = {item.name for item in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"Unknown config keys {sorted(unknown)}.")
        try:
            for name, section in _SECTIONS.items():
                if name in values:
                    values[name] = section(**values[name])
            return cls(**values)
        except TypeError as error:
            raise ConfigError(f"Invalid config: {error}") from error
        except ValueError as error:
            if isinstance(error, ConfigError):
                raise
            raise ConfigError(f"Invalid config: {error}") from error

    @classmethod
    def from_file(cls, path: str | Path) -> RunConfig:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Config file {path} not found.")
        try:
            with open(path, "r", encoding="utf-8") as file:
                values = json.load(file)
        except (json.JSONDecodeError, UnicodeDecodeError) as error:
            raise ConfigError(f"Config file {path} is not valid JSON: "
                              f"{error}") from error
        if not isinstance(values, dict):
            raise ConfigError(f"Config file {path} should hold an object.")
        return cls.from_dict(values)

    def to_file(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as file:
            json.dump(self.to_dict(), file, indent=4, ensure_ascii=False)
            file.write("\n")


def title_case(name: str) -> str:
    return " ".join(part.capitalize() for part in name.split("_"))


def snake_case(key: str) -> str:
    return "_".join(key.lower().split())


def _plain(value: Any) -> Any:
    if is_dataclass(value):
        return _to_title_dict(value)
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    return value


def _to_title_dict(obj: Any) -> dict[str, Any]:
    return {title_case(item.name): _plain(getattr(obj, item.name))
            for item in fields(obj)}


def _from_title_dict(values: Mapping[str, Any]) -> dict[str, Any]:
    return {
        snake_case(key): (_from_title_dict(value)
                          if isinstance(value, Mapping) else value)
        for key, value in values.items()
    }


def apply_environment(values: dict[str, Any],
                      environ: Mapping[str, str] | None = None
                      ) -> dict[str, Any]:
    """
    Overlays the supported environment variables on a snake_case config
    dict. The LLM API key is read by the chat client itself and never
    enters the config.
    """
    environ = os.environ if environ is None else environ
    values = dict(values)
    if environ.get(LLM_BASE_URL_ENV):
        values["generation"] = {**values.get("generation", {}),
                                "base_url": environ[LLM_BASE_URL_ENV]}
    if environ.get(ENCODER_URL_ENV):
        values["encoder"] = {**values.get("encoder", {}),
                             "base_url": environ[ENCODER_URL_ENV]}
    if environ.get(SEED_ENV):
        try:
            values["seed"] = int(environ[SEED_ENV])
        except ValueError as error:
            raise ConfigError(
                f"{SEED_ENV} should be an integer, got "
                f"{environ[SEED_ENV]!r}."
            ) from error
    if environ.get(OFFLINE_ENV):
        values["offline"] = environ[OFFLINE_ENV].strip().lower() in _TRUE
    return values


def load_run_config(
        path: str | Path | None = None,
        overrides: Mapping[str, Any] | None = None,
        environ: Mapping[str, str] | None = None
) -> RunConfig:
    """
    Resolves a RunConfig from defaults, an optional config file, the
    environment and command line overrides.
    :param overrides: snake_case values from the command line. None values
    are ignored; dict values for the generation, encoder and eval sections
    are merged into the section instead of replacing it.
    """
    values: dict[str, Any] = {}
    if path is not None:
        values = _from_title_dict(RunConfig.from_file(path).to_dict())
    values = apply_environment(values, environ)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in _SECTIONS:
            values[key] = {**values.get(key, {}), **value}
        else:
            values[key] = value
    if "eval" in values and isinstance(values["eval"].get("weights"),
                                       Weights):
        values["eval"]["weights"] = values["eval"]["weights"].to_dict()
    return RunConfig.from_dict({title_case(key): value
                                for key, value in values.items()})
