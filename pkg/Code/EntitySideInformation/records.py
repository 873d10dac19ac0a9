from __future__ import annotations

import threading
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterator

import pandas as pd
import regex

from Code.Common.errors import ConfigError, SchemaError
from Code.Common.jsonl import dumps_line, iter_jsonl
from Code.Common.logging_setup import get_logger

logger = get_logger(__name__)

MAX_HYPERNYM_WORDS = 8
_SENTENCE_FINAL = regex.compile(r"[.!?;:]$")


class ChatProvider(str, Enum):
    remote_http = "remote_http"
    synthetic_stub = "synthetic_stub"


@dataclass
class GenerationConfig:
    """
    Settings for description and hypernym generation.
    context_window_sentences limits the document text in the description
    prompt to that many sentences on either side of the entity's mentions;
    None sends the whole document, cut at max_context_tokens tokens.
    """
    provider: ChatProvider = ChatProvider.remote_http
    model_id: str = "gpt-4o-mini"
    base_url: str = "https://api.openai.com"
    temperature: float = 0.0
    max_tokens: int = 256
    request_timeout: float = 60.0
    max_retries: int = 3
    backoff_seconds: float = 1.0
    parallelism: int = 4
    max_description_chars: int = 512
    context_window_sentences: int | None = None
    max_context_tokens: int = 2048
    description_prompt: str = "description_v1"
    hypernym_prompt: str = "hypernym_v1"

    def __post_init__(self):
        self.provider = ChatProvider(self.provider)
        if self.temperature < 0:
            raise ConfigError(
                f"temperature should be >= 0, got {self.temperature}.")
        if self.parallelism < 1:
            raise ConfigError(
                f"parallelism should be >= 1, got {self.parallelism}.")
        if self.max_retries < 0:
            raise ConfigError(
                f"max_retries should be >= 0, got {self.max_retries}.")
        if self.max_description_chars < 1 or self.max_tokens < 1:
            raise ConfigError(
                "max_description_chars and max_tokens should be positive.")
        if (self.context_window_sentences is not None
                and self.context_window_sentences < 0):
            raise ConfigError("context_window_sentences should be >= 0.")


@dataclass(frozen=True)
class SideInfoRecord:
    doc_id: str
    entity_index: int
    mention_surface: str
    entity_type: str
    description: str
    hypernym: str
    generator_model: str
    created_at: pd.Timestamp
    prompt_versions: dict[str, str] = field(default_factory=dict,
                                            hash=False)

    def __post_init__(self):
        where = f"sideinfo[{self.entity_index}]"
        if not self.description.strip():
            raise SchemaError(self.doc_id, f"{where}.description",
                              "description is empty.")
        if not self.hypernym.strip():
            raise SchemaError(self.doc_id, f"{where}.hypernym",
                              "hypernym is empty.")
        if len(self.hypernym.split()) > MAX_HYPERNYM_WORDS:
            raise SchemaError(
                self.doc_id, f"{where}.hypernym",
                f"hypernym has more than {MAX_HYPERNYM_WORDS} words."
            )
        if _SENTENCE_FINAL.search(self.hypernym):
            raise SchemaError(self.doc_id, f"{where}.hypernym",
                              "hypernym ends with punctuation.")

    @property
    def key(self) -> tuple[str, int]:
        return self.doc_id, self.entity_index

    def to_dict(self) -> dict[str, Any]:
        record = asdict(self)
        record["created_at"] = self.created_at.isoformat()
        return record

    @classmethod
    def from_dict(cls, record: dict[str, Any]) -> SideInfoRecord:
        record = dict(record)
        record["created_at"] = pd.Timestamp(record["created_at"])
        return cls(**record)


class SideInfoStore:
    """
    Map (doc_id, entity_index) -> SideInfoRecord backed by an append-only
    JSONL file. Appends go through one lock, so concurrent generators can
    share a store. If path is None the store lives in memory only.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._records: dict[tuple[str, int], SideInfoRecord] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            for raw in iter_jsonl(self.path):
                record = SideInfoRecord.from_dict(raw)
                if record.key in self._records:
                    logger.warning(
                        "Duplicate side info record for %s in %s; keeping "
                        "the later one", record.key, self.path
                    )
                self._records[record.key] = record

    def __contains__(self, key: tuple[str, int]) -> bool:
        return key in self._records

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[SideInfoRecord]:
        return iter(self._records.values())

    def get(self, doc_id: str, entity_index: int) -> SideInfoRecord:
        try:
            return self._records[(doc_id, entity_index)]
        except KeyError:
            raise KeyError(
                f"No side information for entity {entity_index} of "
                f"document {doc_id!r}."
            ) from None

    def add(self, record: SideInfoRecord) -> None:
        with self._lock:
            if record.key in self._records:
                raise KeyError(
                    f"Side information for {record.key} already stored.")
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as file:
                    file.write(dumps_line(record.to_dict()))
                    file.flush()
            self._records[record.key] = record
