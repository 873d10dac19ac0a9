"""
Embedding cache file.

UTF-8 JSONL. The first line is a header,
    {"format": "zsre-embedding-cache", "version": 1, "identity": {...}}
where identity is EncoderConfig.cache_identity() of the encoder that filled
the cache. Every following line holds one vector,
    {"key": <sha256 of identity and text>, "text": ..., "vector": [...]}
Vectors are written with full float precision, so a reload reproduces them
bit for bit. A cache written by a different encoder is refused.
"""
from __future__ import annotations

import hashlib
import json
import threading
from pathlib import Path
from typing import Any

import numpy as np

from Code.Common.errors import EmbeddingCacheError
from Code.Common.jsonl import dumps_line, iter_jsonl
from Code.SideInfoEmbedding.providers import as_embedding_vector

CACHE_FORMAT = "zsre-embedding-cache"
CACHE_VERSION = 1


class EmbeddingCache:
    """
    Text -> vector map for one encoder identity, mirrored to an append-only
    file when path is given.
    :param identity: EncoderConfig.cache_identity() of the encoder.
    :param dim: Dimension every stored vector must have.
    :param path: Cache file; loaded if it exists, created on the first put.
    :param read_only: Keep new vectors in memory and never touch the file.
    """

    def __init__(self, identity: dict[str, Any], dim: int,
                 path: str | Path | None = None, read_only: bool = False):
        self.identity = identity
        self.dim = dim
        self.path = Path(path) if path is not None else None
        self.read_only = read_only
        self._prefix = json.dumps(identity, sort_keys=True)
        self._vectors: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()
        self._header_written = False
        if self.path is not None and self.path.exists():
            self._load()

    def key(self, text: str) -> str:
        """sha256 of the encoder identity and the text."""
        return hashlib.sha256(
            f"{self._prefix}\x00{text}".encode("utf-8")).hexdigest()

    def _load(self) -> None:
        """Reads the file, refusing it if the header names another encoder."""
        lines = iter_jsonl(self.path)
        header = next(lines, None)
        if header is None:
            return
        if (header.get("format") != CACHE_FORMAT
                or header.get("version") != CACHE_VERSION):
            raise EmbeddingCacheError(
                f"{self.path} is not a version {CACHE_VERSION} embedding "
                f"cache."
            )
        if header.get("identity") != self.identity:
            raise EmbeddingCacheError(
                f"{self.path} was written by encoder {header.get('identity')}"
                f", not {self.identity}."
            )
        self._header_written = True
        for entry in lines:
            self._vectors[entry["key"]] = as_embedding_vector(
                entry["vector"], self.dim)

    def __contains__(self, text: str) -> bool:
        return self.key(text) in self._vectors

    def __len__(self) -> int:
        return len(self._vectors)

    def get(self, text: str) -> np.ndarray | None:
        return self._vectors.get(self.key(text))

    def put_many(self, texts: list[str], vectors: list[np.ndarray]) -> None:
        """
        Stores vectors under their texts and appends the new ones to the
        file. Texts already cached keep their first vector.
        """
        with self._lock:
            lines = []
            for text, vector in zip(texts, vectors):
                key = self.key(text)
                if key in self._vectors:
                    continue
                self._vectors[key] = vector
                lines.append(dumps_line({"key": key, "text": text,
                                         "vector": vector.tolist()}))
            if self.path is None or self.read_only or not lines:
                return
            # the header goes in front of the first vector only
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as file:
                if not self._header_written:
                    file.write(dumps_line({"format": CACHE_FORMAT,
                                           "version": CACHE_VERSION,
                                           "identity": self.identity}))
                    self._header_written = True
                file.writelines(lines)
