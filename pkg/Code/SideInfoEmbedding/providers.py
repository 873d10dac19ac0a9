from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Any, Protocol, Sequence

import httpx
import numpy as np
import regex
from tenacity import (
    Retrying,
    retry_if_exception,
    stop_after_attempt,
    wait_exponential,
)

from Code.Common.errors import (
    ConfigError,
    DimensionMismatch,
    NonFiniteVector,
    ServiceError,
)
from Code.Common.logging_setup import get_logger

logger = get_logger(__name__)

ENCODER_URL_ENV = "ZSRE_ENCODER_URL"
EMBED_PATH = "/embed"
_RETRYABLE_STATUS = {408, 429, 500, 502, 503, 504}
_TOKEN = regex.compile(r"\w+")


class EncoderProvider(str, Enum):
    remote_http = "remote_http"
    deterministic_mock = "deterministic_mock"


class Pooling(str, Enum):
    cls_token = "cls_token"
    mean_tokens = "mean_tokens"


@dataclass
class EncoderConfig:
    """
    Which encoder turns texts into vectors. The mock settings only matter
    for the deterministic_mock provider: mock_token_weight scales the
    per-token part of a mock vector (0 gives a pure hash of the text).
    """
    provider: EncoderProvider = EncoderProvider.remote_http
    model_id: str = "bert-base-uncased"
    dim: int = 768
    pooling: Pooling = Pooling.cls_token
    batch_size: int = 32
    cache_path: str | None = None
    base_url: str = "http://localhost:8080"
    request_timeout: float = 60.0
    max_retries: int = 3
    backoff_seconds: float = 1.0
    mock_seed: int = 0
    mock_token_weight: float = 1.0

    def __post_init__(self):
        self.provider = EncoderProvider(self.provider)
        self.pooling = Pooling(self.pooling)
        if self.dim <= 0:
            raise ConfigError(f"dim should be > 0, got {self.dim}.")
        if self.batch_size < 1:
            raise ConfigError(
                f"batch_size should be >= 1, got {self.batch_size}.")
        if self.mock_token_weight < 0:
            raise ConfigError("mock_token_weight should be >= 0.")

    def cache_identity(self) -> dict[str, Any]:
        """Everything that changes the vector produced for a given text."""
        identity = {
            "provider": self.provider.value,
            "model_id": self.model_id,
            "pooling": self.pooling.value,
            "dim": self.dim,
        }
        if self.provider is EncoderProvider.deterministic_mock:
            identity["mock_seed"] = self.mock_seed
            identity["mock_token_weight"] = self.mock_token_weight
        return identity


def as_embedding_vector(values: Sequence[float] | np.ndarray,
                        dim: int) -> np.ndarray:
    """
    Checks one vector against the run's dimension and finiteness and returns
    it as a read-only float64 array.
    """
    vector = np.array(values, dtype=np.float64)
    if vector.ndim != 1 or vector.shape[0] != dim:
        raise DimensionMismatch(dim, vector.shape[-1] if vector.ndim else 0)
    if not np.all(np.isfinite(vector)):
        raise NonFiniteVector("Vector contains NaN or infinite values.")
    vector.setflags(write=False)
    return vector


class TextEncoder(Protocol):
    calls: int

    def encode(self, texts: list[str]) -> list[np.ndarray]:
        ...


class DeterministicMockEncoder:
    """
    Offline stand-in for a sentence encoder. A text's vector is a seeded
    Gaussian draw keyed by the whole text plus, scaled by token_weight, one
    seeded draw per word token, normalized to unit length. Texts that share
    words therefore point in similar directions, while distinct texts never
    get the same vector.
    """

    TEXT_WEIGHT = 0.5

    def __init__(self, dim: int = 768, seed: int = 0,
                 token_weight: float = 1.0):
        self.dim = dim
        self.seed = seed
        self.token_weight = token_weight
        self.calls = 0
        self._draw = lru_cache(maxsize=65536)(self._gaussian)

    def _gaussian(self, key: str) -> np.ndarray:
        digest = hashlib.sha256(f"{self.seed}\x00{key}".encode("utf-8"))
        rng = np.random.default_rng(
            int.from_bytes(digest.digest()[:8], "little"))
        draw = rng.standard_normal(self.dim)
        return draw / np.linalg.norm(draw)

    def vector(self, text: str) -> np.ndarray:
        vector = self.TEXT_WEIGHT * self._draw(f"text\x00{text}")
        if self.token_weight:
            for token in _TOKEN.findall(text.lower()):
                vector = vector + self.token_weight * self._draw(
                    f"token\x00{token}")
        return vector / np.linalg.norm(vector)

    def encode(self, texts: list[str]) -> list[np.ndarray]:
        self.calls += 1
        return [self.vector(text) for text in texts]


def _is_retryable(error: BaseException) -> bool:
    if isinstance(error, httpx.HTTPStatusError):
        return error.response.status_code in _RETRYABLE_STATUS
    return isinstance(error, httpx.TransportError)


class RemoteHttpEncoder:
    """
    Client of an encoder service: POST {base_url}/embed with
    {model, pooling, texts} answered by {vectors: [[...], ...]}.
    """

    def __init__(self, cfg: EncoderConfig,
                 transport: httpx.BaseTransport | None = None):
        self.cfg = cfg
        self.calls = 0
        self._client = httpx.Client(
            base_url=cfg.base_url.rstrip("/"),
            timeout=cfg.request_timeout,
            transport=transport
        )

    def encode(self, texts: list[str]) -> list[np.ndarray]:
        payload = {
            "model": self.cfg.model_id,
            "pooling": self.cfg.pooling.value,
            "texts": list(texts),
        }
        retrying = Retrying(
            stop=stop_after_attempt(self.cfg.max_retries + 1),
            wait=wait_exponential(multiplier=self.cfg.backoff_seconds,
                                  max=30),
            retry=retry_if_exception(_is_retryable),
            reraise=True
        )
        try:
            for attempt in retrying:
                with attempt:
                    response = self._post(payload)
        except httpx.HTTPStatusError as error:
            raise ServiceError(error.response.status_code,
                               error.response.text) from error
        except httpx.TransportError as error:
            raise ServiceError(None, repr(error)) from error

        try:
            vectors = response.json()["vectors"]
        except (ValueError, KeyError, TypeError) as error:
            raise ServiceError(
                response.status_code,
                f"malformed embedding response: {response.text[:200]}"
            ) from error
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise ServiceError(
                response.status_code,
                f"expected {len(texts)} vectors in the embedding response."
            )
        return [as_embedding_vector(vector, self.cfg.dim)
                for vector in vectors]

    def _post(self, payload: dict) -> httpx.Response:
        self.calls += 1
        response = self._client.post(EMBED_PATH, json=payload)
        response.raise_for_status()
        return response

    def close(self) -> None:
        self._client.close()


def make_encoder(cfg: EncoderConfig) -> TextEncoder:
    if cfg.provider is EncoderProvider.deterministic_mock:
        return DeterministicMockEncoder(cfg.dim, cfg.mock_seed,
                                        cfg.mock_token_weight)
    return RemoteHttpEncoder(cfg)
