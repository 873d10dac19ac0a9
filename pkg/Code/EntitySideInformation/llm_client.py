from __future__ import annotations

import os
from typing import Protocol

import httpx
from tenacity import (
    Retrying,
    retry_if_exception,
    stop_after_attempt,
    wait_exponential,
)

from Code.Common.errors import ConfigError, ServiceError
from Code.Common.logging_setup import get_logger
from Code.EntitySideInformation.records import ChatProvider, GenerationConfig

logger = get_logger(__name__)

API_KEY_ENV = "ZSRE_LLM_API_KEY"
COMPLETIONS_PATH = "/v1/chat/completions"
_RETRYABLE_STATUS = {408, 429, 500, 502, 503, 504}


class ChatClient(Protocol):
    def complete(self, messages: list[dict[str, str]], model: str,
                 temperature: float, max_tokens: int) -> str:
        ...


def _is_retryable(error: BaseException) -> bool:
    if isinstance(error, httpx.HTTPStatusError):
        return error.response.status_code in _RETRYABLE_STATUS
    return isinstance(error, httpx.TransportError)


def _log_retry(retry_state) -> None:
    logger.warning(
        "llm.retry attempt=%d error=%r",
        retry_state.attempt_number, retry_state.outcome.exception()
    )


class HttpChatClient:
    """
    Minimal chat-completion client: POST {base_url}/v1/chat/completions with
    {model, messages, temperature, max_tokens} and read
    choices[0].message.content. Transport errors, 429 and 5xx responses are
    retried with exponential backoff; anything else fails at once.
    """

    def __init__(
            self,
            base_url: str,
            api_key: str | None = None,
            timeout: float = 60.0,
            max_retries: int = 3,
            backoff_seconds: float = 1.0,
            transport: httpx.BaseTransport | None = None
    ):
        if api_key is None:
            api_key = os.getenv(API_KEY_ENV, "")
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self.max_retries = max_retries
        self.backoff_seconds = backoff_seconds
        self.calls = 0
        self._client = httpx.Client(
            base_url=base_url.rstrip("/"),
            headers=headers,
            timeout=timeout,
            transport=transport
        )

    def complete(self, messages: list[dict[str, str]], model: str,
                 temperature: float, max_tokens: int) -> str:
        payload = {
            "model": model,
            "messages": messages,
            "temperature": temperature,
            "max_tokens": max_tokens,
        }
        retrying = Retrying(
            stop=stop_after_attempt(self.max_retries + 1),
            wait=wait_exponential(multiplier=self.backoff_seconds, max=30),
            retry=retry_if_exception(_is_retryable),
            before_sleep=_log_retry,
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
            content = response.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as error:
            raise ServiceError(
                response.status_code,
                f"malformed completion response: {response.text[:200]}"
            ) from error
        return content or ""

    def _post(self, payload: dict) -> httpx.Response:
        self.calls += 1
        logger.debug("llm.request model=%s", payload["model"])
        response = self._client.post(COMPLETIONS_PATH, json=payload)
        response.raise_for_status()
        return response

    def close(self) -> None:
        self._client.close()


def make_chat_client(cfg: GenerationConfig, dataset=None) -> ChatClient:
    """Builds the chat client named by cfg.provider."""
    if cfg.provider is ChatProvider.synthetic_stub:
        from Code.DocumentCorpus.synthetic import SyntheticChatClient
        if dataset is None:
            raise ConfigError(
                "The synthetic_stub provider answers from a dataset; none "
                "was given."
            )
        return SyntheticChatClient.from_dataset(dataset)
    return HttpChatClient(
        base_url=cfg.base_url,
        timeout=cfg.request_timeout,
        max_retries=cfg.max_retries,
        backoff_seconds=cfg.backoff_seconds
    )
