"""Chat-completions client over HTTP with retry and backoff."""

from __future__ import annotations

import logging
import os
import random
import threading
import time
from dataclasses import dataclass
from typing import Callable

import httpx

from .types import (
    ChatPrompt,
    ClientRequestError,
    LLMTimeoutError,
    ProtocolError,
    RateLimitError,
    TransportError,
)

logger = logging.getLogger(__name__)

API_KEY_ENV = "GROUNDKIT_LLM_API_KEY"


@dataclass(frozen=True)
class EndpointConfig:
    endpoint: str
    model: str
    timeout_s: float = 60.0
    max_retries: int = 3
    backoff_base_s: float = 1.0
    backoff_factor: float = 2.0
    max_backoff_s: float = 60.0


class HttpChatClient:
    """Callable chat client: ``client(prompt) -> str``.

    Posts to ``{endpoint}/chat/completions`` and reads
    ``choices[0].message.content``. 429 and 5xx responses, timeouts and
    connection errors are retried with exponential backoff plus jitter; other
    4xx responses are not. The API key is read from ``GROUNDKIT_LLM_API_KEY``.
    Safe to share between threads.
    """

    def __init__(self, config: EndpointConfig, *, api_key: str | None = None,
                 sleep: Callable[[float], None] = time.sleep, seed: int | None = None,
                 transport: httpx.BaseTransport | None = None):
        self.config = config
        self._api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self._sleep = sleep
        self._rng = random.Random(seed)
        self._lock = threading.Lock()
        self.retries = 0
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        self._client = httpx.Client(headers=headers, timeout=config.timeout_s, transport=transport)

    @property
    def url(self) -> str:
        return self.config.endpoint.rstrip("/") + "/chat/completions"

    def payload(self, prompt: ChatPrompt) -> dict:
        return {
            "model": self.config.model,
            "messages": prompt.to_messages(),
            "temperature": prompt.temperature,
            "max_tokens": prompt.max_tokens,
        }

    def backoff(self, attempt: int) -> float:
        delay = min(self.config.backoff_base_s * self.config.backoff_factor ** attempt,
                    self.config.max_backoff_s)
        with self._lock:
            jitter = self._rng.uniform(0.0, delay / 2)
        return delay / 2 + jitter

    def __call__(self, prompt: ChatPrompt) -> str:
        return self.complete(prompt)

    def complete(self, prompt: ChatPrompt) -> str:
        body = self.payload(prompt)
        attempts = self.config.max_retries + 1
        for attempt in range(attempts):
            last = attempt == attempts - 1
            try:
                resp = self._client.post(self.url, json=body)
            except httpx.TimeoutException as exc:
                if last:
                    raise LLMTimeoutError(f"request timed out after {attempts} attempt(s)") from exc
                self._retry(attempt, f"timeout ({exc.__class__.__name__})")
                continue
            except httpx.TransportError as exc:
                if last:
                    raise TransportError(f"transport failure after {attempts} attempt(s): {exc}") from exc
                self._retry(attempt, f"transport error ({exc})")
                continue

            if resp.status_code == 200:
                return self._content(resp)
            if resp.status_code == 429 or resp.status_code >= 500:
                if last:
                    cls = RateLimitError if resp.status_code == 429 else TransportError
                    raise cls(f"HTTP {resp.status_code} after {attempts} attempt(s)")
                self._retry(attempt, f"HTTP {resp.status_code}", resp.headers.get("Retry-After"))
                continue
            raise ClientRequestError(resp.status_code, resp.text)
        raise AssertionError("unreachable")

    def _retry(self, attempt: int, reason: str, retry_after: str | None = None) -> None:
        delay = self.backoff(attempt)
        if retry_after:
            try:
                delay = max(delay, min(float(retry_after), self.config.max_backoff_s))
            except ValueError:
                pass
        with self._lock:
            self.retries += 1
        logger.warning("LLM request failed (%s); retry %d in %.2fs", reason, attempt + 1, delay)
        self._sleep(delay)

    @staticmethod
    def _content(resp: httpx.Response) -> str:
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProtocolError("response lacks choices[0].message.content") from exc
        if not isinstance(content, str):
            raise ProtocolError("choices[0].message.content is not a string")
        return content

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> "HttpChatClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class BoundedLLM:
    """Wrap a completion function so at most ``max_concurrency`` calls run at once."""

    def __init__(self, llm: Callable[[ChatPrompt], str], max_concurrency: int = 4):
        if max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")
        self._llm = llm
        self._sem = threading.BoundedSemaphore(max_concurrency)
        self.max_concurrency = max_concurrency

    def __call__(self, prompt: ChatPrompt) -> str:
        with self._sem:
            return self._llm(prompt)
