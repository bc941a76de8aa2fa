"""Chat-completion backend: messages in, text out, with retry on throttling."""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass
from typing import Optional, Protocol

import requests

logger = logging.getLogger(__name__)

RETRY_STATUS = frozenset({429, 500, 502, 503, 504})


class BackendError(RuntimeError):
    """The backend could not produce a completion (after retries, if any)."""


@dataclass(frozen=True)
class BackendConfig:
    endpoint: str
    model: str
    temperature: float = 0.2
    max_tokens: int = 3000
    api_key_env: str = "AGENTROUTER_API_KEY"
    timeout: float = 60.0
    max_attempts: int = 5
    backoff_base: float = 1.0
    backoff_max: float = 30.0

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be nonnegative")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")


class ChatBackend(Protocol):
    def complete(self, messages: list[dict], seed: Optional[int] = None) -> str: ...


class HTTPBackend:
    """OpenAI-compatible ``/chat/completions`` client."""

    def __init__(self, config: BackendConfig, session: Optional[requests.Session] = None, sleep=time.sleep):
        key = os.environ.get(config.api_key_env)
        if not key:
            raise BackendError(f"environment variable {config.api_key_env} is not set")
        self.config = config
        self.session = session or requests.Session()
        self.session.headers.update({"Authorization": f"Bearer {key}"})
        self._sleep = sleep
        self.retries = 0

    def _delay(self, attempt: int, response=None) -> float:
        if response is not None:
            hint = response.headers.get("Retry-After")
            try:
                if hint is not None:
                    return min(float(hint), self.config.backoff_max)
            except ValueError:
                pass
        return min(self.config.backoff_base * 2 ** attempt, self.config.backoff_max)

    def complete(self, messages, seed=None) -> str:
        cfg = self.config
        payload = {"model": cfg.model, "messages": messages,
                   "temperature": cfg.temperature, "max_tokens": cfg.max_tokens}
        if seed is not None:
            payload["seed"] = seed
        last = "no attempt made"
        for attempt in range(cfg.max_attempts):
            try:
                resp = self.session.post(cfg.endpoint, json=payload, timeout=cfg.timeout)
            except requests.RequestException as exc:
                last = f"{type(exc).__name__}: {exc}"
                resp = None
            else:
                if resp.status_code == 200:
                    try:
                        return resp.json()["choices"][0]["message"]["content"] or ""
                    except (ValueError, KeyError, IndexError, TypeError) as exc:
                        raise BackendError(f"malformed completion payload: {exc}") from None
                last = f"HTTP {resp.status_code}"
                if resp.status_code not in RETRY_STATUS:
                    raise BackendError(f"{last}: {resp.text[:200]}")
            if attempt + 1 < cfg.max_attempts:
                delay = self._delay(attempt, resp)
                logger.info("retrying %s after %s (%.2fs)", cfg.model, last, delay)
                self.retries += 1
                self._sleep(delay)
        raise BackendError(f"gave up after {cfg.max_attempts} attempts: {last}")
