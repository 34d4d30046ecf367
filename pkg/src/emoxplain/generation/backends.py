from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Callable, Mapping

from .core import (
    BackendConfigError,
    BackendRequestError,
    GeneratorSpec,
    TransientBackendError,
    prompt_hash,
)

log = logging.getLogger(__name__)

ENV_URL = "EMOXPLAIN_LLM_URL"
ENV_KEY = "EMOXPLAIN_LLM_API_KEY"
DEFAULT_URL = "https://api.openai.com/v1/chat/completions"


class RetryableError(Exception):
    """Raised by a backend for failures worth retrying (timeouts, 429, 5xx)."""


class MockBackend:
    """Returns fixture text keyed by prompt hash and counts every call.

    ``responder`` is consulted for prompts missing from ``fixtures``; with
    neither, the call fails so a test notices an unexpected prompt.
    """

    def __init__(self, fixtures: Mapping[str, str] | None = None,
                 responder: Callable[[str], str] | None = None):
        self.fixtures = dict(fixtures or {})
        self.responder = responder
        self.calls = 0
        self.prompts: list[str] = []

    def __call__(self, prompt: str, spec: GeneratorSpec) -> str:
        self.calls += 1
        self.prompts.append(prompt)
        h = prompt_hash(prompt)
        if h in self.fixtures:
            return self.fixtures[h]
        if self.responder is not None:
            return self.responder(prompt)
        raise BackendRequestError(f"mock backend has no fixture for prompt {h[:12]}")

    def add(self, prompt: str, response: str) -> None:
        self.fixtures[prompt_hash(prompt)] = response

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for h in sorted(self.fixtures):
                fh.write(json.dumps({"prompt_hash": h, "response": self.fixtures[h]}, ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "MockBackend":
        fixtures = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    d = json.loads(line)
                    fixtures[d["prompt_hash"]] = d["response"]
        return cls(fixtures)


def _redact(headers: Mapping[str, str]) -> dict:
    return {k: ("***" if k.lower() in ("authorization", "api-key", "x-api-key") else v) for k, v in headers.items()}


class ChatCompletionBackend:
    """Client for an HTTP chat-completions endpoint.

    The URL comes from ``EMOXPLAIN_LLM_URL`` (OpenAI's endpoint by default)
    and the bearer token from ``EMOXPLAIN_LLM_API_KEY``. Request and
    response bodies are logged at DEBUG with the credential redacted.
    """

    def __init__(self, url: str | None = None, api_key: str | None = None, *, timeout: float = 120.0,
                 transport=None):
        import httpx

        self.url = url or os.environ.get(ENV_URL) or DEFAULT_URL
        self.api_key = api_key if api_key is not None else os.environ.get(ENV_KEY)
        if not self.api_key:
            raise BackendConfigError(f"no LLM credential: set the {ENV_KEY} environment variable")
        self._client = httpx.Client(timeout=timeout, transport=transport)
        self._httpx = httpx

    def request_body(self, prompt: str, spec: GeneratorSpec) -> dict:
        return {
            "model": spec.model_id,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": spec.temperature,
            "top_p": spec.top_p,
            "max_tokens": spec.max_tokens,
            "seed": spec.seed,
        }

    def __call__(self, prompt: str, spec: GeneratorSpec) -> str:
        headers = {"Authorization": f"Bearer {self.api_key}", "Content-Type": "application/json"}
        body = self.request_body(prompt, spec)
        log.debug("POST %s headers=%s body=%s", self.url, _redact(headers), json.dumps(body))
        try:
            resp = self._client.post(self.url, headers=headers, json=body)
        except self._httpx.TransportError as exc:
            raise RetryableError(f"transport error: {exc}") from exc
        log.debug("response %s %s", resp.status_code, resp.text[:2000])
        if resp.status_code == 429 or resp.status_code >= 500:
            raise RetryableError(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise BackendRequestError(f"HTTP {resp.status_code}: {resp.text[:500]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise BackendRequestError(f"unexpected response shape: {resp.text[:500]}") from exc

    def close(self) -> None:
        self._client.close()


def call_with_retries(backend, prompt: str, spec: GeneratorSpec, clock) -> str:
    """Bounded exponential backoff: waits base, 2*base, 4*base ... between attempts."""
    last = None
    for attempt in range(spec.max_attempts):
        try:
            return backend(prompt, spec)
        except RetryableError as exc:
            last = exc
            if attempt + 1 < spec.max_attempts:
                delay = spec.backoff_base * (2 ** attempt)
                log.warning("attempt %d failed (%s); retrying in %.2fs", attempt + 1, exc, delay)
                clock.sleep(delay)
    raise TransientBackendError(f"backend failed after {spec.max_attempts} attempts: {last}")
