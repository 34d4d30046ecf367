from __future__ import annotations

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

from .backends import ChatCompletionBackend, MockBackend, call_with_retries
from .core import (
    BackendConfigError,
    Clock,
    GenerationCache,
    GenerationRecord,
    GeneratorSpec,
    RateLimiter,
    prompt_hash,
)

log = logging.getLogger(__name__)


class Generator:
    """Cache-first front end over one generator backend.

    Every request goes through the cache, so a prompt reaches the backend at
    most once per cache lifetime; concurrent requests for the same prompt
    share one in-flight call.
    """

    def __init__(self, spec: GeneratorSpec, backend=None, *, cache: GenerationCache | None = None,
                 clock: Clock | None = None, seq2seq=None):
        self.spec = spec
        self.clock = clock or Clock()
        self.cache = cache if cache is not None else GenerationCache()
        self.limiter = RateLimiter(spec.requests_per_second, self.clock)
        self.backend_calls = 0
        self._inflight: dict[str, threading.Lock] = {}
        self._inflight_guard = threading.Lock()
        self._namespace = spec.cache_namespace()
        if backend is None:
            backend = self._default_backend(seq2seq)
        self.backend = backend

    def _default_backend(self, seq2seq):
        if self.spec.kind == "llm_service":
            return ChatCompletionBackend()
        if self.spec.kind == "local_seq2seq":
            if seq2seq is None:
                raise BackendConfigError("local_seq2seq generator needs a trained seq2seq handle")
            from .seq2seq import generate_seq2seq
            return lambda prompt, spec: generate_seq2seq(seq2seq, prompt)
        raise BackendConfigError("mock generator needs a MockBackend with fixtures")

    @property
    def parses_lines(self) -> bool:
        # seq2seq output is already concatenated explanation text
        return self.spec.kind != "local_seq2seq"

    def _lock_for(self, h: str) -> threading.Lock:
        with self._inflight_guard:
            return self._inflight.setdefault(h, threading.Lock())

    def generate(self, prompt: str, item_id: str | None = None, *, parse: bool | None = None) -> GenerationRecord:
        parse = self.parses_lines if parse is None else parse
        h = prompt_hash(prompt)
        hit = self.cache.get(self._namespace, h)
        if hit is not None:
            return hit
        with self._lock_for(h):
            hit = self.cache.get(self._namespace, h)
            if hit is not None:
                return hit
            self.limiter.acquire()
            self.backend_calls += 1
            raw = call_with_retries(self.backend, prompt, self.spec, self.clock)
            record = GenerationRecord.from_response(item_id, prompt, raw, self.spec, self.clock.timestamp(), parse)
            if record.parse_failed:
                log.warning("item %s: response had no parsable lines", item_id)
            return self.cache.put(self._namespace, record)

    def generate_many(self, requests: Sequence[tuple[str | None, str]], *, max_workers: int = 1,
                      parse: bool | None = None) -> list[GenerationRecord]:
        """Generate for ``(item_id, prompt)`` pairs, results in input order."""
        if max_workers <= 1:
            return [self.generate(p, i, parse=parse) for i, p in requests]
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            futures = [pool.submit(self.generate, p, i, parse=parse) for i, p in requests]
            return [f.result() for f in futures]


def generate(spec: GeneratorSpec, prompt: str, *, generator: Generator | None = None,
             backend=None, item_id: str | None = None) -> GenerationRecord:
    """One-shot convenience wrapper; reuse a `Generator` to share its cache."""
    gen = generator or Generator(spec, backend)
    return gen.generate(prompt, item_id)


__all__ = ["Generator", "generate", "MockBackend", "ChatCompletionBackend"]
