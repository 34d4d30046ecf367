"""Generator specs, generation records, the on-disk cache and the rate limiter."""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

from ..labels import parse_emotion
from ..prompting.parsing import GeneratedLine, GenerationParseError, RejectedLine, parse_generation

GENERATOR_KINDS = ("llm_service", "local_seq2seq", "mock")


class GenerationError(RuntimeError):
    pass


class BackendConfigError(GenerationError):
    """Missing endpoint/credential or an unusable backend configuration."""


class TransientBackendError(GenerationError):
    """Backend still failing after the retry budget was spent."""


class BackendRequestError(GenerationError):
    """Non-retryable rejection by the backend (4xx other than 429)."""


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str = "mock"
    model_id: str = "mock"
    temperature: float = 1.0
    top_p: float = 1.0
    max_tokens: int = 1024
    seed: int = 0
    requests_per_second: float | None = None
    max_attempts: int = 5
    backoff_base: float = 0.5
    expected_lines: int = 10

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise ValueError(f"generator kind must be one of {GENERATOR_KINDS}, got {self.kind!r}")
        if not 1 <= self.max_attempts <= 5:
            raise ValueError("max_attempts must be within 1..5")
        if self.requests_per_second is not None and self.requests_per_second <= 0:
            raise ValueError("requests_per_second must be positive")

    def summary(self) -> dict:
        return {"kind": self.kind, "model_id": self.model_id, "temperature": self.temperature,
                "top_p": self.top_p, "max_tokens": self.max_tokens, "seed": self.seed}

    def cache_namespace(self) -> str:
        return hashlib.sha256(json.dumps(self.summary(), sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass(frozen=True)
class GenerationRecord:
    item_id: str | None
    prompt_hash: str
    raw_response: str
    parsed: tuple[GeneratedLine, ...]
    backend: dict
    timestamp: float
    parse_failed: bool = False
    rejected: tuple[RejectedLine, ...] = ()

    @classmethod
    def from_response(cls, item_id, prompt: str, raw: str, spec: GeneratorSpec, timestamp: float,
                      parse: bool = True) -> "GenerationRecord":
        if not parse:
            return cls(item_id, prompt_hash(prompt), raw, (), spec.summary(), timestamp)
        try:
            result = parse_generation(raw, spec.expected_lines)
        except GenerationParseError as exc:
            return cls(item_id, prompt_hash(prompt), raw, (), spec.summary(), timestamp, True,
                       tuple(exc.rejected))
        return cls(item_id, prompt_hash(prompt), raw, result.lines, spec.summary(), timestamp, False,
                   result.rejected)

    def to_json(self) -> dict:
        d = asdict(self)
        d["parsed"] = [{"explanation": g.explanation, "emotion": g.emotion.value} for g in self.parsed]
        d["rejected"] = [asdict(r) for r in self.rejected]
        return d

    @classmethod
    def from_json(cls, d: dict) -> "GenerationRecord":
        return cls(
            d.get("item_id"), d["prompt_hash"], d["raw_response"],
            tuple(GeneratedLine(g["explanation"], parse_emotion(g["emotion"])) for g in d.get("parsed", ())),
            d.get("backend", {}), float(d.get("timestamp", 0.0)), bool(d.get("parse_failed", False)),
            tuple(RejectedLine(**r) for r in d.get("rejected", ())),
        )

    @property
    def labels(self):
        return [g.emotion for g in self.parsed]

    @property
    def explanations(self):
        return [g.explanation for g in self.parsed]


def records_as_items(items, records) -> list:
    """Parsed generations as `NewsItem` copies whose annotations are tagged ``"generated"``.

    ``records`` maps item id to `GenerationRecord`; items without a parsed
    record are skipped. Write the result with `corpus.write_annotations`.
    """
    from ..corpus import AnnotationRecord, NewsItem

    out = []
    for it in items:
        rec = records.get(it.item_id)
        if rec is None or not rec.parsed:
            continue
        anns = tuple(AnnotationRecord(g.emotion, None, g.explanation, f"gen-{k:02d}", "generated")
                     for k, g in enumerate(rec.parsed))
        out.append(NewsItem(it.item_id, it.headline, it.frame, anns, it.modality))
    return out


class GenerationCache:
    """Append-only JSONL store of generation records, keyed by (namespace, prompt hash).

    Readers see an in-memory index; a single lock serializes appends.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self._index: dict[tuple[str, str], GenerationRecord] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0
        if self.path and self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        d = json.loads(line)
                        self._index[(d["namespace"], d["prompt_hash"])] = GenerationRecord.from_json(d["record"])

    def __len__(self) -> int:
        return len(self._index)

    def get(self, namespace: str, phash: str) -> GenerationRecord | None:
        rec = self._index.get((namespace, phash))
        if rec is None:
            self.misses += 1
        else:
            self.hits += 1
        return rec

    def put(self, namespace: str, record: GenerationRecord) -> GenerationRecord:
        """Store ``record`` unless the key exists; returns the record that wins."""
        key = (namespace, record.prompt_hash)
        with self._lock:
            existing = self._index.get(key)
            if existing is not None:
                return existing
            self._index[key] = record
            if self.path:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps({"namespace": namespace, "prompt_hash": record.prompt_hash,
                                         "record": record.to_json()}, ensure_ascii=False) + "\n")
        return record


class Clock:
    """Wall clock; tests substitute `SimulatedClock`."""

    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)

    def timestamp(self) -> float:
        return time.time()


@dataclass
class SimulatedClock(Clock):
    t: float = 0.0
    sleeps: list = field(default_factory=list)

    def now(self) -> float:
        return self.t

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            self.sleeps.append(seconds)
            self.t += seconds

    def timestamp(self) -> float:
        return self.t


class RateLimiter:
    """Evenly spaced admission: one call per ``1/rate`` seconds, no bursts.

    A call admitted at time ``t`` holds its slot until ``t + 1/rate``, so N
    calls occupy at least ``N/rate`` seconds.
    """

    def __init__(self, rate: float | None, clock: Clock | None = None):
        self.interval = 0.0 if not rate else 1.0 / rate
        self.clock = clock or Clock()
        self._next = None
        self._lock = threading.Lock()

    def acquire(self) -> float:
        with self._lock:
            now = self.clock.now()
            start = now if self._next is None else max(now, self._next)
            self._next = start + self.interval
        self.clock.sleep(start - now)
        return start

    @property
    def busy_until(self) -> float | None:
        return self._next


Backend = Callable[[str, GeneratorSpec], str]
