"""Declarative experiment configuration (YAML or JSON)."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import yaml

from .classification.classifier import ClassifierConfig
from .classification.pipelines import PIPELINES, PipelineError, PipelineSpec
from .classification.transfer import TransferConfig
from .corpus import DEFAULT_CR_THRESHOLD, content_hash
from .evaluation import DEFAULT_EPSILON
from .generation.core import GENERATOR_KINDS, GeneratorSpec
from .generation.seq2seq import Seq2SeqConfig
from .prompting.builders import PromptSpec

CONFIG_VERSION = 1
# keys that locate outputs rather than define them; kept out of the hash
_UNHASHED = ("out_dir",)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataConfig:
    """Either an annotation file or a synthetic corpus recipe."""

    annotations: str | None = None
    synthetic_items: int | None = None
    synthetic_seed: int = 0
    min_annotations: int = 10
    non_canonical: bool = False

    def __post_init__(self):
        if (self.annotations is None) == (self.synthetic_items is None):
            raise ConfigError("data needs exactly one of 'annotations' or 'synthetic_items'")


@dataclass(frozen=True)
class PipelineEntry:
    name: str
    prompt: dict | None = None
    aggregation: str | None = None
    generator: dict | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    version: int
    name: str
    data: DataConfig
    pipelines: tuple[PipelineEntry, ...]
    cr_threshold: int = DEFAULT_CR_THRESHOLD
    split_seed: int = 0
    runs: int = 1
    seed: int = 0
    generator: dict = field(default_factory=lambda: {"kind": "mock"})
    classifier: dict = field(default_factory=dict)
    seq2seq: dict = field(default_factory=dict)
    transfer: dict = field(default_factory=dict)
    mock_fixtures: str | None = None
    kl_epsilon: float = DEFAULT_EPSILON
    kl_direction: str = "human||generated"
    strict_unpredicted: bool = False
    max_workers: int = 1
    out_dir: str | None = None
    base_dir: str = "."

    def __post_init__(self):
        if self.version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {self.version!r} (expected {CONFIG_VERSION})")
        if self.runs < 1:
            raise ConfigError("runs must be at least 1")
        if not self.pipelines:
            raise ConfigError("config lists no pipelines")
        for p in self.pipelines:
            if p.name not in PIPELINES:
                raise ConfigError(f"unknown pipeline {p.name!r}; expected one of {PIPELINES}")
        if self.kl_direction not in ("human||generated", "generated||human"):
            raise ConfigError(f"unknown kl_direction {self.kl_direction!r}")
        try:
            self.classifier_config()
            self.transfer_config()
            self.generator_spec()
            for p in self.pipelines:
                self.pipeline_spec(p)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    # -- derived objects

    def classifier_config(self, seed: int | None = None) -> ClassifierConfig:
        cfg = ClassifierConfig(**self.classifier)
        return replace(cfg, seed=seed) if seed is not None else cfg

    def seq2seq_config(self, seed: int | None = None) -> Seq2SeqConfig:
        cfg = Seq2SeqConfig(**self.seq2seq)
        return replace(cfg, seed=seed) if seed is not None else cfg

    def transfer_config(self, seed: int | None = None) -> TransferConfig:
        t = TransferConfig(Seq2SeqConfig(**self.transfer.get("stage1", {})),
                           Seq2SeqConfig(**self.transfer.get("stage2", {})))
        return t.with_seed(seed) if seed is not None else t

    def generator_spec(self, entry: PipelineEntry | None = None) -> GeneratorSpec:
        d = dict(self.generator)
        if entry is not None and entry.generator:
            d.update(entry.generator)
        if entry is not None and entry.name == "cee_t" and "kind" not in (entry.generator or {}):
            d["kind"] = "mock" if d.get("kind") == "mock" else "local_seq2seq"
        return GeneratorSpec(**d)

    def pipeline_spec(self, entry: PipelineEntry) -> PipelineSpec:
        gen = None
        if entry.name in ("cee_t", "cee_chat", "ee_chat", "baseline1", "baseline2"):
            gen = self.generator_spec(entry)
        prompt = PromptSpec(**entry.prompt) if entry.prompt else None
        agg = entry.aggregation or ("majority_vote" if entry.name in ("ee_chat", "baseline2") else "none")
        try:
            return PipelineSpec(entry.name, gen, prompt, agg)
        except PipelineError as exc:
            raise ConfigError(str(exc)) from exc

    def seeds(self) -> list[int]:
        return [self.seed + r for r in range(self.runs)]

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    # -- serialization

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            if f.name == "base_dir":
                continue
            v = getattr(self, f.name)
            if f.name == "data":
                v = {k.name: getattr(v, k.name) for k in fields(v)}
            elif f.name == "pipelines":
                v = [{k: val for k, val in vars(p).items() if val is not None} for p in v]
            d[f.name] = copy.deepcopy(v)
        return d

    def config_hash(self) -> str:
        d = {k: v for k, v in self.to_dict().items() if k not in _UNHASHED}
        return content_hash(d)[:16]

    @classmethod
    def from_dict(cls, d: dict, base_dir: str | Path = ".") -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        d = copy.deepcopy(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for required in ("version", "name", "data", "pipelines"):
            if required not in d:
                raise ConfigError(f"config is missing {required!r}")
        try:
            d["data"] = DataConfig(**d["data"])
            d["pipelines"] = tuple(PipelineEntry(**p) if isinstance(p, dict) else PipelineEntry(str(p))
                                   for p in d["pipelines"])
            if "kind" in d.get("generator", {}) and d["generator"]["kind"] not in GENERATOR_KINDS:
                raise ConfigError(f"generator kind must be one of {GENERATOR_KINDS}")
            return cls(**d, base_dir=str(base_dir))
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def with_overrides(self, *, runs: int | None = None, seed: int | None = None, backend: str | None = None,
                       strict_unpredicted: bool | None = None, out_dir: str | None = None) -> "ExperimentConfig":
        """Apply command-line overrides.

        ``backend`` replaces the generator kind: ``mock`` applies to every
        generative pipeline, ``llm_service`` to the chat pipelines and
        ``local_seq2seq`` to cee_t.
        """
        d = self.to_dict()
        if runs is not None:
            d["runs"] = runs
        if seed is not None:
            d["seed"] = seed
        if strict_unpredicted is not None:
            d["strict_unpredicted"] = strict_unpredicted
        if out_dir is not None:
            d["out_dir"] = out_dir
        if backend is not None:
            if backend not in GENERATOR_KINDS:
                raise ConfigError(f"backend must be one of {GENERATOR_KINDS}")
            pipes = []
            for p in d["pipelines"]:
                p = dict(p)
                gen = dict(p.get("generator") or {})
                if p["name"] == "cee_t":
                    gen["kind"] = "mock" if backend == "mock" else "local_seq2seq"
                    p["generator"] = gen
                elif p.get("generator"):
                    gen.pop("kind", None)
                    p["generator"] = gen or None
                pipes.append({k: v for k, v in p.items() if v is not None})
            d["pipelines"] = pipes
            if backend != "local_seq2seq":
                d["generator"] = {**d["generator"], "kind": backend}
        return ExperimentConfig.from_dict(d, self.base_dir)


def load_config(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    try:
        d = json.loads(text) if p.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {p}: {exc}") from exc
    return ExperimentConfig.from_dict(d, p.parent)
