"""End-to-end experiment runner behind ``emoxplain run``.

ingest -> clear-agreement filter -> split -> (generate, cached) ->
train x runs -> evaluate -> aggregate -> reports. Everything written
carries the config hash.
"""

from __future__ import annotations

import json
import logging
import re
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from filelock import FileLock, Timeout

from .classification.classifier import train_classifier
from .classification.pipelines import CLASSIFIER_CORPUS, PipelineResult, generation_requests, run_pipeline
from .classification.transfer import TransferSchedule, train_plain_label_model, train_with_intermediate_task
from .config import ConfigError, ExperimentConfig
from .corpus import (
    CorpusSplit,
    NewsItem,
    build_cee,
    build_ee,
    build_headline_corpus,
    filter_clear_agreement,
    ingest_annotations,
    items_hash,
    join_explanations,
    split_corpus,
    write_annotations,
)
from .evaluation import (
    EvalReport,
    aggregate_runs,
    average_kl,
    confusion_csv,
    evaluate_outputs,
    summary_table,
    write_prediction_dump,
)
from .generation.backends import ChatCompletionBackend, MockBackend
from .generation.core import GenerationCache, GeneratorSpec, records_as_items
from .generation.generator import Generator
from .prompting.builders import FewShotExample, render_line
from .prompting.templates import load_template, template_manifest
from .synthetic import make_corpus

log = logging.getLogger(__name__)

LOCK_NAME = ".emoxplain.lock"


class DataError(ValueError):
    """Input data cannot support the requested experiment."""


class ExperimentBusyError(RuntimeError):
    pass


@dataclass
class ExperimentResult:
    config_hash: str
    out_dir: Path
    reports: list[EvalReport]
    split: CorpusSplit
    per_seed: dict[str, dict[int, PipelineResult]] = field(default_factory=dict)

    def report(self, pipeline: str, variant: str | None = None) -> EvalReport:
        for r in self.reports:
            if r.pipeline == pipeline and (variant is None or r.variant == variant):
                return r
        raise KeyError(pipeline)


def load_items(cfg: ExperimentConfig) -> list[NewsItem]:
    d = cfg.data
    if d.synthetic_items is not None:
        return make_corpus(d.synthetic_items, d.synthetic_seed)
    return ingest_annotations(cfg.resolve(d.annotations), min_annotations=d.min_annotations,
                              non_canonical=d.non_canonical)


# ---------------------------------------------------------------- mock echo backend

_FREETEXT_MARK = load_template("zero_shot").split("{{headline}}")[0].split("\n")[-1]
_HEADLINES_MARK = load_template("baseline1").split("{{headlines}}")[0].split("{{examples}}")[-1].strip()
_NUMBERED = re.compile(r"^\s*\d+\.\s(.*)$")


def echo_backend(items: Sequence[NewsItem]) -> MockBackend:
    """Mock LLM that answers from the human annotations of the prompted headline.

    Chat prompts get the item's ten explanations in ``text; emotion`` form,
    batch top-2 prompts get the human top-2 tuples, and a bare headline (the
    cee_t path) gets the concatenated explanations. Unknown prompts fail.
    """
    by_headline = {it.headline: it for it in items}

    def respond(prompt: str) -> str:
        if prompt in by_headline:
            return join_explanations(by_headline[prompt].explanations)
        if _HEADLINES_MARK in prompt:
            tail = prompt.rsplit(_HEADLINES_MARK, 1)[1]
            rows = []
            for line in tail.splitlines():
                m = _NUMBERED.match(line)
                if m and m.group(1) in by_headline:
                    a, b = FewShotExample.from_item(by_headline[m.group(1)]).top2()
                    rows.append(f"({a.value}, {b.value})")
            return "\n".join(rows)
        if _FREETEXT_MARK in prompt:
            headline = prompt.rsplit(_FREETEXT_MARK, 1)[1]
            it = by_headline.get(headline)
            if it is not None:
                return "\n".join(render_line(a.explanation, a.emotion) for a in it.annotations)
        raise KeyError("echo backend does not recognise this prompt")

    return MockBackend(responder=respond)


# ---------------------------------------------------------------- runner


def _classifier_corpus(name: str, items: Sequence[NewsItem]):
    return {"headline": build_headline_corpus, "cee": build_cee, "ee": build_ee}[name](items)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


class _Generators:
    """One `Generator` per distinct spec, all sharing a cache file."""

    def __init__(self, cfg: ExperimentConfig, cache: GenerationCache, items: Sequence[NewsItem], split: CorpusSplit,
                 backend=None):
        self.cfg, self.cache, self.items, self.split = cfg, cache, items, split
        self.override = backend
        self._gens: dict[GeneratorSpec, Generator] = {}
        self._mock = None
        self._seq2seq = None

    def _mock_backend(self):
        if self._mock is None:
            if self.cfg.mock_fixtures:
                self._mock = MockBackend.load(self.cfg.resolve(self.cfg.mock_fixtures))
            else:
                self._mock = echo_backend(self.items)
        return self._mock

    def _train_seq2seq(self):
        from .generation.seq2seq import train_seq2seq

        if self._seq2seq is None:
            pairs = [(it.headline, ex.text) for it, ex in zip(self.split.train, build_cee(self.split.train))]
            val = [(it.headline, ex.text) for it, ex in zip(self.split.validation, build_cee(self.split.validation))]
            self._seq2seq = train_seq2seq(pairs, self.cfg.seq2seq_config(self.cfg.seed), val_pairs=val,
                                          stage="explanations")
        return self._seq2seq

    def get(self, spec: GeneratorSpec) -> Generator:
        if spec.kind == "local_seq2seq":
            handle = self._train_seq2seq()
            spec = replace(spec, model_id=f"seq2seq-{handle.manifest['final_weights_hash'][:12]}")
            if spec not in self._gens:
                self._gens[spec] = Generator(spec, cache=self.cache, seq2seq=handle)
            return self._gens[spec]
        if spec not in self._gens:
            if self.override is not None:
                backend = self.override
            elif spec.kind == "mock":
                backend = self._mock_backend()
            else:
                backend = ChatCompletionBackend()
            self._gens[spec] = Generator(spec, backend, cache=self.cache)
        return self._gens[spec]

    @property
    def backend_calls(self) -> int:
        return sum(g.backend_calls for g in self._gens.values())


def _out_dir(cfg: ExperimentConfig, out_dir) -> Path:
    out = Path(out_dir or cfg.out_dir or "runs/" + cfg.name)
    out.mkdir(parents=True, exist_ok=True)
    return out


@contextmanager
def _exclusive(out: Path):
    lock = FileLock(str(out / LOCK_NAME))
    try:
        lock.acquire(timeout=0)
    except Timeout as exc:
        raise ExperimentBusyError(f"another process holds {out / LOCK_NAME}") from exc
    try:
        yield
    finally:
        lock.release()


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None, *, backend=None) -> ExperimentResult:
    """Run every configured pipeline ``cfg.runs`` times and write the reports.

    ``backend`` replaces the generator backend for non-seq2seq generators
    (tests pass a prepared `MockBackend`). Only one run may use an output
    directory at a time.
    """
    out = _out_dir(cfg, out_dir)
    with _exclusive(out):
        return _run_locked(cfg, out, backend)


def _run_locked(cfg: ExperimentConfig, out: Path, backend) -> ExperimentResult:
    chash = cfg.config_hash()
    items = load_items(cfg)
    cr = filter_clear_agreement(items, cfg.cr_threshold)
    if len(cr) < 4:
        raise DataError(f"only {len(cr)} items pass the clear-agreement threshold {cfg.cr_threshold}")
    split = split_corpus(cr, cfg.split_seed)
    log.info("config %s: %d items, %d clear-agreement, split %d/%d/%d", chash, len(items), len(cr),
             len(split.train), len(split.validation), len(split.test))

    specs = [(e, cfg.pipeline_spec(e)) for e in cfg.pipelines]
    keys = [f"{s.name}__{s.variant}" for _, s in specs]
    if len(set(keys)) != len(keys):
        raise ConfigError(f"pipeline/variant pairs must be unique, got {keys}")
    gens = _Generators(cfg, GenerationCache(out / "generations.jsonl"), items, split, backend)
    for _, spec in specs:
        if spec.generator is not None:
            gens.get(spec.generator)  # fail on missing credentials before any training
    for sub in ("predictions", "confusion", "generated"):
        (out / sub).mkdir(exist_ok=True)

    _write_json(out / "run_manifest.json", {
        "config": cfg.to_dict(),
        "config_hash": chash,
        "data_hash": items_hash(items),
        "n_items": len(items),
        "n_clear_agreement": len(cr),
        "split": {"seed": split.seed, "stratified": split.stratified, "train": [i.item_id for i in split.train],
                  "validation": [i.item_id for i in split.validation], "test": [i.item_id for i in split.test]},
        "seeds": cfg.seeds(),
        "templates": template_manifest(),
    })

    needed = sorted({CLASSIFIER_CORPUS[s.name] for _, s in specs if s.name in CLASSIFIER_CORPUS})
    corpora = {n: (_classifier_corpus(n, split.train), _classifier_corpus(n, split.validation)) for n in needed}
    runs: dict[str, list[EvalReport]] = {}
    per_seed: dict[str, dict[int, PipelineResult]] = {}
    kl_by_key: dict[str, tuple[float, int]] = {}

    for seed in cfg.seeds():
        classifiers = {n: train_classifier(tr, cfg.classifier_config(seed), validation=va, corpus=n)
                       for n, (tr, va) in corpora.items()}
        transfer = {}
        if any(s.name.startswith("t5_") for _, s in specs):
            tcfg = cfg.transfer_config(seed)
            if any(s.name == "t5_transfer" for _, s in specs):
                transfer["t5_transfer"] = train_with_intermediate_task(TransferSchedule.from_items(split.train), tcfg)
            if any(s.name == "t5_plain" for _, s in specs):
                sched = TransferSchedule.from_items(split.train, intermediate=False)
                transfer["t5_plain"] = train_plain_label_model(sched.stage2, tcfg.stage2)

        for entry, spec in specs:
            key = f"{spec.name}__{spec.variant}"
            generator = gens.get(spec.generator) if spec.generator is not None else None
            result = run_pipeline(spec, split.test, classifier=classifiers.get(CLASSIFIER_CORPUS.get(spec.name)),
                                  generator=generator, train_items=split.train,
                                  transfer_model=transfer.get(spec.name), max_workers=cfg.max_workers)
            per_seed.setdefault(key, {})[seed] = result
            rep = evaluate_outputs(spec.name, result.outputs, seed=seed, strict=cfg.strict_unpredicted,
                                   variant=spec.variant)
            runs.setdefault(key, []).append(rep)
            write_prediction_dump(out / "predictions" / f"{key}__seed{seed}.jsonl", spec.name, result.outputs,
                                  {"config_hash": chash, "seed": seed, "variant": spec.variant,
                                   "test_set_hash": rep.test_set_hash})
            if key not in kl_by_key and spec.name in ("cee_chat", "ee_chat", "baseline2"):
                labels = [list(o.generated_labels) for o in result.outputs]
                if any(labels):
                    kl = average_kl(split.test, labels, cfg.kl_epsilon, cfg.kl_direction)
                    kl_by_key[key] = (kl.mean, kl.n_excluded)
                write_annotations(records_as_items(split.test, result.records),
                                  out / "generated" / f"{key}.jsonl")

    reports = []
    for key, reps in runs.items():
        agg = aggregate_runs(reps)
        agg.config_hash = chash
        if key in kl_by_key:
            agg.kl, agg.kl_excluded = kl_by_key[key]
        reports.append(agg)
        (out / "confusion" / f"{key}.csv").write_text(f"# config_hash={chash}\n" + confusion_csv(agg.confusion),
                                                      encoding="utf-8")
    with open(out / "reports.jsonl", "w", encoding="utf-8") as fh:
        for r in reports:
            fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")
    table = summary_table(reports)
    (out / "summary.txt").write_text(f"config_hash: {chash}\n{table}\n", encoding="utf-8")
    log.info("%d backend call(s), cache hits %d", gens.backend_calls, gens.cache.hits)
    return ExperimentResult(chash, out, reports, split, per_seed)


def generate_only(cfg: ExperimentConfig, out_dir: str | Path | None = None, *,
                  backend=None) -> dict[str, tuple[int, int]]:
    """Fill the generation cache for the configured generative pipelines.

    Returns ``{pipeline__variant: (records, unparsable)}``. Nothing is trained
    except the cee_t seq2seq generator when one is configured.
    """
    out = _out_dir(cfg, out_dir)
    with _exclusive(out):
        items = load_items(cfg)
        split = split_corpus(filter_clear_agreement(items, cfg.cr_threshold), cfg.split_seed)
        gens = _Generators(cfg, GenerationCache(out / "generations.jsonl"), items, split, backend)
        counts = {}
        for entry in cfg.pipelines:
            spec = cfg.pipeline_spec(entry)
            if spec.generator is None:
                continue
            gen = gens.get(spec.generator)
            parse = False if spec.name == "baseline1" else None
            recs = gen.generate_many(generation_requests(spec, split.test, split.train),
                                     max_workers=cfg.max_workers, parse=parse)
            counts[f"{spec.name}__{spec.variant}"] = (len(recs), sum(r.parse_failed for r in recs))
        return counts


__all__ = ["DataError", "ExperimentBusyError", "ExperimentResult", "ConfigError", "echo_backend", "generate_only",
           "load_items", "run_experiment"]
