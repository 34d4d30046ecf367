"""The headline -> dominant-emotion pipelines.

=========  =====================================================  ==============
name       what is classified                                     classifier
=========  =====================================================  ==============
headline   the headline text                                      headline
cee        the item's human explanations, concatenated (ceiling)  cee
cee_t      seq2seq-generated explanation text                     cee
cee_chat   LLM-generated explanations, concatenated               cee
ee_chat    each LLM explanation, then a majority vote             ee
baseline2  the LLM's own per-line labels, majority vote           none
baseline1  the LLM's direct top-2 answer                          none
t5_*       decoded label from the seq2seq label model             transfer model
=========  =====================================================  ==============
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

from ..corpus import LabeledExample, NewsItem, join_explanations, normalize_explanation
from ..generation.core import GenerationRecord, GeneratorSpec
from ..labels import EMOTIONS, EmotionLabel
from ..prompting import (
    Baseline1ParseError,
    PromptSpec,
    build_baseline1_prompt,
    build_prompt,
    parse_baseline1_response,
    sample_for_spec,
)
from .classifier import (
    ClassifierHandle,
    Prediction,
    majority_vote,
    predict,
    predict_many,
    top2_by_frequency,
    vote_distribution,
)

log = logging.getLogger(__name__)

PIPELINES = ("headline", "cee", "cee_t", "cee_chat", "ee_chat", "t5_transfer", "t5_plain", "baseline1", "baseline2")
CLASSIFIER_CORPUS = {"headline": "headline", "cee": "cee", "cee_t": "cee", "cee_chat": "cee", "ee_chat": "ee"}
_CHAT = ("cee_chat", "ee_chat", "baseline1", "baseline2")


class PipelineError(ValueError):
    pass


class LeakageError(PipelineError):
    pass


@dataclass(frozen=True)
class PipelineSpec:
    name: str
    generator: GeneratorSpec | None = None
    prompt: PromptSpec | None = None
    aggregation: str = "none"

    def __post_init__(self):
        if self.name not in PIPELINES:
            raise PipelineError(f"unknown pipeline {self.name!r}; expected one of {PIPELINES}")
        if self.aggregation not in ("none", "majority_vote"):
            raise PipelineError("aggregation must be 'none' or 'majority_vote'")
        if self.name in ("ee_chat", "baseline2") and self.aggregation != "majority_vote":
            raise PipelineError(f"{self.name} aggregates per-explanation labels: aggregation must be majority_vote")
        if self.name == "cee_t" and (self.generator is None or self.generator.kind not in ("local_seq2seq", "mock")):
            raise PipelineError("cee_t needs a local_seq2seq generator")
        if self.name in _CHAT:
            if self.generator is None or self.generator.kind == "local_seq2seq":
                raise PipelineError(f"{self.name} needs an llm_service (or mock) generator")
            if self.prompt is None:
                object.__setattr__(self, "prompt", PromptSpec("baseline1" if self.name == "baseline1" else "zero_shot"))
            if self.name == "baseline1" and self.prompt.mode == "zero_shot":
                object.__setattr__(self, "prompt", PromptSpec("baseline1", self.prompt.shots, self.prompt.seed))
            if self.name != "baseline1" and self.prompt.mode == "baseline1":
                raise PipelineError(f"{self.name} cannot use the baseline1 prompt")

    @property
    def variant(self) -> str:
        return self.prompt.mode if self.prompt is not None else "-"


@dataclass(frozen=True)
class ItemOutput:
    item_id: str
    truth: EmotionLabel
    top1: EmotionLabel | None
    top2: tuple[EmotionLabel, EmotionLabel] | None
    scores: tuple[float, ...] | None = None
    status: str = "ok"
    reason: str = ""
    generated_labels: tuple[EmotionLabel, ...] = ()

    @property
    def predicted(self) -> bool:
        return self.status == "ok"

    def to_json(self, pipeline: str) -> dict:
        return {
            "item_id": self.item_id,
            "pipeline": pipeline,
            "truth": self.truth.value,
            "top1": self.top1.value if self.top1 else None,
            "top2": [e.value for e in self.top2] if self.top2 else None,
            "scores": list(self.scores) if self.scores is not None else None,
            "status": self.status,
            "reason": self.reason,
        }


@dataclass
class PipelineResult:
    spec: PipelineSpec
    outputs: list[ItemOutput]
    records: dict[str, GenerationRecord] = field(default_factory=dict)

    @property
    def n_unpredicted(self) -> int:
        return sum(not o.predicted for o in self.outputs)


def _ok(item: NewsItem, pred: Prediction, **kw) -> ItemOutput:
    return ItemOutput(item.item_id, item.dominant, pred.top1, pred.top2, pred.scores.probs, **kw)


def _missing(item: NewsItem, reason: str) -> ItemOutput:
    log.warning("item %s unpredicted: %s", item.item_id, reason)
    return ItemOutput(item.item_id, item.dominant, None, None, None, "unpredicted", reason)


def _decoded_top2(decoded: EmotionLabel | None, ranked: Prediction) -> tuple[EmotionLabel, EmotionLabel]:
    """Top-2 led by the decoded label, runner-up by likelihood, so top-2 always contains top-1."""
    if decoded is None:
        return ranked.top2
    order = sorted(range(len(ranked.scores.probs)), key=lambda i: (-ranked.scores.probs[i], i))
    runner = next(EMOTIONS[i] for i in order if EMOTIONS[i] is not decoded)
    return decoded, runner


def check_no_leakage(handle, test_items: Sequence[NewsItem]) -> None:
    seen = set(getattr(handle, "training_item_ids", ()) or handle.manifest.get("item_ids", ()))
    overlap = seen & {it.item_id for it in test_items}
    if overlap:
        raise LeakageError(f"{len(overlap)} test item(s) appear in the classifier's training corpus, "
                           f"e.g. {sorted(overlap)[:3]}")


def _check_classifier(spec: PipelineSpec, classifier: ClassifierHandle | None, test_items) -> None:
    wanted = CLASSIFIER_CORPUS.get(spec.name)
    if wanted is None:
        return
    if classifier is None:
        raise PipelineError(f"{spec.name} needs a classifier trained on the {wanted} corpus")
    if classifier.corpus not in (None, wanted):
        raise PipelineError(f"{spec.name} needs a {wanted} classifier, got one trained on {classifier.corpus!r}")
    check_no_leakage(classifier, test_items)


def run_pipeline(spec: PipelineSpec, test_items: Sequence[NewsItem], *, classifier: ClassifierHandle | None = None,
                 generator=None, train_items: Sequence[NewsItem] = (), transfer_model=None,
                 max_workers: int = 1) -> PipelineResult:
    """Predict the dominant emotion for every test item. Never trains anything.

    Items whose generation cannot be parsed are returned with status
    ``"unpredicted"`` and a reason, not dropped.
    """
    _check_classifier(spec, classifier, test_items)
    name = spec.name
    if name in ("headline", "cee"):
        if name == "headline":
            texts = [it.headline for it in test_items]
        else:
            texts = [LabeledExample(join_explanations(it.explanations), it.dominant, it.item_id,
                                    tuple(normalize_explanation(e) for e in it.explanations)) for it in test_items]
        preds = predict_many(classifier, texts)
        return PipelineResult(spec, [_ok(it, p) for it, p in zip(test_items, preds)])

    if name in ("t5_transfer", "t5_plain"):
        if transfer_model is None:
            raise PipelineError(f"{name} needs a trained transfer model")
        outputs = []
        for it in test_items:
            decoded, ranked, raw = transfer_model.predict(it.headline)
            # exact match uses the free decode; an off-label decode is wrong, not skipped
            outputs.append(ItemOutput(it.item_id, it.dominant, decoded, _decoded_top2(decoded, ranked),
                                      ranked.scores.probs, "ok",
                                      "" if decoded else f"decoded non-label text {raw!r}"))
        return PipelineResult(spec, outputs)

    if generator is None:
        raise PipelineError(f"{name} needs a generator")

    if name == "baseline1":
        return _run_baseline1(spec, test_items, generator, train_items)

    records = generator.generate_many(generation_requests(spec, test_items, train_items), max_workers=max_workers)
    outputs = []
    by_id = {}
    for it, rec in zip(test_items, records):
        by_id[it.item_id] = rec
        if name == "cee_t":
            text = rec.raw_response.strip()
            outputs.append(_ok(it, predict(classifier, text)) if text else _missing(it, "empty generation"))
            continue
        if rec.parse_failed or not rec.parsed:
            outputs.append(_missing(it, "generation had no parsable lines"))
            continue
        labels = tuple(rec.labels)
        if name == "cee_chat":
            segs = tuple(normalize_explanation(e) for e in rec.explanations)
            ex = LabeledExample(" ".join(segs), it.dominant, it.item_id, segs)
            outputs.append(_ok(it, predict(classifier, ex), generated_labels=labels))
        elif name == "ee_chat":
            votes = [p.top1 for p in predict_many(classifier, rec.explanations)]
            outputs.append(ItemOutput(it.item_id, it.dominant, majority_vote(votes), top2_by_frequency(votes),
                                      vote_distribution(votes).probs, generated_labels=labels))
        else:  # baseline2
            outputs.append(ItemOutput(it.item_id, it.dominant, majority_vote(labels), top2_by_frequency(labels),
                                      vote_distribution(labels).probs, generated_labels=labels))
    return PipelineResult(spec, outputs, by_id)


BASELINE1_BATCH_ID = "baseline1-batch"


def generation_requests(spec: PipelineSpec, test_items: Sequence[NewsItem],
                        train_items: Sequence[NewsItem] = ()) -> list[tuple[str, str]]:
    """The ``(item_id, prompt)`` pairs a generative pipeline sends, in order.

    Exemplars are drawn once per call, so every test headline sees the same
    few-shot block. Baseline 1 sends one batch prompt for all headlines.
    """
    if spec.generator is None:
        return []
    if spec.name == "cee_t":
        return [(it.item_id, it.headline) for it in test_items]
    if spec.name == "baseline1":
        exemplars = sample_for_spec(spec.prompt, train_items) if spec.prompt.mode != "baseline1" else []
        return [(BASELINE1_BATCH_ID, build_baseline1_prompt([it.headline for it in test_items], exemplars))]
    exemplars = sample_for_spec(spec.prompt, train_items)
    return [(it.item_id, build_prompt(spec.prompt, it.headline, exemplars)) for it in test_items]


def _run_baseline1(spec, test_items, generator, train_items) -> PipelineResult:
    (_, prompt), = generation_requests(spec, test_items, train_items)
    rec = generator.generate(prompt, BASELINE1_BATCH_ID, parse=False)
    try:
        pairs = parse_baseline1_response(rec.raw_response, len(test_items))
        reason = ""
    except Baseline1ParseError as exc:
        pairs = exc.recovered
        reason = str(exc)
    outputs = []
    for i, it in enumerate(test_items):
        if i < len(pairs):
            a, b = pairs[i]
            outputs.append(ItemOutput(it.item_id, it.dominant, a, (a, b)))
        else:
            outputs.append(_missing(it, reason or "no tuple for this headline"))
    return PipelineResult(spec, outputs, {BASELINE1_BATCH_ID: rec})
