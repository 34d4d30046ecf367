"""Intermediate-task transfer: explanation generation first, then emotion as text.

Both stages train the same encoder-decoder. Stage 1 maps headlines to
concatenated explanations; stage 2 continues from the stage-1 weights and
maps headlines to the lowercase emotion word. A decoded answer that is not
exactly one of the eight labels counts as wrong.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from ..corpus import LabeledExample, NewsItem, build_cee
from ..generation.seq2seq import (
    Seq2SeqConfig,
    Seq2SeqModelHandle,
    Vocab,
    generate_seq2seq,
    score_targets,
    train_seq2seq,
)
from ..labels import EMOTIONS, EmotionLabel, UnknownLabelError, parse_emotion
from .classifier import Prediction

LABEL_TARGETS = tuple(e.value.lower() for e in EMOTIONS)


@dataclass(frozen=True)
class TransferSchedule:
    """Stage-1 (headline, explanations) pairs and stage-2 (headline, label) pairs.

    An empty ``stage1`` skips intermediate training, which is exactly the
    plain fine-tuning path.
    """

    stage1: tuple[tuple[str, str], ...]
    stage2: tuple[tuple[str, EmotionLabel], ...]

    def __post_init__(self):
        object.__setattr__(self, "stage1", tuple((str(h), str(t)) for h, t in self.stage1))
        object.__setattr__(self, "stage2", tuple((str(h), parse_emotion(e)) for h, e in self.stage2))
        if not self.stage2:
            raise ValueError("stage 2 needs headline -> emotion pairs")

    @classmethod
    def from_items(cls, train_items: Sequence[NewsItem], *, intermediate: bool = True) -> "TransferSchedule":
        cee = build_cee(train_items)
        stage1 = tuple((it.headline, ex.text) for it, ex in zip(train_items, cee)) if intermediate else ()
        return cls(stage1, tuple((it.headline, it.dominant) for it in train_items))

    def stage2_pairs(self) -> list[tuple[str, str]]:
        return [(h, e.value.lower()) for h, e in self.stage2]

    def vocab(self, cfg: Seq2SeqConfig) -> Vocab:
        texts = [s for s, _ in self.stage1] + [t for _, t in self.stage1] + [h for h, _ in self.stage2]
        return Vocab.build(texts, cfg.vocab_min_freq, cfg.vocab_max_size)


@dataclass(frozen=True)
class TransferConfig:
    stage1: Seq2SeqConfig = Seq2SeqConfig()
    stage2: Seq2SeqConfig = Seq2SeqConfig()

    def with_seed(self, seed: int) -> "TransferConfig":
        return TransferConfig(replace(self.stage1, seed=seed), replace(self.stage2, seed=seed))


@dataclass
class TransferClassifier:
    handle: Seq2SeqModelHandle
    stage1: Seq2SeqModelHandle | None = None

    @property
    def manifest(self) -> dict:
        return self.handle.manifest

    def decode_label(self, headline: str) -> tuple[str, EmotionLabel | None]:
        raw = generate_seq2seq(self.handle, headline, max_len=4)
        try:
            return raw, parse_emotion(raw)
        except UnknownLabelError:
            return raw, None

    def label_scores(self, headline: str) -> np.ndarray:
        logp = score_targets(self.handle, headline, LABEL_TARGETS)
        p = np.exp(logp - logp.max())
        return p / p.sum()

    def predict(self, headline: str) -> tuple[EmotionLabel | None, Prediction, str]:
        """(decoded label or None, likelihood-ranked prediction, raw decoded text)."""
        raw, label = self.decode_label(headline)
        return label, Prediction.from_scores(self.label_scores(headline)), raw


def train_with_intermediate_task(schedule: TransferSchedule,
                                 config: TransferConfig | None = None) -> TransferClassifier:
    cfg = config or TransferConfig()
    vocab = schedule.vocab(cfg.stage2)
    stage1_handle = None
    if schedule.stage1:
        stage1_handle = train_seq2seq(schedule.stage1, cfg.stage1, vocab=vocab, stage="intermediate")
    handle = train_seq2seq(schedule.stage2_pairs(), cfg.stage2, vocab=vocab, init_from=stage1_handle,
                           stage="emotion")
    handle.manifest["schedule"] = {"stage1_pairs": len(schedule.stage1), "stage2_pairs": len(schedule.stage2)}
    return TransferClassifier(handle, stage1_handle)


def train_plain_label_model(stage2: Sequence[tuple[str, EmotionLabel]],
                            config: Seq2SeqConfig | None = None) -> TransferClassifier:
    """Direct headline -> emotion fine-tune with no intermediate stage."""
    cfg = config or TransferConfig().stage2
    pairs = [(h, parse_emotion(e).value.lower()) for h, e in stage2]
    vocab = Vocab.build([h for h, _ in pairs], cfg.vocab_min_freq, cfg.vocab_max_size)
    return TransferClassifier(train_seq2seq(pairs, cfg, vocab=vocab, stage="emotion"))


def transfer_examples(items: Sequence[NewsItem]) -> list[LabeledExample]:
    return [LabeledExample(it.headline, it.dominant, it.item_id) for it in items]
