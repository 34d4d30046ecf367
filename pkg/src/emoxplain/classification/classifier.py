"""Text -> emotion classifiers.

The default ``"bow"`` backend is a hashed unigram+bigram softmax regression
trained by the SGD kernel in :mod:`emoxplain.kernels`. It is small, exact
to reproduce, and separates the synthetic corpora perfectly. The
``"transformers"`` backend fine-tunes a pretrained encoder (RoBERTa-style)
and is what the full-size experiments use; see :mod:`.hf`.
"""

from __future__ import annotations

import json
import logging
import re
import zlib
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .. import _accel, kernels
from ..corpus import EmotionDistribution, LabeledExample, examples_hash
from ..labels import EMOTIONS, N_EMOTIONS, EmotionLabel

log = logging.getLogger(__name__)

CLASSIFIER_BACKENDS = ("bow", "transformers")


class DegenerateCorpusError(ValueError):
    pass


@dataclass(frozen=True)
class ClassifierConfig:
    backend: str = "bow"
    seed: int = 0
    epochs: int = 30
    batch_size: int = 16
    lr: float = 1.0
    l2: float = 1e-5
    n_features: int = 2 ** 17
    ngram: int = 2
    init_scale: float = 0.01
    max_input_tokens: int = 512
    # transformers backend only
    model_name: str = "roberta-base"
    hf_lr: float = 2e-5
    hf_epochs: int = 4

    def __post_init__(self):
        if self.backend not in CLASSIFIER_BACKENDS:
            raise ValueError(f"classifier backend must be one of {CLASSIFIER_BACKENDS}")
        for name in ("epochs", "batch_size", "n_features", "ngram", "max_input_tokens", "hf_epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"classifier {name} must be positive")
        if self.lr <= 0 or self.l2 < 0:
            raise ValueError("classifier lr must be positive and l2 non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> "ClassifierConfig":
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass(frozen=True)
class Prediction:
    scores: EmotionDistribution
    top1: EmotionLabel
    top2: tuple[EmotionLabel, EmotionLabel]

    @classmethod
    def from_scores(cls, scores) -> "Prediction":
        arr = np.asarray(scores, dtype=np.float64)
        arr = arr / arr.sum()
        (a, b), = kernels.row_top2(arr[None, :])
        return cls(EmotionDistribution(tuple(arr)), EMOTIONS[a], (EMOTIONS[a], EMOTIONS[b]))

    def to_json(self) -> dict:
        return {"top1": self.top1.value, "top2": [e.value for e in self.top2], "scores": list(self.scores.probs)}


_WORD = re.compile(r"[a-z0-9]+(?:'[a-z]+)?")


def words(text: str) -> list[str]:
    return _WORD.findall(text.lower())


def truncate_example_text(example: LabeledExample | str, max_tokens: int) -> str:
    """Drop whole trailing explanations until the text fits ``max_tokens`` words.

    Plain text (no segment boundaries) is cut at the word limit.
    """
    if isinstance(example, str):
        text, segments = example, ()
    else:
        text, segments = example.text, example.segments
    if len(words(text)) <= max_tokens:
        return text
    if segments:
        kept, used = [], 0
        for seg in segments:
            n = len(words(seg))
            if used + n > max_tokens:
                break
            kept.append(seg)
            used += n
        if kept:
            return " ".join(kept)
        text = segments[0]
    return " ".join(words(text)[:max_tokens])


def _feature_ids(text: str, n_features: int, ngram: int) -> dict[int, float]:
    toks = words(text)
    grams = list(toks)
    for n in range(2, ngram + 1):
        grams += [" ".join(toks[i:i + n]) for i in range(len(toks) - n + 1)]
    counts = Counter(zlib.crc32(g.encode("utf-8")) % n_features for g in grams)
    return counts


def featurize(texts: Sequence[str], n_features: int, ngram: int = 2):
    """CSR arrays of L2-normalized hashed n-gram counts.

    Raw counts, not log-scaled: in concatenated explanations the repetition
    of the majority emotion is the signal.
    """
    indptr = [0]
    indices: list[int] = []
    values: list[float] = []
    for text in texts:
        counts = _feature_ids(text, n_features, ngram)
        keys = sorted(counts)
        v = np.array([counts[k] for k in keys], dtype=np.float64)
        norm = np.sqrt((v * v).sum())
        if norm > 0:
            v /= norm
        indices.extend(keys)
        values.extend(v.tolist())
        indptr.append(len(indices))
    return (np.asarray(indptr, dtype=np.int64), np.asarray(indices, dtype=np.int64),
            np.asarray(values, dtype=np.float64))


@dataclass
class ClassifierHandle:
    config: ClassifierConfig
    manifest: dict
    weights: np.ndarray | None = None
    bias: np.ndarray | None = None
    hf_model: object = None
    hf_tokenizer: object = None
    history: list = field(default_factory=list)

    @property
    def corpus(self) -> str | None:
        return self.manifest.get("corpus")

    @property
    def training_item_ids(self) -> set[str]:
        return set(self.manifest.get("item_ids", ()))

    def scores(self, texts: Sequence[str | LabeledExample]) -> np.ndarray:
        """``(n, 8)`` class probabilities; examples with segments truncate at explanation boundaries."""
        if self.config.backend == "transformers":
            from .hf import hf_scores
            return hf_scores(self, texts)
        prepped = [truncate_example_text(t, self.config.max_input_tokens) for t in texts]
        indptr, indices, values = featurize(prepped, self.config.n_features, self.config.ngram)
        logits = kernels.sparse_logits(indptr, indices, values, self.weights, self.bias)
        logits -= logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        return e / e.sum(axis=1, keepdims=True)

    def save(self, directory: str | Path) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        if self.config.backend == "bow":
            np.savez_compressed(d / "weights.npz", W=self.weights, b=self.bias)
        else:
            self.hf_model.save_pretrained(d / "hf")
            self.hf_tokenizer.save_pretrained(d / "hf")
        (d / "manifest.json").write_text(json.dumps(self.manifest, indent=2, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, directory: str | Path) -> "ClassifierHandle":
        d = Path(directory)
        manifest = json.loads((d / "manifest.json").read_text(encoding="utf-8"))
        cfg = ClassifierConfig.from_dict(manifest["config"])
        if cfg.backend == "bow":
            z = np.load(d / "weights.npz")
            return cls(cfg, manifest, z["W"], z["b"])
        from .hf import load_hf
        model, tok = load_hf(d / "hf")
        return cls(cfg, manifest, hf_model=model, hf_tokenizer=tok)


def _check_corpus(examples: Sequence[LabeledExample]) -> None:
    if not examples:
        raise DegenerateCorpusError("empty training corpus")
    if len({e.label for e in examples}) < 2:
        raise DegenerateCorpusError("training corpus has a single label; nothing to discriminate")


def accuracy(handle: ClassifierHandle, examples: Sequence[LabeledExample]) -> float:
    if not examples:
        return float("nan")
    probs = handle.scores(list(examples))
    pred = kernels.row_argmax(probs)
    truth = np.array([e.label.index for e in examples])
    return float(np.mean(pred == truth))


def train_classifier(examples: Sequence[LabeledExample], config: ClassifierConfig | None = None, *,
                     validation: Sequence[LabeledExample] = (), corpus: str | None = None) -> ClassifierHandle:
    """Fit a classifier on training-split examples.

    ``corpus`` names the training corpus (``"headline"``, ``"cee"``, ``"ee"``)
    so pipelines can refuse a mismatched classifier. The manifest records
    the corpus hash and the source item ids for leakage checks.
    """
    cfg = config or ClassifierConfig()
    examples = list(examples)
    _check_corpus(examples)
    manifest = {
        "config": asdict(cfg),
        "corpus": corpus,
        "corpus_hash": examples_hash(examples),
        "n_examples": len(examples),
        "item_ids": sorted({e.source_item_id for e in examples}),
        "seed": cfg.seed,
        "kernel_backend": _accel.backend_name(),
    }
    if cfg.backend == "transformers":
        from .hf import train_hf
        return train_hf(examples, cfg, validation, manifest)

    rng = np.random.default_rng(cfg.seed)
    texts = [truncate_example_text(e, cfg.max_input_tokens) for e in examples]
    indptr, indices, values = featurize(texts, cfg.n_features, cfg.ngram)
    y = np.array([e.label.index for e in examples], dtype=np.int64)
    W = rng.normal(0.0, cfg.init_scale, size=(cfg.n_features, N_EMOTIONS))
    b = np.zeros(N_EMOTIONS)
    handle = ClassifierHandle(cfg, manifest, W, b)
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(examples)).astype(np.int64)
        loss = kernels.sgd_epoch(indptr, indices, values, y, W, b, order, cfg.batch_size, cfg.lr, cfg.l2)
        row = {"epoch": epoch + 1, "train_loss": loss}
        if validation:
            row["val_accuracy"] = accuracy(handle, validation)
        history.append(row)
        log.debug("epoch %d: %s", epoch + 1, row)
    if history:
        log.info("trained %s classifier: final %s", corpus or "text", history[-1])
    handle.history = history
    manifest["history"] = history
    return handle


def predict(handle: ClassifierHandle, text: str | LabeledExample) -> Prediction:
    raw = text.text if isinstance(text, LabeledExample) else text
    if not isinstance(raw, str) or not raw.strip():
        raise ValueError("cannot classify empty text")
    return Prediction.from_scores(handle.scores([text])[0])


def predict_many(handle: ClassifierHandle, texts: Sequence[str | LabeledExample]) -> list[Prediction]:
    if not texts:
        return []
    for t in texts:
        raw = t.text if isinstance(t, LabeledExample) else t
        if not isinstance(raw, str) or not raw.strip():
            raise ValueError("cannot classify empty text")
    return [Prediction.from_scores(row) for row in handle.scores(list(texts))]


def majority_vote(labels: Sequence[EmotionLabel]) -> EmotionLabel:
    """Most frequent label; ties go to the earlier label in canonical order."""
    if not labels:
        raise ValueError("majority vote over an empty list")
    counts = Counter(labels)
    return max(EMOTIONS, key=lambda e: (counts.get(e, 0), -e.index))


def top2_by_frequency(labels: Sequence[EmotionLabel]) -> tuple[EmotionLabel, EmotionLabel]:
    """Two most frequent labels, descending, ties in canonical order.

    With a single distinct label the runner-up is the first remaining label
    in canonical order (all at count zero).
    """
    if not labels:
        raise ValueError("empty label list")
    counts = Counter(labels)
    ranked = sorted(EMOTIONS, key=lambda e: (-counts.get(e, 0), e.index))
    return ranked[0], ranked[1]


def vote_distribution(labels: Sequence[EmotionLabel]) -> EmotionDistribution:
    c = np.zeros(N_EMOTIONS)
    for lab in labels:
        c[lab.index] += 1
    return EmotionDistribution.from_counts(c)
