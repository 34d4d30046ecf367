"""Annotation ingestion and the derived corpora (EE, CEE, clear-agreement subset).

The on-disk input is JSON Lines, one annotation per line::

    {"item_id": "n001", "headline": "...", "frame": "Politics",
     "annotator_id": "w17", "emotion": "Sadness", "intensity": 4,
     "explanation": "...", "modality": "T"}

Items are immutable once built; every collection below is a tuple.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import random
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence

import numpy as np

from . import kernels
from .labels import (
    EMOTIONS,
    N_EMOTIONS,
    EmotionLabel,
    FrameLabel,
    UnknownLabelError,
    parse_emotion,
    parse_frame,
)

log = logging.getLogger(__name__)

CANONICAL_ANNOTATIONS = 10
DEFAULT_CR_THRESHOLD = 5
SPLIT_RATIOS = (0.5, 0.25, 0.25)
RECORD_FIELDS = ("item_id", "headline", "frame", "annotator_id", "emotion", "intensity", "explanation", "modality")
OPTIONAL_FIELDS = ("source",)
MANIFEST_VERSION = 1


class CorpusError(ValueError):
    """Base class for data problems in annotation input."""


class RecordParseError(CorpusError):
    def __init__(self, line_no: int, message: str, field_name: str | None = None):
        where = f"line {line_no}" + (f", field {field_name!r}" if field_name else "")
        super().__init__(f"{where}: {message}")
        self.line_no = line_no
        self.field_name = field_name
        self.message = message


class IntegrityError(CorpusError):
    pass


class IngestError(CorpusError):
    """Collects every malformed record so one run reports them all."""

    def __init__(self, errors: Sequence[CorpusError]):
        self.errors = list(errors)
        lines = "\n".join(f"  {e}" for e in self.errors[:50])
        more = f"\n  ... {len(self.errors) - 50} more" if len(self.errors) > 50 else ""
        super().__init__(f"{len(self.errors)} invalid record(s):\n{lines}{more}")


@dataclass(frozen=True)
class AnnotationRecord:
    emotion: EmotionLabel
    intensity: int | None
    explanation: str
    annotator_id: str
    source: str = "human"

    def __post_init__(self):
        if not isinstance(self.emotion, EmotionLabel):
            raise TypeError("emotion must be an EmotionLabel")
        if self.intensity is None:
            if self.source != "generated":
                raise ValueError("intensity is required for human annotations")
        elif isinstance(self.intensity, bool) or self.intensity not in (1, 2, 3, 4, 5):
            raise ValueError(f"intensity must be an integer in 1..5, got {self.intensity!r}")
        if not self.explanation or not self.explanation.strip():
            raise ValueError("explanation must contain non-whitespace text")


@dataclass(frozen=True)
class NewsItem:
    item_id: str
    headline: str
    frame: FrameLabel
    annotations: tuple[AnnotationRecord, ...]
    modality: str = "T"

    def __post_init__(self):
        if not self.headline or not self.headline.strip():
            raise ValueError(f"item {self.item_id}: empty headline")
        if not isinstance(self.frame, FrameLabel):
            raise TypeError("frame must be a FrameLabel")
        object.__setattr__(self, "annotations", tuple(self.annotations))

    @property
    def emotions(self) -> tuple[EmotionLabel, ...]:
        return tuple(a.emotion for a in self.annotations)

    @property
    def explanations(self) -> tuple[str, ...]:
        return tuple(a.explanation for a in self.annotations)

    def counts(self) -> np.ndarray:
        out = np.zeros(N_EMOTIONS, dtype=np.int64)
        for a in self.annotations:
            out[a.emotion.index] += 1
        return out

    @property
    def distribution(self) -> "EmotionDistribution":
        return emotion_distribution(self)

    @property
    def dominant(self) -> EmotionLabel:
        return derive_dominant(emotion_distribution(self))


@dataclass(frozen=True)
class EmotionDistribution:
    """Probability per emotion, stored in canonical label order."""

    probs: tuple[float, ...]

    def __post_init__(self):
        p = tuple(float(x) for x in self.probs)
        if len(p) != N_EMOTIONS:
            raise ValueError(f"expected {N_EMOTIONS} probabilities, got {len(p)}")
        if any(not np.isfinite(x) or x < 0 for x in p):
            raise ValueError("probabilities must be finite and non-negative")
        if abs(sum(p) - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {sum(p)!r}, not 1")
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_counts(cls, counts) -> "EmotionDistribution":
        c = np.asarray(counts, dtype=np.float64)
        total = c.sum()
        if total <= 0:
            raise ValueError("cannot build a distribution from zero counts")
        return cls(tuple(c / total))

    @classmethod
    def from_mapping(cls, mapping: dict) -> "EmotionDistribution":
        p = [0.0] * N_EMOTIONS
        for k, v in mapping.items():
            p[parse_emotion(k).index] = float(v)
        return cls(tuple(p))

    def __getitem__(self, label: EmotionLabel | str) -> float:
        return self.probs[parse_emotion(label).index]

    def as_array(self) -> np.ndarray:
        return np.array(self.probs)

    def as_dict(self) -> dict[str, float]:
        return {e.value: p for e, p in zip(EMOTIONS, self.probs)}


@dataclass(frozen=True)
class LabeledExample:
    text: str
    label: EmotionLabel
    source_item_id: str
    # Explanation boundaries for CEE text; lets encoders truncate whole explanations.
    segments: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise ValueError("example text must be non-empty")
        if not isinstance(self.label, EmotionLabel):
            raise TypeError("label must be an EmotionLabel")


@dataclass(frozen=True)
class CorpusSplit:
    train: tuple[NewsItem, ...]
    validation: tuple[NewsItem, ...]
    test: tuple[NewsItem, ...]
    seed: int
    ratios: tuple[float, float, float] = SPLIT_RATIOS
    stratified: bool = False

    def ids(self) -> dict[str, list[str]]:
        return {name: [it.item_id for it in part] for name, part in
                (("train", self.train), ("validation", self.validation), ("test", self.test))}


# ---------------------------------------------------------------- ingestion


def _coerce_intensity(raw, line_no):
    if raw is None:
        return None
    if isinstance(raw, bool):
        raise RecordParseError(line_no, f"intensity must be an integer in 1..5, got {raw!r}", "intensity")
    if isinstance(raw, float) and raw.is_integer():
        raw = int(raw)
    if isinstance(raw, str) and raw.strip().isdigit():
        raw = int(raw.strip())
    if not isinstance(raw, int) or not 1 <= raw <= 5:
        raise RecordParseError(line_no, f"intensity must be an integer in 1..5, got {raw!r}", "intensity")
    return raw


def _iter_lines(source) -> Iterator[str]:
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            yield from fh
    elif isinstance(source, io.IOBase) or hasattr(source, "read"):
        yield from source
    else:
        yield from source


def ingest_annotations(source: str | Path | IO[str] | Iterable[str],
                       *, min_annotations: int | None = CANONICAL_ANNOTATIONS,
                       non_canonical: bool = False) -> list[NewsItem]:
    """Parse annotation records and group them into `NewsItem` objects.

    ``source`` is a path, an open text file, or any iterable of JSON lines.
    Items come back in first-appearance order, annotations in file order.
    Malformed lines are collected and raised together as `IngestError`.

    Canonical data has exactly ten annotations per item. Pass
    ``non_canonical=True`` to accept any count of at least ``min_annotations``
    (default 1 in that mode).
    """
    if non_canonical and min_annotations == CANONICAL_ANNOTATIONS:
        min_annotations = 1
    errors: list[CorpusError] = []
    order: list[str] = []
    heads: dict[str, tuple[str, FrameLabel, str]] = {}
    anns: dict[str, list[AnnotationRecord]] = defaultdict(list)
    seen_pairs: set[tuple[str, str]] = set()
    warned_fields: set[str] = set()

    for line_no, raw in enumerate(_iter_lines(source), start=1):
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            errors.append(RecordParseError(line_no, f"invalid JSON ({exc.msg})"))
            continue
        if not isinstance(rec, dict):
            errors.append(RecordParseError(line_no, "record is not an object"))
            continue
        extra = set(rec) - set(RECORD_FIELDS) - set(OPTIONAL_FIELDS)
        for name in sorted(extra - warned_fields):
            log.warning("line %d: ignoring unknown field %r", line_no, name)
            warned_fields.add(name)
        missing = [f for f in RECORD_FIELDS if f not in rec and f != "modality"]
        if missing:
            errors.append(RecordParseError(line_no, "missing field(s) " + ", ".join(missing), missing[0]))
            continue
        try:
            item_id = str(rec["item_id"])
            annotator_id = str(rec["annotator_id"])
            try:
                emotion = parse_emotion(rec["emotion"])
            except UnknownLabelError as exc:
                raise RecordParseError(line_no, str(exc), "emotion") from None
            try:
                frame = parse_frame(rec["frame"])
            except UnknownLabelError as exc:
                raise RecordParseError(line_no, str(exc), "frame") from None
            source_tag = str(rec.get("source", "human"))
            intensity = _coerce_intensity(rec["intensity"], line_no)
            if intensity is None and source_tag != "generated":
                raise RecordParseError(line_no, "intensity is required", "intensity")
            explanation = rec["explanation"]
            if not isinstance(explanation, str) or not explanation.strip():
                raise RecordParseError(line_no, "explanation must be non-empty text", "explanation")
            headline = rec["headline"]
            if not isinstance(headline, str) or not headline.strip():
                raise RecordParseError(line_no, "headline must be non-empty text", "headline")
            modality = str(rec.get("modality", "T"))
            if modality != "T":
                raise RecordParseError(line_no, f"modality {modality!r} is not supported (text only)", "modality")
        except RecordParseError as exc:
            errors.append(exc)
            continue

        key = (item_id, annotator_id)
        if key in seen_pairs:
            errors.append(IntegrityError(f"line {line_no}: duplicate annotation for item {item_id!r} "
                                         f"by annotator {annotator_id!r}"))
            continue
        seen_pairs.add(key)
        if item_id not in heads:
            heads[item_id] = (headline, frame, modality)
            order.append(item_id)
        elif heads[item_id][:2] != (headline, frame):
            errors.append(IntegrityError(f"line {line_no}: item {item_id!r} has conflicting headline or frame"))
            continue
        anns[item_id].append(AnnotationRecord(emotion, intensity, explanation, annotator_id, source_tag))

    items = []
    for item_id in order:
        n = len(anns[item_id])
        if not non_canonical and n != CANONICAL_ANNOTATIONS:
            errors.append(IntegrityError(f"item {item_id!r} has {n} annotations; canonical data needs "
                                         f"{CANONICAL_ANNOTATIONS} (use non_canonical for synthetic data)"))
            continue
        if min_annotations is not None and n < min_annotations:
            errors.append(IntegrityError(f"item {item_id!r} has {n} annotations, fewer than {min_annotations}"))
            continue
        headline, frame, modality = heads[item_id]
        items.append(NewsItem(item_id, headline, frame, tuple(anns[item_id]), modality))
    if errors:
        raise IngestError(errors)
    return items


def annotation_records(items: Iterable[NewsItem]) -> Iterator[dict]:
    """Inverse of ingestion: the flat per-annotation records, in stored order."""
    for it in items:
        for a in it.annotations:
            rec = {
                "item_id": it.item_id,
                "headline": it.headline,
                "frame": it.frame.value,
                "annotator_id": a.annotator_id,
                "emotion": a.emotion.value,
                "intensity": a.intensity,
                "explanation": a.explanation,
                "modality": it.modality,
            }
            if a.source != "human":
                rec["source"] = a.source
            yield rec


def dumps_record(rec: dict) -> str:
    return json.dumps(rec, ensure_ascii=False, separators=(", ", ": "))


def write_annotations(items: Iterable[NewsItem], path_or_fh) -> None:
    lines = [dumps_record(r) + "\n" for r in annotation_records(items)]
    if hasattr(path_or_fh, "write"):
        path_or_fh.writelines(lines)
    else:
        Path(path_or_fh).write_text("".join(lines), encoding="utf-8")


# ---------------------------------------------------------------- labels and distributions


def emotion_distribution(item: NewsItem) -> EmotionDistribution:
    if not item.annotations:
        raise ValueError(f"item {item.item_id} has no annotations")
    return EmotionDistribution.from_counts(item.counts())


def derive_dominant(dist: EmotionDistribution | Sequence[float]) -> EmotionLabel:
    """Most probable emotion; exact ties go to the earlier label in canonical order."""
    probs = dist.probs if isinstance(dist, EmotionDistribution) else tuple(dist)
    if len(probs) != N_EMOTIONS:
        raise ValueError(f"expected {N_EMOTIONS} entries")
    best = 0
    for i in range(1, N_EMOTIONS):
        if probs[i] > probs[best]:
            best = i
    return EMOTIONS[best]


def count_matrix(items: Sequence[NewsItem]) -> np.ndarray:
    """``(n_items, 8)`` emotion counts, computed with the segment-count kernel."""
    labels = np.fromiter((a.emotion.index for it in items for a in it.annotations), dtype=np.int64)
    offsets = np.zeros(len(items) + 1, dtype=np.int64)
    np.cumsum([len(it.annotations) for it in items], out=offsets[1:])
    return kernels.segment_counts(labels, offsets, N_EMOTIONS)


def dominant_labels(items: Sequence[NewsItem]) -> list[EmotionLabel]:
    if not items:
        return []
    idx = kernels.row_argmax(count_matrix(items))
    return [EMOTIONS[i] for i in idx]


def filter_clear_agreement(items: Sequence[NewsItem], threshold: int = DEFAULT_CR_THRESHOLD) -> list[NewsItem]:
    """Items whose dominant emotion was chosen by at least ``threshold`` annotators."""
    if not 1 <= threshold <= 10:
        raise ValueError("threshold must be in 1..10")
    if not items:
        return []
    top = count_matrix(items).max(axis=1)
    return [it for it, m in zip(items, top) if m >= threshold]


def second_dominant_fraction(items: Sequence[NewsItem]) -> float:
    """Share of items whose second most frequent emotion has a count of 2 or more."""
    if not items:
        raise ValueError("no items")
    if any(len(it.annotations) < 2 for it in items):
        raise ValueError("every item needs at least two annotations")
    counts = np.sort(count_matrix(items), axis=1)
    return float(np.mean(counts[:, -2] >= 2))


# ---------------------------------------------------------------- corpora

_SENTENCE_END = re.compile(r"[.!?…]['\")\]]*$")


def normalize_explanation(text: str) -> str:
    """Collapse whitespace and make sure the explanation ends a sentence."""
    t = re.sub(r"\s+", " ", text).strip()
    if t and not _SENTENCE_END.search(t):
        t += "."
    return t


CEE_SEPARATOR = " "


def join_explanations(explanations: Iterable[str]) -> str:
    parts = [normalize_explanation(e) for e in explanations]
    return CEE_SEPARATOR.join(p for p in parts if p)


def build_cee(items: Sequence[NewsItem]) -> list[LabeledExample]:
    out = []
    for it in items:
        if not it.annotations:
            raise ValueError(f"item {it.item_id} has no annotations")
        segs = tuple(normalize_explanation(e) for e in it.explanations)
        out.append(LabeledExample(CEE_SEPARATOR.join(segs), it.dominant, it.item_id, segs))
    return out


def build_ee(items: Sequence[NewsItem]) -> list[LabeledExample]:
    return [LabeledExample(a.explanation, a.emotion, it.item_id) for it in items for a in it.annotations]


def build_headline_corpus(items: Sequence[NewsItem]) -> list[LabeledExample]:
    return [LabeledExample(it.headline, it.dominant, it.item_id) for it in items]


# ---------------------------------------------------------------- splits

_MIN_PER_CLASS_FOR_STRATA = 8


def _split_sizes(n: int, ratios=SPLIT_RATIOS) -> tuple[int, int, int]:
    n_test = int(round(n * ratios[2]))
    n_val = int(round(n * ratios[1]))
    return n - n_val - n_test, n_val, n_test


def split_corpus(items: Sequence[NewsItem], seed: int, *, stratify: bool = True) -> CorpusSplit:
    """Deterministic 0.5/0.25/0.25 split by news item.

    With ``stratify`` (the default) and at least 8 items in every dominant
    class present, each class is shuffled separately and dealt round-robin
    into a single ordering so the three parts keep similar label mixes.
    Part sizes are fixed by rounding the validation and test shares; the
    training part takes the remainder.
    """
    items = list(items)
    if len(items) < 4:
        raise ValueError("need at least 4 items to split")
    ids = [it.item_id for it in items]
    if len(set(ids)) != len(ids):
        raise IntegrityError("duplicate item_id in split input")
    rng = random.Random(seed)
    by_label: dict[EmotionLabel, list[NewsItem]] = defaultdict(list)
    for it, lab in zip(items, dominant_labels(items)):
        by_label[lab].append(it)
    use_strata = stratify and all(len(v) >= _MIN_PER_CLASS_FOR_STRATA for v in by_label.values())
    if use_strata:
        # interleave classes proportionally: sort by within-class rank / class size
        keyed = []
        for lab in EMOTIONS:
            group = sorted(by_label.get(lab, ()), key=lambda it: it.item_id)
            rng.shuffle(group)
            for rank, it in enumerate(group):
                keyed.append(((rank + rng.random()) / len(group), it))
        keyed.sort(key=lambda kv: kv[0])
        ordered = [it for _, it in keyed]
    else:
        ordered = sorted(items, key=lambda it: it.item_id)
        rng.shuffle(ordered)
    n_train, n_val, n_test = _split_sizes(len(ordered))
    # test first so the rarest classes still reach it
    test = ordered[:n_test]
    val = ordered[n_test:n_test + n_val]
    train = ordered[n_test + n_val:]
    return CorpusSplit(tuple(train), tuple(val), tuple(test), seed, SPLIT_RATIOS, use_strata)


def majority_baseline(split: CorpusSplit | Sequence[NewsItem]) -> float:
    test = split.test if isinstance(split, CorpusSplit) else tuple(split)
    if not test:
        raise ValueError("empty test set")
    c = Counter(dominant_labels(test))
    return max(c.values()) / len(test)


# ---------------------------------------------------------------- hashing and manifests


def content_hash(obj) -> str:
    """sha256 over a canonical JSON encoding."""
    blob = json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def examples_hash(examples: Iterable[LabeledExample]) -> str:
    return content_hash([[e.source_item_id, e.text, e.label.value] for e in examples])


def items_hash(items: Iterable[NewsItem]) -> str:
    return content_hash(list(annotation_records(items)))


@dataclass
class CorpusManifest:
    name: str
    n_items: int
    n_examples: int
    cr_threshold: int | None
    separator: str
    seed: int | None
    data_hash: str
    item_ids: list[str] = field(default_factory=list)
    version: int = MANIFEST_VERSION

    def to_dict(self) -> dict:
        return dict(version=self.version, name=self.name, n_items=self.n_items, n_examples=self.n_examples,
                    cr_threshold=self.cr_threshold, separator=self.separator, seed=self.seed,
                    data_hash=self.data_hash, item_ids=self.item_ids)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def read(cls, path: str | Path) -> "CorpusManifest":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        if d.get("version") != MANIFEST_VERSION:
            raise CorpusError(f"unsupported manifest version {d.get('version')!r}")
        return cls(**d)


def write_examples(examples: Sequence[LabeledExample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in examples:
            fh.write(dumps_record({"item_id": e.source_item_id, "text": e.text, "label": e.label.value,
                                   "segments": list(e.segments)}) + "\n")


def read_examples(path: str | Path) -> list[LabeledExample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                out.append(LabeledExample(d["text"], parse_emotion(d["label"]), d["item_id"],
                                          tuple(d.get("segments", ()))))
    return out


def build_corpus_store(items: Sequence[NewsItem], out_dir: str | Path, *,
                       cr_threshold: int = DEFAULT_CR_THRESHOLD, seed: int = 0) -> dict[str, CorpusManifest]:
    """Write EE, CEE and CR-split corpora plus a manifest next to each."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cr = filter_clear_agreement(items, cr_threshold)
    manifests = {}

    ee = build_ee(items)
    write_examples(ee, out / "ee.jsonl")
    manifests["ee"] = CorpusManifest("ee", len(items), len(ee), None, CEE_SEPARATOR, None, examples_hash(ee),
                                     [it.item_id for it in items])
    write_annotations(cr, out / "cr.jsonl")
    manifests["cr"] = CorpusManifest("cr", len(cr), sum(len(it.annotations) for it in cr), cr_threshold,
                                     CEE_SEPARATOR, None, items_hash(cr), [it.item_id for it in cr])
    if len(cr) >= 4:
        split = split_corpus(cr, seed)
        for part_name, part in (("train", split.train), ("validation", split.validation), ("test", split.test)):
            cee = build_cee(part)
            write_examples(cee, out / f"cee_{part_name}.jsonl")
            manifests[f"cee_{part_name}"] = CorpusManifest(
                f"cee_{part_name}", len(part), len(cee), cr_threshold, CEE_SEPARATOR, seed,
                examples_hash(cee), [it.item_id for it in part])
    for name, m in manifests.items():
        m.write(out / f"{name}.manifest.json")
    return manifests
