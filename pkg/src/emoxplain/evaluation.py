"""Metrics, significance testing and report assembly."""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from . import kernels
from .corpus import EmotionDistribution, NewsItem, content_hash
from .labels import EMOTIONS, N_EMOTIONS, EmotionLabel, parse_emotion

DEFAULT_EPSILON = 1e-6
EXACT_MCNEMAR_BELOW = 25
REPORT_VERSION = 1


class EvaluationError(ValueError):
    pass


def _same_length(a, b) -> None:
    if len(a) != len(b):
        raise EvaluationError(f"length mismatch: {len(a)} truths vs {len(b)} predictions")
    if len(a) == 0:
        raise EvaluationError("nothing to evaluate")


def _indices(labels) -> np.ndarray:
    return np.fromiter((parse_emotion(x).index for x in labels), dtype=np.int64, count=len(labels))


def exact_match_accuracy(truths: Sequence[EmotionLabel], top1s: Sequence[EmotionLabel | None]) -> float:
    """Share of items whose top prediction equals the truth; ``None`` predictions count as wrong."""
    _same_length(truths, top1s)
    return sum(p is not None and parse_emotion(t) is parse_emotion(p) for t, p in zip(truths, top1s)) / len(truths)


def top2_accuracy(truths: Sequence[EmotionLabel], top2s: Sequence[tuple | None]) -> float:
    _same_length(truths, top2s)
    hits = 0
    for t, pair in zip(truths, top2s):
        if pair is not None:
            t = parse_emotion(t)
            hits += any(parse_emotion(p) is t for p in pair)
    return hits / len(truths)


def confusion_matrix(truths: Sequence[EmotionLabel], top1s: Sequence[EmotionLabel]) -> np.ndarray:
    """8x8 counts, rows are true labels and columns predicted labels."""
    if len(truths) != len(top1s):
        raise EvaluationError(f"length mismatch: {len(truths)} truths vs {len(top1s)} predictions")
    if not truths:
        return np.zeros((N_EMOTIONS, N_EMOTIONS), dtype=np.int64)
    return kernels.confusion_counts(_indices(truths), _indices(top1s), N_EMOTIONS)


def _as_probs(d) -> np.ndarray:
    if isinstance(d, EmotionDistribution):
        return d.as_array()
    arr = np.asarray(d, dtype=np.float64)
    if arr.shape[-1] != N_EMOTIONS or np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise EvaluationError("not an 8-way probability vector")
    if np.any(np.abs(arr.sum(axis=-1) - 1.0) > 1e-9):
        raise EvaluationError("probabilities must sum to 1")
    return arr


def kl_divergence(p, q, epsilon: float = DEFAULT_EPSILON) -> float:
    """KL(p~ || q~) in nats, where x~ = (x + epsilon) / sum(x + epsilon).

    Both arguments are smoothed the same way, so a zero in ``q`` where
    ``p`` has mass gives a large but finite value.
    """
    if not epsilon > 0:
        raise EvaluationError("epsilon must be positive")
    return float(kernels.smoothed_kl_rows(_as_probs(p), _as_probs(q), epsilon)[0])


@dataclass(frozen=True)
class KLSummary:
    mean: float
    n_items: int
    n_excluded: int
    direction: str
    epsilon: float
    per_item: tuple[float, ...] = ()


def average_kl(items: Sequence[NewsItem], generated_label_lists: Sequence[Sequence[EmotionLabel]],
               epsilon: float = DEFAULT_EPSILON, direction: str = "human||generated") -> KLSummary:
    """Mean KL between each item's human distribution and its generated-label distribution.

    Items with no generated labels are excluded and counted. ``direction``
    is ``"human||generated"`` (default) or ``"generated||human"``.
    """
    if len(items) != len(generated_label_lists):
        raise EvaluationError("one generated label list per item is required")
    if direction not in ("human||generated", "generated||human"):
        raise EvaluationError(f"unknown KL direction {direction!r}")
    human, generated = [], []
    excluded = 0
    for it, labels in zip(items, generated_label_lists):
        if not labels:
            excluded += 1
            continue
        human.append(it.distribution.as_array())
        c = np.zeros(N_EMOTIONS)
        for lab in labels:
            c[parse_emotion(lab).index] += 1
        generated.append(c / c.sum())
    if not human:
        raise EvaluationError("no item has generated labels")
    P, Q = np.array(human), np.array(generated)
    if direction == "generated||human":
        P, Q = Q, P
    per = kernels.smoothed_kl_rows(P, Q, epsilon)
    return KLSummary(float(per.mean()), len(human), excluded, direction, epsilon, tuple(float(x) for x in per))


# ---------------------------------------------------------------- McNemar


@dataclass(frozen=True)
class PairedOutcomes:
    """Per-item correctness of two models on the same items and truths."""

    a_correct: tuple[bool, ...]
    b_correct: tuple[bool, ...]
    item_ids: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.a_correct) != len(self.b_correct):
            raise EvaluationError("paired outcomes must cover the same items")

    @property
    def b(self) -> int:
        return sum(a and not b for a, b in zip(self.a_correct, self.b_correct))

    @property
    def c(self) -> int:
        return sum(b and not a for a, b in zip(self.a_correct, self.b_correct))


@dataclass(frozen=True)
class McNemarResult:
    b: int
    c: int
    p_value: float
    method: str
    statistic: float | None = None
    degenerate: bool = False


def mcnemar_from_counts(b: int, c: int) -> McNemarResult:
    """Two-sided McNemar test on discordant counts.

    ``b`` counts items only model A got right, ``c`` items only model B got
    right. Below 25 discordant pairs the exact binomial test is used,
    otherwise the continuity-corrected chi-square with one degree of freedom.
    """
    if b < 0 or c < 0:
        raise EvaluationError("discordant counts must be non-negative")
    n = b + c
    if n == 0:
        return McNemarResult(0, 0, 1.0, "none", None, True)
    if n < EXACT_MCNEMAR_BELOW:
        k = min(b, c)
        tail = sum(math.comb(n, i) for i in range(k + 1)) / 2 ** n
        return McNemarResult(b, c, min(1.0, 2.0 * tail), "exact")
    stat = (abs(b - c) - 1) ** 2 / n
    return McNemarResult(b, c, float(stats.chi2.sf(stat, 1)), "chi2_cc", stat)


def mcnemar_test(outcomes: PairedOutcomes) -> McNemarResult:
    return mcnemar_from_counts(outcomes.b, outcomes.c)


# ---------------------------------------------------------------- reports


@dataclass
class EvalReport:
    pipeline: str
    n_items: int
    exact_match: float
    top2: float
    confusion: list[list[int]]
    test_set_hash: str
    variant: str = "-"
    seeds: list[int] = field(default_factory=list)
    n_excluded: int = 0
    excluded_ids: list[str] = field(default_factory=list)
    n_invalid: int = 0
    strict: bool = False
    runs: int = 1
    exact_match_std: float = 0.0
    top2_std: float = 0.0
    per_run: list[dict] = field(default_factory=list)
    config_hash: str | None = None
    kl: float | None = None
    kl_excluded: int = 0

    def __post_init__(self):
        if self.exact_match > self.top2 + 1e-12:
            raise EvaluationError(f"{self.pipeline}: exact match {self.exact_match} exceeds top-2 {self.top2}")

    def to_json(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "pipeline": self.pipeline,
            "variant": self.variant,
            "n_items": self.n_items,
            "exact_match": self.exact_match,
            "exact_match_std": self.exact_match_std,
            "top2": self.top2,
            "top2_std": self.top2_std,
            "runs": self.runs,
            "seeds": list(self.seeds),
            "n_excluded": self.n_excluded,
            "excluded_ids": list(self.excluded_ids),
            "n_invalid": self.n_invalid,
            "strict": self.strict,
            "test_set_hash": self.test_set_hash,
            "config_hash": self.config_hash,
            "confusion": self.confusion,
            "per_run": self.per_run,
            "kl": self.kl,
            "kl_excluded": self.kl_excluded,
        }

    @classmethod
    def from_json(cls, d: dict) -> "EvalReport":
        return cls(d["pipeline"], d["n_items"], d["exact_match"], d["top2"], d["confusion"], d["test_set_hash"],
                   d.get("variant", "-"), d.get("seeds", []), d.get("n_excluded", 0), d.get("excluded_ids", []),
                   d.get("n_invalid", 0), d.get("strict", False), d.get("runs", 1), d.get("exact_match_std", 0.0),
                   d.get("top2_std", 0.0), d.get("per_run", []), d.get("config_hash"), d.get("kl"),
                   d.get("kl_excluded", 0))


def test_set_hash(item_ids: Iterable[str], truths: Iterable[EmotionLabel]) -> str:
    return content_hash(sorted((i, parse_emotion(t).value) for i, t in zip(item_ids, truths)))


def evaluate_outputs(pipeline: str, outputs, *, seed: int | None = None, strict: bool = False,
                     variant: str = "-") -> EvalReport:
    """Score pipeline outputs.

    Unpredicted items (generation failures) are left out of the accuracy
    denominators and listed in ``excluded_ids``; with ``strict`` they stay in
    and count as wrong. The test-set hash always covers every item.
    """
    all_ids = [o.item_id for o in outputs]
    all_truths = [o.truth for o in outputs]
    kept = [o for o in outputs if o.predicted or strict]
    excluded = [o.item_id for o in outputs if not o.predicted]
    if not kept:
        raise EvaluationError(f"{pipeline}: every item is unpredicted")
    truths = [o.truth for o in kept]
    exact = exact_match_accuracy(truths, [o.top1 for o in kept])
    top2 = top2_accuracy(truths, [o.top2 for o in kept])
    valid = [o for o in kept if o.top1 is not None]
    conf = confusion_matrix([o.truth for o in valid], [o.top1 for o in valid])
    return EvalReport(pipeline, len(kept), exact, top2, conf.tolist(), test_set_hash(all_ids, all_truths), variant,
                      [seed] if seed is not None else [], len(excluded), excluded, len(kept) - len(valid), strict)


def aggregate_runs(reports: Sequence[EvalReport]) -> EvalReport:
    """Mean and sample standard deviation of the metrics over runs.

    Confusion matrices are summed over runs.
    """
    if not reports:
        raise EvaluationError("no reports to aggregate")
    first = reports[0]
    for r in reports[1:]:
        if r.pipeline != first.pipeline or r.variant != first.variant:
            raise EvaluationError("reports come from different pipelines")
        if r.test_set_hash != first.test_set_hash:
            raise EvaluationError("reports were computed on different test sets")
    # statistics works in exact fractions, so identical runs give their value and a zero std
    em = [r.exact_match for r in reports]
    t2 = [r.top2 for r in reports]
    spread = statistics.stdev if len(reports) > 1 else (lambda _: 0.0)
    conf = np.sum([np.asarray(r.confusion) for r in reports], axis=0).astype(int).tolist()
    seeds = [s for r in reports for s in r.seeds]
    per_run = [{"seed": (r.seeds[0] if r.seeds else None), "exact_match": r.exact_match, "top2": r.top2,
                "n_items": r.n_items, "n_excluded": r.n_excluded} for r in reports]
    return EvalReport(first.pipeline, first.n_items, statistics.fmean(em), statistics.fmean(t2), conf,
                      first.test_set_hash, first.variant, seeds, max(r.n_excluded for r in reports), first.excluded_ids,
                      max(r.n_invalid for r in reports), first.strict, len(reports), float(spread(em)),
                      float(spread(t2)), per_run, first.config_hash, first.kl, first.kl_excluded)


# ---------------------------------------------------------------- output formats


def confusion_csv(matrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["truth\\predicted"] + [e.value for e in EMOTIONS])
    for e, row in zip(EMOTIONS, matrix):
        w.writerow([e.value] + [int(x) for x in row])
    return buf.getvalue()


def summary_table(reports: Sequence[EvalReport]) -> str:
    head = (f"{'pipeline':<12} {'variant':<16} {'top-2':>12} {'exact':>12} {'avg KL':>7} "
            f"{'n':>5} {'excl':>5} {'runs':>5}")
    lines = [head, "-" * len(head)]
    for r in reports:
        t2 = f"{r.top2:.3f}" + (f"±{r.top2_std:.3f}" if r.runs > 1 else "")
        em = f"{r.exact_match:.3f}" + (f"±{r.exact_match_std:.3f}" if r.runs > 1 else "")
        kl = f"{r.kl:.3f}" if r.kl is not None else "-"
        lines.append(f"{r.pipeline:<12} {r.variant:<16} {t2:>12} {em:>12} {kl:>7} "
                     f"{r.n_items:>5} {r.n_excluded:>5} {r.runs:>5}")
    return "\n".join(lines)


def write_prediction_dump(path: str | Path, pipeline: str, outputs, meta: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if meta:
            fh.write(json.dumps({"meta": meta}, sort_keys=True) + "\n")
        for o in outputs:
            fh.write(json.dumps(o.to_json(pipeline), sort_keys=True) + "\n")


def read_prediction_dump(path: str | Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                if "meta" not in d:
                    rows.append(d)
    return rows


def paired_from_dumps(rows_a: Sequence[dict], rows_b: Sequence[dict]) -> PairedOutcomes:
    """Pair two prediction dumps item by item (exact-match correctness).

    The dumps must cover the same items with the same truths. An
    unpredicted item counts as incorrect for its model.
    """
    a = {r["item_id"]: r for r in rows_a}
    b = {r["item_id"]: r for r in rows_b}
    if set(a) != set(b) or len(a) != len(rows_a) or len(b) != len(rows_b):
        raise EvaluationError("prediction dumps cover different test items")
    ids = sorted(a)
    for i in ids:
        if a[i]["truth"] != b[i]["truth"]:
            raise EvaluationError(f"item {i}: truths differ between dumps")
    ok = lambda r: r.get("top1") is not None and r["top1"] == r["truth"]  # noqa: E731
    return PairedOutcomes(tuple(ok(a[i]) for i in ids), tuple(ok(b[i]) for i in ids), tuple(ids))
