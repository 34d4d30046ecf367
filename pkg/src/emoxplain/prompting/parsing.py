"""Parsers for generator responses.

Generation responses are one ``explanation; emotion`` pair per line. The
label is whatever follows the *last* semicolon, so explanations may contain
semicolons of their own. Bad lines are rejected individually; only a
response with no usable line at all is a failure.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..labels import EmotionLabel, UnknownLabelError, parse_emotion

_LIST_MARKER = re.compile(r"^\s*(?:\d{1,3}[.)]|[-*•])\s+")


class GenerationParseError(ValueError):
    def __init__(self, message: str, rejected=()):
        super().__init__(message)
        self.rejected = list(rejected)


class Baseline1ParseError(ValueError):
    """Fewer than ``n`` valid tuples; ``recovered`` holds the valid leading tuples."""

    def __init__(self, message: str, recovered, rejected=()):
        super().__init__(message)
        self.recovered = list(recovered)
        self.rejected = list(rejected)


@dataclass(frozen=True)
class GeneratedLine:
    explanation: str
    emotion: EmotionLabel

    def __post_init__(self):
        if not self.explanation or not self.explanation.strip():
            raise ValueError("generated explanation is empty")
        if not isinstance(self.emotion, EmotionLabel):
            raise TypeError("emotion must be an EmotionLabel")


@dataclass(frozen=True)
class RejectedLine:
    line_no: int
    text: str
    reason: str


@dataclass(frozen=True)
class ParsedGeneration:
    lines: tuple[GeneratedLine, ...]
    rejected: tuple[RejectedLine, ...] = ()
    expected: int | None = None

    @property
    def count_mismatch(self) -> bool:
        return self.expected is not None and len(self.lines) != self.expected

    @property
    def labels(self) -> list[EmotionLabel]:
        return [g.emotion for g in self.lines]

    @property
    def explanations(self) -> list[str]:
        return [g.explanation for g in self.lines]


def render_generation(lines) -> str:
    """Canonical text form of generated lines; `parse_generation` inverts it."""
    return "\n".join(f"{g.explanation}; {g.emotion.value.lower()}" for g in lines)


def parse_generation(text: str, expected_lines: int | None = 10) -> ParsedGeneration:
    good: list[GeneratedLine] = []
    bad: list[RejectedLine] = []
    for line_no, raw in enumerate((text or "").splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        body = _LIST_MARKER.sub("", line, count=1)
        if ";" not in body:
            bad.append(RejectedLine(line_no, raw, "no semicolon separator"))
            continue
        explanation, _, token = body.rpartition(";")
        explanation = explanation.strip()
        if not explanation:
            bad.append(RejectedLine(line_no, raw, "empty explanation"))
            continue
        try:
            emotion = parse_emotion(token)
        except UnknownLabelError:
            bad.append(RejectedLine(line_no, raw, f"unknown emotion label {token.strip()!r}"))
            continue
        good.append(GeneratedLine(explanation, emotion))
    if not good:
        raise GenerationParseError("no parsable 'explanation; emotion' lines in response", bad)
    return ParsedGeneration(tuple(good), tuple(bad), expected_lines)


_TUPLE = re.compile(r"\(([^()]*)\)")
_BRACKETS = re.compile(r"^[\[\(\s]+|[\]\)\s,]+$")


def _candidate_tuples(text: str) -> list[str]:
    found = _TUPLE.findall(text)
    if found:
        return found
    out = []
    for raw in text.splitlines():
        line = _LIST_MARKER.sub("", raw.strip(), count=1)
        line = _BRACKETS.sub("", line)
        if "," in line:
            out.append(line)
    return out


def parse_baseline1_response(text: str, n: int) -> list[tuple[EmotionLabel, EmotionLabel]]:
    """Read ``n`` ordered (first, second) emotion tuples.

    Accepts Python-style lists, one tuple per line, numbered or bulleted
    lists. The i-th tuple belongs to the i-th headline, so a tuple with an
    unknown label is not skipped: it stops the valid prefix, and a
    `Baseline1ParseError` carries whatever was recovered before it.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    recovered: list[tuple[EmotionLabel, EmotionLabel]] = []
    rejected: list[tuple[int, str, str]] = []
    for pos, chunk in enumerate(_candidate_tuples(text or "")):
        parts = [p for p in (s.strip() for s in chunk.split(",")) if p]
        if len(parts) != 2:
            rejected.append((pos, chunk, f"expected 2 labels, found {len(parts)}"))
            continue
        try:
            pair = (parse_emotion(parts[0]), parse_emotion(parts[1]))
        except UnknownLabelError as exc:
            rejected.append((pos, chunk, str(exc)))
            continue
        if not rejected:
            recovered.append(pair)
    if rejected or len(recovered) < n:
        prefix = recovered[:n]
        raise Baseline1ParseError(f"recovered {len(prefix)} of {n} tuples", prefix, rejected)
    return recovered[:n]
