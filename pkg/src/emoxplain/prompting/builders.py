from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from ..corpus import NewsItem, derive_dominant
from ..labels import EMOTIONS, EmotionLabel, FrameLabel
from .templates import TEMPLATE_VERSION, load_template, render

PROMPT_MODES = ("baseline1", "zero_shot", "few_shot_random", "few_shot_frames")


@dataclass(frozen=True)
class FewShotExample:
    headline: str
    lines: tuple[tuple[str, EmotionLabel], ...]
    frame: FrameLabel
    source_item_id: str = ""

    def __post_init__(self):
        if not self.lines:
            raise ValueError("a few-shot example needs at least one explanation line")
        object.__setattr__(self, "lines", tuple((str(t), e) for t, e in self.lines))

    @classmethod
    def from_item(cls, item: NewsItem, max_lines: int | None = None) -> "FewShotExample":
        anns = item.annotations if max_lines is None else item.annotations[:max_lines]
        return cls(item.headline, tuple((a.explanation, a.emotion) for a in anns), item.frame, item.item_id)

    def top2(self) -> tuple[EmotionLabel, EmotionLabel]:
        counts = [0] * len(EMOTIONS)
        for _, e in self.lines:
            counts[e.index] += 1
        first = derive_dominant([float(c) for c in counts])
        counts[first.index] = -1
        return first, derive_dominant([float(c) for c in counts])


@dataclass(frozen=True)
class PromptSpec:
    mode: str = "zero_shot"
    shots: int = 9
    seed: int = 0
    lines_per_example: int | None = None
    template_version: str = TEMPLATE_VERSION

    def __post_init__(self):
        if self.mode not in PROMPT_MODES:
            raise ValueError(f"mode must be one of {PROMPT_MODES}, got {self.mode!r}")
        if self.mode == "few_shot_frames" and self.shots != 9:
            raise ValueError("frame-aware sampling uses exactly one exemplar per frame (shots=9)")
        if self.shots < 1:
            raise ValueError("shots must be positive")


def _require_headline(headline: str) -> str:
    if not isinstance(headline, str) or not headline.strip():
        raise ValueError("headline must be non-empty text")
    return headline


def render_line(explanation: str, emotion: EmotionLabel) -> str:
    return f"{explanation}; {emotion.value.lower()}"


def build_zero_shot_prompt(headline: str) -> str:
    _require_headline(headline)
    return render(load_template("zero_shot"), instruction=load_template("instruction"), headline=headline)


def build_few_shot_prompt(headline: str, exemplars: Sequence[FewShotExample]) -> str:
    """Zero-shot instruction, numbered exemplar blocks, then the target headline."""
    _require_headline(headline)
    if not exemplars:
        raise ValueError("few-shot prompt needs at least one exemplar")
    block = load_template("few_shot_example")
    blocks = [
        render(block, index=i, headline=ex.headline, lines="\n".join(render_line(t, e) for t, e in ex.lines))
        for i, ex in enumerate(exemplars, start=1)
    ]
    return render(load_template("few_shot"), instruction=load_template("instruction"),
                  n_examples=len(exemplars), examples="\n\n".join(blocks), headline=headline)


def build_baseline1_prompt(headlines: Sequence[str], exemplars: Sequence[FewShotExample] = ()) -> str:
    """Ask for one (most likely, second most likely) tuple per headline.

    Headlines follow the template as a numbered list, one per line. With
    ``exemplars`` an example block (headline plus its human top-2 tuple) is
    inserted before the headline list.
    """
    headlines = list(headlines)
    if not headlines:
        raise ValueError("need at least one headline")
    for h in headlines:
        _require_headline(h)
    listing = "".join(f"\n{i}. {h}" for i, h in enumerate(headlines, start=1))
    examples = ""
    if exemplars:
        rows = []
        for ex in exemplars:
            a, b = ex.top2()
            rows.append(f"headline: {ex.headline}\ntop 2 dominant emotions: ({a.value}, {b.value})")
        examples = render(load_template("baseline1_examples"), n_examples=len(exemplars),
                          examples="\n\n".join(rows)) + "\n"
    return render(load_template("baseline1"), count=len(headlines), examples=examples, headlines=listing)


def build_prompt(spec: PromptSpec, headline: str, exemplars: Sequence[FewShotExample] = ()) -> str:
    if spec.mode == "zero_shot":
        return build_zero_shot_prompt(headline)
    if spec.mode in ("few_shot_random", "few_shot_frames"):
        return build_few_shot_prompt(headline, exemplars)
    return build_baseline1_prompt([headline], exemplars)
