from __future__ import annotations

import random
from typing import Sequence

from ..corpus import NewsItem
from ..labels import FRAMES
from .builders import FewShotExample, PromptSpec


class MissingFrameError(ValueError):
    def __init__(self, frame):
        super().__init__(f"training items contain no headline with frame {frame.value!r}")
        self.frame = frame


def _stable(items: Sequence[NewsItem]) -> list[NewsItem]:
    return sorted(items, key=lambda it: it.item_id)


def sample_few_shot_frame_aware(train_items: Sequence[NewsItem], seed: int,
                                max_lines: int | None = None) -> list[FewShotExample]:
    """One uniformly drawn training headline per frame, in canonical frame order."""
    rng = random.Random(seed)
    pool = _stable(train_items)
    out = []
    for frame in FRAMES:
        candidates = [it for it in pool if it.frame is frame]
        if not candidates:
            raise MissingFrameError(frame)
        out.append(FewShotExample.from_item(rng.choice(candidates), max_lines))
    return out


def sample_few_shot_random(train_items: Sequence[NewsItem], k: int, seed: int,
                           max_lines: int | None = None) -> list[FewShotExample]:
    if not 1 <= k <= len(train_items):
        raise ValueError(f"cannot draw {k} exemplars from {len(train_items)} training items")
    rng = random.Random(seed)
    return [FewShotExample.from_item(it, max_lines) for it in rng.sample(_stable(train_items), k)]


def sample_for_spec(spec: PromptSpec, train_items: Sequence[NewsItem]) -> list[FewShotExample]:
    if spec.mode == "few_shot_frames":
        return sample_few_shot_frame_aware(train_items, spec.seed, spec.lines_per_example)
    if spec.mode == "few_shot_random":
        return sample_few_shot_random(train_items, spec.shots, spec.seed, spec.lines_per_example)
    return []
