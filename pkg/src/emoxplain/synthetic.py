"""Synthetic annotation corpora for tests, demos and the toy experiment config.

Explanations name the annotator's emotion in plain words, so a bag-of-words
classifier can separate the classes perfectly. That is the point: the toy
runs check plumbing, not modelling.
"""

from __future__ import annotations

import random

from .corpus import AnnotationRecord, NewsItem
from .labels import EMOTIONS, FRAMES, EmotionLabel

_TOPICS = ("school board", "city council", "senate bill", "gun show", "campus rally", "state court",
           "police chief", "town hall", "federal agency", "school district", "church group", "mayor")
_VERBS = ("debates", "rejects", "approves", "questions", "delays", "announces", "reviews", "blocks")
_OBJECTS = ("background checks", "permit rules", "safety plan", "funding request", "new policy",
            "training program", "ban proposal", "victim fund", "age limit", "storage law")
_OPENERS = ("I feel", "Honestly I feel", "This makes me feel", "Reading this I feel", "I mostly feel")


def explanation_for(emotion: EmotionLabel, rng: random.Random) -> str:
    return f"{rng.choice(_OPENERS)} {emotion.value.lower()} about the {rng.choice(_OBJECTS)}"


def make_item(item_id: str, rng: random.Random, *, n_annotations: int = 10,
              dominant: EmotionLabel | None = None, dominant_count: int | None = None,
              frame=None) -> NewsItem:
    dominant = dominant or rng.choice(EMOTIONS)
    if dominant_count is None:
        dominant_count = rng.randint(max(1, n_annotations // 2 + 1), n_annotations)
    emotions = [dominant] * dominant_count
    others = [e for e in EMOTIONS if e is not dominant]
    while len(emotions) < n_annotations:
        emotions.append(rng.choice(others))
    rng.shuffle(emotions)
    anns = tuple(
        AnnotationRecord(e, rng.randint(1, 5), explanation_for(e, rng), f"w{j:02d}")
        for j, e in enumerate(emotions)
    )
    headline = f"{rng.choice(_TOPICS).title()} {rng.choice(_VERBS)} {rng.choice(_OBJECTS)} ({item_id})"
    return NewsItem(item_id, headline, frame or rng.choice(FRAMES), anns)


def make_corpus(n_items: int, seed: int = 0, *, n_annotations: int = 10,
                balanced_frames: bool = True, clear: bool = True) -> list[NewsItem]:
    """``n_items`` synthetic headlines.

    With ``clear`` every item has a strict-majority dominant emotion (at
    least 6 of 10), which keeps the toy pipelines at accuracy 1.0. Frames
    cycle through all nine when ``balanced_frames`` is set.
    """
    rng = random.Random(seed)
    items = []
    for i in range(n_items):
        frame = FRAMES[i % len(FRAMES)] if balanced_frames else None
        count = None if clear else rng.randint(1, n_annotations)
        items.append(make_item(f"s{seed}-{i:04d}", rng, n_annotations=n_annotations,
                               frame=frame, dominant_count=count))
    return items


def make_random_corpus(rng: random.Random, *, max_items: int = 40, max_annotations: int = 12) -> list[NewsItem]:
    """Unstructured corpus (any label mix, varying annotation counts) for property tests."""
    n = rng.randint(4, max_items)
    items = []
    for i in range(n):
        k = rng.randint(2, max_annotations)
        anns = tuple(AnnotationRecord(rng.choice(EMOTIONS), rng.randint(1, 5), f"text {i} {j}", f"a{j}")
                     for j in range(k))
        items.append(NewsItem(f"r{i:03d}", f"headline {i}", rng.choice(FRAMES), anns))
    return items
