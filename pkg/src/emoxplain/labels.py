"""Closed label sets: the eight reader emotions and the nine news frames."""

from __future__ import annotations

import enum
import re


class UnknownLabelError(ValueError):
    """Raised when a token does not name a member of a closed label set."""

    def __init__(self, kind: str, token: str):
        super().__init__(f"unknown {kind} label: {token!r}")
        self.kind = kind
        self.token = token


class EmotionLabel(str, enum.Enum):
    # Definition order is the canonical order used for every tie-break.
    AMUSEMENT = "Amusement"
    AWE = "Awe"
    CONTENTMENT = "Contentment"
    EXCITEMENT = "Excitement"
    FEAR = "Fear"
    SADNESS = "Sadness"
    ANGER = "Anger"
    DISGUST = "Disgust"

    @property
    def index(self) -> int:
        return _EMOTION_INDEX[self]

    def __str__(self) -> str:
        return self.value


class FrameLabel(str, enum.Enum):
    SECOND_AMENDMENT = "2nd Amendment"
    GUN_CONTROL = "Gun Control/Regulation"
    POLITICS = "Politics"
    MENTAL_HEALTH = "Mental Health"
    SCHOOL_SAFETY = "School/Public Space Safety"
    RACE_ETHNICITY = "Race/Ethnicity"
    PUBLIC_OPINION = "Public Opinion"
    SOCIETY_CULTURE = "Society/Culture"
    ECONOMIC = "Economic Consequences"

    def __str__(self) -> str:
        return self.value


EMOTIONS: tuple[EmotionLabel, ...] = tuple(EmotionLabel)
FRAMES: tuple[FrameLabel, ...] = tuple(FrameLabel)
N_EMOTIONS = len(EMOTIONS)

_EMOTION_INDEX = {e: i for i, e in enumerate(EMOTIONS)}
_EMOTION_BY_TOKEN = {e.value.lower(): e for e in EMOTIONS}
_FRAME_BY_TOKEN = {f.value.lower(): f for f in FRAMES}

# Decoration LLMs wrap around a bare label: quotes, markdown emphasis, trailing periods.
_STRIP_CHARS = " \t\r\n\"'`*_.,:!()[]"


def parse_emotion(token: str) -> EmotionLabel:
    """Map a label token to its canonical `EmotionLabel`.

    Matching is case-insensitive after trimming whitespace and surrounding
    decoration. Anything that is not one of the eight names (``"Joy"``,
    ``"fearful"``) raises `UnknownLabelError`; there is no fuzzy matching.
    """
    if isinstance(token, EmotionLabel):
        return token
    key = str(token).strip(_STRIP_CHARS).lower()
    try:
        return _EMOTION_BY_TOKEN[key]
    except KeyError:
        raise UnknownLabelError("emotion", token) from None


def parse_frame(token: str) -> FrameLabel:
    if isinstance(token, FrameLabel):
        return token
    key = re.sub(r"\s+", " ", str(token).strip()).lower()
    try:
        return _FRAME_BY_TOKEN[key]
    except KeyError:
        raise UnknownLabelError("frame", token) from None


def emotion_from_index(i: int) -> EmotionLabel:
    return EMOTIONS[int(i)]
