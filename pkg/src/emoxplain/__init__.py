"""Headline emotion prediction through generated emotion explanations."""

from .labels import EMOTIONS, FRAMES, EmotionLabel, FrameLabel, UnknownLabelError, parse_emotion, parse_frame

__version__ = "0.1.0"

__all__ = ["EMOTIONS", "FRAMES", "EmotionLabel", "FrameLabel", "UnknownLabelError", "parse_emotion", "parse_frame",
           "__version__"]
