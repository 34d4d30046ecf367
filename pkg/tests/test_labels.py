import pytest

from emoxplain.labels import (
    EMOTIONS,
    FRAMES,
    N_EMOTIONS,
    EmotionLabel,
    FrameLabel,
    UnknownLabelError,
    emotion_from_index,
    parse_emotion,
    parse_frame,
)


def test_closed_sets():
    assert N_EMOTIONS == 8 and len(FRAMES) == 9
    assert [e.value for e in EMOTIONS] == ["Amusement", "Awe", "Contentment", "Excitement",
                                           "Fear", "Sadness", "Anger", "Disgust"]
    assert [e.index for e in EMOTIONS] == list(range(8))


@pytest.mark.parametrize("token", ["fear", "FEAR", " Fear ", "fEaR.", "**Fear**", "'fear'"])
def test_parse_emotion_normalizes(token):
    assert parse_emotion(token) is EmotionLabel.FEAR


@pytest.mark.parametrize("token", ["Joy", "fearful", "", "Surprise", "anger disgust"])
def test_parse_emotion_rejects(token):
    with pytest.raises(UnknownLabelError) as info:
        parse_emotion(token)
    assert info.value.kind == "emotion"


def test_every_case_variant_maps_to_its_label():
    for e in EMOTIONS:
        for variant in (e.value, e.value.upper(), e.value.lower(), e.value.swapcase()):
            assert parse_emotion(variant) is e


def test_frames_and_index_roundtrip():
    assert parse_frame("gun control/regulation") is FrameLabel("Gun Control/Regulation")
    with pytest.raises(UnknownLabelError):
        parse_frame("Sports")
    assert all(emotion_from_index(e.index) is e for e in EMOTIONS)
    with pytest.raises((IndexError, ValueError)):
        emotion_from_index(8)
