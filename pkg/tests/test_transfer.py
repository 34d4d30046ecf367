import random

import pytest

from emoxplain.classification.transfer import (
    TransferClassifier,
    TransferConfig,
    TransferSchedule,
    train_plain_label_model,
    train_with_intermediate_task,
)
from emoxplain.generation.seq2seq import Seq2SeqConfig, weights_hash
from emoxplain.labels import EMOTIONS, EmotionLabel

SMALL = Seq2SeqConfig(epochs=25, batch_size=8, lr=3e-3, n_layers=1, max_target_len=16)
CFG = TransferConfig(SMALL, SMALL)


def toy_schedule(n=48, seed=0, intermediate=True):
    rng = random.Random(seed)
    fillers = "city vote bill school rally court".split()
    labels = list(EMOTIONS[:4])
    stage2 = []
    for _ in range(n):
        e = rng.choice(labels)
        words = rng.sample(fillers, 3) + [e.value.lower()]
        rng.shuffle(words)
        stage2.append((" ".join(words), e))
    stage1 = [(h, h) for h, _ in stage2] if intermediate else []
    return TransferSchedule(tuple(stage1), tuple(stage2))


def _accuracy(model: TransferClassifier, pairs):
    return sum(model.predict(h)[0] is e for h, e in pairs) / len(pairs)


@pytest.fixture(scope="module")
def transfer_model():
    return train_with_intermediate_task(toy_schedule(), CFG)


def test_stage2_starts_from_stage1(transfer_model):
    s1 = transfer_model.stage1.manifest
    s2 = transfer_model.manifest
    assert s1["stage"] == "intermediate" and s2["stage"] == "emotion"
    assert s2["parent_weights_hash"] == s1["final_weights_hash"]
    assert s2["init_weights_hash"] == s1["final_weights_hash"]
    assert s2["vocab_hash"] == s1["vocab_hash"]
    assert s2["final_weights_hash"] == weights_hash(transfer_model.handle.model)
    assert s2["schedule"] == {"stage1_pairs": 48, "stage2_pairs": 48}


def test_skipping_stage1_is_the_plain_path_bit_for_bit():
    sched = toy_schedule(intermediate=False)
    via_transfer = train_with_intermediate_task(sched, CFG)
    plain = train_plain_label_model(sched.stage2, SMALL)
    assert via_transfer.stage1 is None
    assert via_transfer.manifest["parent_weights_hash"] is None
    assert via_transfer.manifest["final_weights_hash"] == plain.manifest["final_weights_hash"]


def test_transfer_not_worse_than_plain_on_toy(transfer_model):
    held_out = toy_schedule(40, seed=1).stage2
    plain = train_plain_label_model(toy_schedule().stage2, SMALL)
    t, p = _accuracy(transfer_model, held_out), _accuracy(plain, held_out)
    assert t >= p - 0.1
    assert t >= 0.8


def test_off_label_decode_is_none_not_crash(transfer_model, monkeypatch):
    import emoxplain.classification.transfer as tr
    monkeypatch.setattr(tr, "generate_seq2seq", lambda h, s, max_len=None: "city vote")
    label, ranked, raw = transfer_model.predict("anything")
    assert label is None and raw == "city vote"
    assert ranked.top1 in EMOTIONS


def test_schedule_validation():
    with pytest.raises(ValueError):
        TransferSchedule((), ())
    s = TransferSchedule((), (("h", "fear"),))
    assert s.stage2 == (("h", EmotionLabel.FEAR),) and s.stage2_pairs() == [("h", "fear")]
