"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line."""

import math
import os
import random
from collections import Counter
from pathlib import Path

import numpy as np
import pytest

from emoxplain.classification.classifier import majority_vote
from emoxplain.classification.transfer import (
    TransferConfig,
    TransferSchedule,
    train_plain_label_model,
    train_with_intermediate_task,
)
from emoxplain.config import ExperimentConfig
from emoxplain.corpus import (
    build_ee,
    derive_dominant,
    filter_clear_agreement,
    second_dominant_fraction,
    split_corpus,
)
from emoxplain.evaluation import (
    confusion_matrix,
    exact_match_accuracy,
    kl_divergence,
    mcnemar_from_counts,
    top2_accuracy,
)
from emoxplain.experiment import run_experiment
from emoxplain.generation.seq2seq import Seq2SeqConfig
from emoxplain.kernels import smoothed_kl_rows
from emoxplain.labels import EMOTIONS, FRAMES, EmotionLabel
from emoxplain.prompting import GeneratedLine, parse_generation, render_generation
from emoxplain.prompting.builders import (
    FewShotExample,
    build_baseline1_prompt,
    build_few_shot_prompt,
    build_zero_shot_prompt,
)
from emoxplain.prompting.sampling import sample_few_shot_frame_aware
from emoxplain.synthetic import make_corpus, make_random_corpus

GOLDEN = Path(__file__).parent / "golden"
KL_POINT_VS_UNIFORM = 2.079337833904092469446963


def golden(name):
    return (GOLDEN / name).read_text(encoding="utf-8").rstrip("\n")


def test_criterion_1_metric_oracles(criterion):
    with criterion(1, "metric oracle suite on 1000 random instances", 10):
        rng = random.Random(101)
        for _ in range(1000):
            n = rng.randint(1, 30)
            truths = [rng.choice(EMOTIONS) for _ in range(n)]
            top1 = [rng.choice(EMOTIONS) for _ in range(n)]
            top2 = [(a, rng.choice([e for e in EMOTIONS if e is not a])) for a in top1]
            assert exact_match_accuracy(truths, top1) == sum(t == p for t, p in zip(truths, top1)) / n
            assert top2_accuracy(truths, top2) == sum(t in p for t, p in zip(truths, top2)) / n
            m = confusion_matrix(truths, top1)
            for i, ti in enumerate(EMOTIONS):
                for j, pj in enumerate(EMOTIONS):
                    assert m[i, j] == sum(t == ti and p == pj for t, p in zip(truths, top1))
            votes = [rng.choice(EMOTIONS[: rng.randint(1, 8)]) for _ in range(rng.randint(1, 12))]
            c = Counter(votes)
            best = max(c.values())
            assert majority_vote(votes) == [e for e in EMOTIONS if c[e] == best][0]
            counts = [rng.randint(0, 4) for _ in range(8)]
            if sum(counts) == 0:
                counts[rng.randrange(8)] = 1
            probs = [x / sum(counts) for x in counts]
            assert derive_dominant(probs) == EMOTIONS[counts.index(max(counts))]


def test_criterion_2_mcnemar(criterion):
    with criterion(2, "McNemar exact and continuity-corrected branches", 5):
        assert mcnemar_from_counts(5, 5).p_value == 1.0
        assert abs(mcnemar_from_counts(0, 10).p_value - 0.001953125) < 1e-9
        rng = random.Random(202)
        for _ in range(100):
            b = rng.randint(0, 200)
            c = rng.randint(max(0, 25 - b), 200)
            r = mcnemar_from_counts(b, c)
            stat = (abs(b - c) - 1) ** 2 / (b + c)
            # chi-square survival with one degree of freedom
            assert r.method == "chi2_cc"
            assert abs(r.p_value - math.erfc(math.sqrt(stat / 2))) < 1e-9


def test_criterion_3_kl(criterion):
    with criterion(3, "KL identity, non-negativity, point-mass oracle", 10):
        nrng = np.random.default_rng(303)
        for _ in range(100):
            p = nrng.dirichlet(np.ones(8))
            assert abs(kl_divergence(p, p)) < 1e-12
        P = nrng.dirichlet(np.full(8, 0.3), size=10_000)
        Q = nrng.dirichlet(np.full(8, 0.3), size=10_000)
        # sparse rows exercise the smoothing
        P[: 5000][P[:5000] < 0.05] = 0.0
        P /= P.sum(axis=1, keepdims=True)
        assert (smoothed_kl_rows(P, Q, 1e-6) >= 0).all()
        point, uniform = np.eye(8)[0], np.full(8, 1 / 8)
        assert abs(kl_divergence(point, uniform, 1e-6) - KL_POINT_VS_UNIFORM) < 1e-9


def test_criterion_4_parser(criterion):
    words = ["we", "feel", "scared", "happy", "about", "it", "the", "news", "why;", "though;", "ok", ":)"]
    with criterion(4, "render/parse round-trip and last-semicolon rule", 5):
        rng = random.Random(404)
        with_semicolon = 0
        for _ in range(1000):
            lines = []
            for _ in range(rng.randint(1, 12)):
                text = " ".join(rng.choice(words) for _ in range(rng.randint(1, 9)))
                text = text.strip().lstrip("-*•0123456789.) ") or "x"
                with_semicolon += ";" in text
                lines.append(GeneratedLine(text, rng.choice(EMOTIONS)))
            parsed = parse_generation(render_generation(lines), expected_lines=len(lines))
            assert parsed.lines == tuple(lines) and not parsed.rejected
        assert with_semicolon > 100
        p = parse_generation("fine for now; maybe; awe\nthis is great; joy\nno label here", expected_lines=3)
        assert p.lines == (GeneratedLine("fine for now; maybe", EmotionLabel.AWE),)
        reasons = {r.line_no: r.reason for r in p.rejected}
        assert "joy" in reasons[2] and "semicolon" in reasons[3]


def test_criterion_5_prompt_fidelity(criterion):
    with criterion(5, "byte-exact prompt templates and frame coverage"):
        head = golden("few_shot_head.txt").split("\n")
        pairs = [(t, EmotionLabel[lab.upper()]) for t, _, lab in (r.rpartition("; ") for r in head[5:])]
        first = FewShotExample(head[3].split(": ", 1)[1], tuple(pairs), FRAMES[0])
        fillers = [FewShotExample(f"h{i}", (("w", EmotionLabel.AWE),), FRAMES[i]) for i in range(1, 9)]
        target = golden("few_shot_target_line.txt").split(": ", 1)[1]
        prompt = build_few_shot_prompt(target, [first] + fillers)
        assert prompt.startswith(golden("few_shot_head.txt") + "\n\n")
        assert prompt.endswith("\n\n" + golden("few_shot_target_line.txt"))
        assert build_zero_shot_prompt(target) == golden("instruction_line.txt") + "\n" + \
            golden("few_shot_target_line.txt")
        b1 = golden("baseline1_91.txt")
        listing = [f"headline {i}" for i in range(1, 92)]
        assert build_baseline1_prompt(listing) == b1[: -len("[...]")] + \
            "".join(f"\n{i}. headline {i}" for i in range(1, 92))
        items = make_corpus(90, seed=5)
        for seed in range(100):
            assert {e.frame for e in sample_few_shot_frame_aware(items, seed)} == set(FRAMES)


def _mock_config():
    return ExperimentConfig.from_dict({
        "version": 1,
        "name": "acceptance-mock",
        "data": {"synthetic_items": 120, "synthetic_seed": 7},
        "generator": {"kind": "mock", "model_id": "echo"},
        "classifier": {"epochs": 30, "n_features": 16384},
        "pipelines": [{"name": "cee_chat", "prompt": {"mode": "zero_shot"}},
                      {"name": "ee_chat", "prompt": {"mode": "zero_shot"}}],
    })


def test_criterion_6_end_to_end_determinism(criterion, tmp_path):
    with criterion(6, "cee_chat and ee_chat with mock generator: accuracy 1.0, byte-identical reruns", 60):
        cfg = _mock_config()
        first = run_experiment(cfg, tmp_path / "a")
        second = run_experiment(cfg, tmp_path / "b")
        for rep in first.reports:
            assert rep.exact_match == 1.0 and rep.n_excluded == 0
        assert [r.to_json() for r in first.reports] == [r.to_json() for r in second.reports]
        names = ["reports.jsonl", "summary.txt"]
        names += [str(p.relative_to(tmp_path / "a")) for p in (tmp_path / "a" / "predictions").iterdir()]
        names += [str(p.relative_to(tmp_path / "a")) for p in (tmp_path / "a" / "confusion").iterdir()]
        for name in names:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_criterion_7_transfer_lineage(criterion):
    small = Seq2SeqConfig(epochs=15, batch_size=8, lr=3e-3, n_layers=1, max_target_len=16)
    cfg = TransferConfig(small, small)
    rng = random.Random(707)
    stage2 = []
    for _ in range(32):
        e = rng.choice(EMOTIONS[:4])
        words = rng.sample(["city", "vote", "bill", "school", "rally"], 3) + [e.value.lower()]
        stage2.append((" ".join(words), e))
    with criterion(7, "two-stage transfer lineage and skip-stage-1 equivalence"):
        model = train_with_intermediate_task(TransferSchedule(tuple((h, h) for h, _ in stage2), tuple(stage2)), cfg)
        assert model.manifest["parent_weights_hash"] == model.stage1.manifest["final_weights_hash"]
        assert model.manifest["init_weights_hash"] == model.stage1.manifest["final_weights_hash"]
        skipped = train_with_intermediate_task(TransferSchedule((), tuple(stage2)), cfg)
        plain = train_plain_label_model(tuple(stage2), small)
        assert skipped.manifest["final_weights_hash"] == plain.manifest["final_weights_hash"]


def test_criterion_8_corpus_invariants(criterion):
    with criterion(8, "split, CR, EE and second-dominant invariants on 200 random corpora", 20):
        rng = random.Random(808)
        for k in range(200):
            items = make_random_corpus(rng)
            split = split_corpus(items, seed=k)
            parts = [[i.item_id for i in p] for p in (split.train, split.validation, split.test)]
            flat = [i for p in parts for i in p]
            assert len(flat) == len(set(flat)) and set(flat) == {i.item_id for i in items}
            sizes = [len(filter_clear_agreement(items, t)) for t in range(1, 11)]
            assert sizes == sorted(sizes, reverse=True)
            assert len(build_ee(items)) == sum(len(i.annotations) for i in items)
            brute = sum(sorted(Counter(a.emotion for a in i.annotations).values(), reverse=True)[1:2] >= [2]
                        for i in items) / len(items)
            assert second_dominant_fraction(items) == brute


TARGETS = {
    ("headline", "-"): 0.58,
    ("cee", "-"): 0.68,
    ("t5_transfer", "-"): 0.58,
    ("t5_plain", "-"): 0.52,
    ("cee_chat", "few_shot_random"): 0.66,
}


def test_criterion_9_conditional_reproduction(criterion, tmp_path):
    data = os.environ.get("EMOXPLAIN_CANONICAL_DATA")
    with criterion(9, "conditional reproduction on canonical data (reported, not gating)"):
        if not data or not os.environ.get("EMOXPLAIN_LLM_API_KEY"):
            pytest.skip("set EMOXPLAIN_CANONICAL_DATA and EMOXPLAIN_LLM_API_KEY to run")
        cfg = ExperimentConfig.from_dict({
            "version": 1,
            "name": "reproduction",
            "data": {"annotations": data},
            "generator": {"kind": "llm_service", "model_id": os.environ.get("EMOXPLAIN_LLM_MODEL", "gpt-3.5-turbo")},
            "pipelines": [{"name": "headline"}, {"name": "cee"}, {"name": "t5_transfer"}, {"name": "t5_plain"},
                          {"name": "cee_chat", "prompt": {"mode": "zero_shot"}},
                          {"name": "cee_chat", "prompt": {"mode": "few_shot_frames"}},
                          {"name": "cee_chat", "prompt": {"mode": "few_shot_random"}}],
        })
        res = run_experiment(cfg, tmp_path / "repro")
        for (name, variant), target in TARGETS.items():
            got = res.report(name, variant).exact_match
            tol = 0.07 if name == "cee_chat" else 0.05
            status = "PASS" if abs(got - target) <= tol else "FAIL"
            print(f"{status} criterion 9: {name}/{variant} exact {got:.3f} vs {target:.2f} ± {tol:.2f}")
        kl = [res.report("cee_chat", v).kl for v in ("zero_shot", "few_shot_frames", "few_shot_random")]
        status = "PASS" if kl[0] > kl[1] > kl[2] else "FAIL"
        print(f"{status} criterion 9: KL ordering zero-shot > frames > random: {kl}")
