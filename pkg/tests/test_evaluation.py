import json
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emoxplain.classification.pipelines import ItemOutput
from emoxplain.evaluation import (
    EvalReport,
    EvaluationError,
    PairedOutcomes,
    aggregate_runs,
    average_kl,
    confusion_csv,
    confusion_matrix,
    evaluate_outputs,
    exact_match_accuracy,
    kl_divergence,
    mcnemar_from_counts,
    mcnemar_test,
    paired_from_dumps,
    read_prediction_dump,
    summary_table,
    top2_accuracy,
    write_prediction_dump,
)
from emoxplain.labels import EMOTIONS, EmotionLabel

E = EMOTIONS
# point mass vs uniform at eps=1e-6, mpmath dps=50 direct summation
KL_POINT_VS_UNIFORM = 2.079337833904092469446963


def test_accuracies():
    truths = [E[0], E[1], E[2], E[3]]
    assert exact_match_accuracy(truths, [E[0], E[1], None, E[4]]) == 0.5
    assert top2_accuracy(truths, [(E[5], E[0]), (E[1], E[2]), None, (E[4], E[5])]) == 0.5
    with pytest.raises(EvaluationError):
        exact_match_accuracy(truths, [E[0]])
    with pytest.raises(EvaluationError):
        top2_accuracy([], [])


def test_confusion_matrix_rows_are_truths():
    m = confusion_matrix([E[0], E[0], E[7]], [E[0], E[3], E[7]])
    assert m.shape == (8, 8) and m.sum() == 3
    assert m[0, 0] == 1 and m[0, 3] == 1 and m[7, 7] == 1
    assert confusion_matrix([], []).sum() == 0
    csv = confusion_csv(m).splitlines()
    assert csv[0] == "truth\\predicted," + ",".join(e.value for e in E)
    assert csv[1].startswith("Amusement,1,0,0,1")


def test_kl_identities():
    p = np.full(8, 1 / 8)
    assert abs(kl_divergence(p, p)) < 1e-12
    point = np.eye(8)[0]
    assert abs(kl_divergence(point, p) - KL_POINT_VS_UNIFORM) < 1e-9
    assert kl_divergence(point, p) < math.log(8)
    with pytest.raises(EvaluationError):
        kl_divergence([0.5, 0.5], p)
    with pytest.raises(EvaluationError):
        kl_divergence(p, p, epsilon=0)


def test_frozen_kl_oracle_by_direct_summation():
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 50
    eps = mp.mpf("1e-6")
    p = [mp.mpf(1)] + [mp.mpf(0)] * 7
    q = [mp.mpf(1) / 8] * 8
    ps = [(x + eps) / (1 + 8 * eps) for x in p]
    qs = [(x + eps) / (1 + 8 * eps) for x in q]
    exact = mp.fsum(a * mp.log(a / b) for a, b in zip(ps, qs))
    assert abs(float(exact) - KL_POINT_VS_UNIFORM) < 1e-15


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=8, max_size=8), st.lists(st.floats(0, 1), min_size=8, max_size=8))
def test_kl_non_negative(a, b):
    a, b = np.array(a), np.array(b)
    if a.sum() == 0 or b.sum() == 0:
        return
    assert kl_divergence(a / a.sum(), b / b.sum()) >= -1e-12


def test_average_kl_excludes_items_without_labels(toy_items):
    items = toy_items[:3]
    lists = [[a.emotion for a in items[0].annotations], [], [E[0]]]
    s = average_kl(items, lists)
    assert s.n_items == 2 and s.n_excluded == 1
    assert abs(s.per_item[0]) < 1e-9
    assert s.mean == pytest.approx(np.mean(s.per_item))
    rev = average_kl(items, lists, direction="generated||human")
    assert rev.per_item[1] != s.per_item[1]
    with pytest.raises(EvaluationError):
        average_kl(items[:1], [[]])


def test_mcnemar_reference_values():
    assert mcnemar_from_counts(5, 5).p_value == 1.0
    assert abs(mcnemar_from_counts(0, 10).p_value - 0.001953125) < 1e-9
    r = mcnemar_from_counts(0, 0)
    assert r.p_value == 1.0 and r.degenerate
    big = mcnemar_from_counts(10, 30)
    assert big.method == "chi2_cc"
    assert abs(big.p_value - math.erfc(math.sqrt(19 ** 2 / 40 / 2))) < 1e-9
    with pytest.raises(EvaluationError):
        mcnemar_from_counts(-1, 3)


def test_mcnemar_symmetric_and_bounded():
    rng = random.Random(3)
    for _ in range(200):
        b, c = rng.randrange(60), rng.randrange(60)
        r1, r2 = mcnemar_from_counts(b, c), mcnemar_from_counts(c, b)
        assert r1.p_value == r2.p_value
        assert 0.0 <= r1.p_value <= 1.0


def test_paired_outcomes_counts():
    po = PairedOutcomes((True, True, False, False), (True, False, True, False))
    assert (po.b, po.c) == (1, 1)
    assert mcnemar_test(po).method == "exact"
    with pytest.raises(EvaluationError):
        PairedOutcomes((True,), ())


def _outputs(correct, unpredicted=0):
    outs = []
    for i, ok in enumerate(correct):
        t = E[i % 8]
        p = t if ok else E[(i + 1) % 8]
        outs.append(ItemOutput(f"n{i}", t, p, (p, t)))
    for j in range(unpredicted):
        outs.append(ItemOutput(f"u{j}", E[0], None, None, None, "unpredicted", "bad"))
    return outs


def test_unpredicted_excluded_unless_strict():
    outs = _outputs([True] * 8, unpredicted=2)
    lenient = evaluate_outputs("cee_chat", outs, seed=0)
    assert lenient.exact_match == 1.0 and lenient.n_items == 8 and lenient.n_excluded == 2
    assert lenient.excluded_ids == ["u0", "u1"]
    strict = evaluate_outputs("cee_chat", outs, seed=0, strict=True)
    assert strict.exact_match == 0.8 and strict.n_items == 10 and strict.n_invalid == 2
    assert lenient.test_set_hash == strict.test_set_hash
    with pytest.raises(EvaluationError):
        evaluate_outputs("x", _outputs([], unpredicted=3))


def test_exact_never_exceeds_top2():
    with pytest.raises(EvaluationError):
        EvalReport("x", 1, 1.0, 0.5, [[0] * 8] * 8, "h")


def test_aggregate_mean_and_std():
    base = _outputs([True] * 6 + [False] * 4)
    r1 = evaluate_outputs("cee", base, seed=0)
    r2 = evaluate_outputs("cee", _outputs([True] * 7 + [False] * 3), seed=1)
    agg = aggregate_runs([r1, r2])
    assert agg.exact_match == pytest.approx(0.65)
    assert agg.exact_match_std == pytest.approx(np.std([0.6, 0.7], ddof=1))
    assert agg.runs == 2 and agg.seeds == [0, 1]
    assert np.sum(agg.confusion) == 20
    same = aggregate_runs([evaluate_outputs("cee", base, seed=s) for s in range(30)])
    assert same.exact_match_std == 0.0 and same.runs == 30
    other = evaluate_outputs("cee", _outputs([True] * 5), seed=0)
    with pytest.raises(EvaluationError):
        aggregate_runs([r1, other])
    with pytest.raises(EvaluationError):
        aggregate_runs([r1, evaluate_outputs("headline", base)])


def test_report_json_round_trip():
    r = aggregate_runs([evaluate_outputs("cee", _outputs([True, False, True]), seed=s) for s in (0, 1)])
    r.kl = 0.25
    back = EvalReport.from_json(json.loads(json.dumps(r.to_json())))
    assert back.to_json() == r.to_json()
    table = summary_table([r])
    assert "cee" in table and "0.250" in table


def test_prediction_dumps_pair_up(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_prediction_dump(a, "cee", _outputs([True] * 10), {"seed": 0})
    write_prediction_dump(b, "headline", _outputs([False] * 10))
    rows_a, rows_b = read_prediction_dump(a), read_prediction_dump(b)
    assert len(rows_a) == 10
    po = paired_from_dumps(rows_a, rows_b)
    assert (po.b, po.c) == (10, 0)
    assert abs(mcnemar_test(po).p_value - 0.001953125) < 1e-9
    with pytest.raises(EvaluationError):
        paired_from_dumps(rows_a, rows_b[:9])
    flipped = [dict(r, truth=EmotionLabel.FEAR.value if r["truth"] != "Fear" else "Awe") for r in rows_b]
    with pytest.raises(EvaluationError):
        paired_from_dumps(rows_a, flipped)
