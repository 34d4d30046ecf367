import pytest

from emoxplain.classification.classifier import ClassifierConfig, train_classifier
from emoxplain.classification.pipelines import (
    BASELINE1_BATCH_ID,
    LeakageError,
    PipelineError,
    PipelineSpec,
    generation_requests,
    run_pipeline,
)
from emoxplain.corpus import build_cee, build_ee, build_headline_corpus
from emoxplain.experiment import echo_backend
from emoxplain.generation.backends import MockBackend
from emoxplain.generation.core import GeneratorSpec
from emoxplain.generation.generator import Generator
from emoxplain.labels import EmotionLabel
from emoxplain.prompting.builders import PromptSpec

MOCK = GeneratorSpec("mock", "echo")
CLF = ClassifierConfig(epochs=30, n_features=16384)


@pytest.fixture(scope="module")
def classifiers(toy_split):
    train = toy_split.train
    return {
        "cee": train_classifier(build_cee(train), CLF, corpus="cee"),
        "ee": train_classifier(build_ee(train), CLF, corpus="ee"),
        "headline": train_classifier(build_headline_corpus(train), CLF, corpus="headline"),
    }


def echo_gen(items):
    return Generator(MOCK, echo_backend(items))


def accuracy(result):
    return sum(o.top1 is o.truth for o in result.outputs) / len(result.outputs)


@pytest.mark.parametrize("name,corpus", [("cee_chat", "cee"), ("ee_chat", "ee")])
def test_chat_pipelines_with_echo_mock_are_perfect(name, corpus, toy_items, toy_split, classifiers):
    agg = "majority_vote" if name == "ee_chat" else "none"
    spec = PipelineSpec(name, MOCK, PromptSpec("zero_shot"), agg)
    res = run_pipeline(spec, toy_split.test, classifier=classifiers[corpus], generator=echo_gen(toy_items))
    assert res.n_unpredicted == 0
    assert accuracy(res) == 1.0
    for o in res.outputs:
        assert o.top1 in o.top2
        assert len(o.generated_labels) == 10


def test_baseline_pipelines(toy_items, toy_split):
    gen = echo_gen(toy_items)
    b2 = run_pipeline(PipelineSpec("baseline2", MOCK, PromptSpec("zero_shot"), "majority_vote"),
                      toy_split.test, generator=gen)
    assert accuracy(b2) == 1.0
    b1 = run_pipeline(PipelineSpec("baseline1", MOCK), toy_split.test, generator=gen)
    assert list(b1.records) == [BASELINE1_BATCH_ID]
    assert accuracy(b1) == 1.0


def test_baseline1_partial_response_leaves_tail_unpredicted(toy_split):
    spec = PipelineSpec("baseline1", MOCK)
    backend = MockBackend(responder=lambda p: "(Fear, Anger)\n(Awe, Contentment)")
    res = run_pipeline(spec, toy_split.test, generator=Generator(MOCK, backend))
    assert res.outputs[0].top2 == (EmotionLabel.FEAR, EmotionLabel.ANGER)
    assert res.outputs[1].top1 is EmotionLabel.AWE
    assert res.n_unpredicted == len(toy_split.test) - 2
    assert all(o.reason for o in res.outputs[2:])


def test_unparsable_generation_is_reported_not_dropped(toy_split, classifiers):
    spec = PipelineSpec("cee_chat", MOCK, PromptSpec("zero_shot"))
    res = run_pipeline(spec, toy_split.test, classifier=classifiers["cee"],
                       generator=Generator(MOCK, MockBackend(responder=lambda p: "no separators here")))
    assert len(res.outputs) == len(toy_split.test)
    assert res.n_unpredicted == len(toy_split.test)
    assert all(o.status == "unpredicted" and o.top1 is None for o in res.outputs)


def test_leakage_is_refused(toy_items, toy_split, classifiers):
    leaky = train_classifier(build_cee(toy_split.train + toy_split.test[:1]), CLF, corpus="cee")
    spec = PipelineSpec("cee_chat", MOCK, PromptSpec("zero_shot"))
    with pytest.raises(LeakageError):
        run_pipeline(spec, toy_split.test, classifier=leaky, generator=echo_gen(toy_items))


def test_wrong_classifier_corpus_is_refused(toy_items, toy_split, classifiers):
    spec = PipelineSpec("ee_chat", MOCK, PromptSpec("zero_shot"), "majority_vote")
    with pytest.raises(PipelineError, match="ee classifier"):
        run_pipeline(spec, toy_split.test, classifier=classifiers["cee"], generator=echo_gen(toy_items))
    with pytest.raises(PipelineError):
        run_pipeline(PipelineSpec("cee"), toy_split.test)


def test_classifier_only_pipelines(toy_split, classifiers):
    cee = run_pipeline(PipelineSpec("cee"), toy_split.test, classifier=classifiers["cee"])
    assert accuracy(cee) == 1.0
    head = run_pipeline(PipelineSpec("headline"), toy_split.test, classifier=classifiers["headline"])
    assert len(head.outputs) == len(toy_split.test) and head.n_unpredicted == 0


def test_spec_validation():
    with pytest.raises(PipelineError):
        PipelineSpec("nope")
    with pytest.raises(PipelineError, match="majority_vote"):
        PipelineSpec("ee_chat", MOCK, PromptSpec("zero_shot"), "none")
    with pytest.raises(PipelineError):
        PipelineSpec("cee_chat", GeneratorSpec("local_seq2seq", "s"))
    with pytest.raises(PipelineError):
        PipelineSpec("cee_chat", MOCK, PromptSpec("baseline1"))
    assert PipelineSpec("cee_chat", MOCK).variant == "zero_shot"
    assert PipelineSpec("baseline1", MOCK).prompt.mode == "baseline1"


def test_few_shot_exemplars_shared_across_requests(toy_split):
    spec = PipelineSpec("cee_chat", MOCK, PromptSpec("few_shot_random", shots=3, seed=5))
    reqs = generation_requests(spec, toy_split.test, toy_split.train)
    heads = {p.rsplit("\n", 1)[0] for _, p in reqs}
    assert len(reqs) == len(toy_split.test)
    assert len(heads) == 1
    assert reqs == generation_requests(spec, toy_split.test, toy_split.train)
