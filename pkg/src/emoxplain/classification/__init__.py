from .classifier import (
    ClassifierConfig,
    ClassifierHandle,
    DegenerateCorpusError,
    Prediction,
    accuracy,
    majority_vote,
    predict,
    predict_many,
    top2_by_frequency,
    train_classifier,
    vote_distribution,
)
from .pipelines import (
    PIPELINES,
    ItemOutput,
    LeakageError,
    PipelineError,
    PipelineResult,
    PipelineSpec,
    check_no_leakage,
    generation_requests,
    run_pipeline,
)

__all__ = [
    "ClassifierConfig", "ClassifierHandle", "DegenerateCorpusError", "Prediction", "accuracy",
    "majority_vote", "predict", "predict_many", "top2_by_frequency", "train_classifier",
    "vote_distribution", "PIPELINES", "ItemOutput", "LeakageError", "PipelineError", "PipelineResult",
    "PipelineSpec", "check_no_leakage", "generation_requests", "run_pipeline",
]
