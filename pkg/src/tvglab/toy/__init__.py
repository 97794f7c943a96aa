from .policy import ToyPolicy, ToyPolicyParams
from .synth import (
    SyntheticCorpus,
    SyntheticCorpusConfig,
    SyntheticVideo,
    VERB_FORMS,
    gen_synthetic_corpus,
)
from .train import (
    DegradationResult,
    ToyLabConfig,
    TrainingLog,
    degradation_experiment,
    invert_accuracy,
    probe,
    train,
)

__all__ = [
    "ToyPolicy",
    "ToyPolicyParams",
    "SyntheticCorpus",
    "SyntheticCorpusConfig",
    "SyntheticVideo",
    "VERB_FORMS",
    "gen_synthetic_corpus",
    "DegradationResult",
    "ToyLabConfig",
    "TrainingLog",
    "degradation_experiment",
    "invert_accuracy",
    "probe",
    "train",
]
