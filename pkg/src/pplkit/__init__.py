"""Perplexity-profile analysis of transcript corpora.

Train closed-vocabulary language models on transcripts of two subject
groups, profile every subject by perplexity under both group models in a
leave-one-subject-out protocol, and classify subjects with threshold
decision rules.
"""

__version__ = "0.1.0"

from .chat import (
    Corpus,
    Group,
    GroupStats,
    SubjectRecord,
    Transcript,
    corpus_stats,
    filter_multi_session,
    load_corpus,
    load_corpus_json,
    normalize_utterance,
    parse_chat_file,
    save_corpus,
)
from .harness import (
    RULES,
    ExperimentResult,
    Prediction,
    SubjectProfile,
    ThresholdSet,
    apply_rules,
    build_thresholds,
    classify_dbar,
    classify_dstar,
    classify_pbar_ad,
    classify_pbar_c,
    evaluate_all,
    run_loso,
)
from .metrics import (
    ConfusionCounts,
    EvaluationReport,
    RuleResult,
    accuracy,
    confusion,
    harmonic_mean,
    precision_recall_f1,
)
from .ngram import NgramLanguageModel, Vocabulary, build_vocabulary, train
from .scorers import (
    ExternalScorer,
    NgramScorer,
    PerplexityScore,
    ScorerSpec,
    fit_scorer,
    make_scorer,
)

__all__ = [
    "Corpus",
    "Group",
    "GroupStats",
    "SubjectRecord",
    "Transcript",
    "corpus_stats",
    "filter_multi_session",
    "load_corpus",
    "load_corpus_json",
    "normalize_utterance",
    "parse_chat_file",
    "save_corpus",
    "RULES",
    "ExperimentResult",
    "Prediction",
    "SubjectProfile",
    "ThresholdSet",
    "apply_rules",
    "build_thresholds",
    "classify_dbar",
    "classify_dstar",
    "classify_pbar_ad",
    "classify_pbar_c",
    "evaluate_all",
    "run_loso",
    "ConfusionCounts",
    "EvaluationReport",
    "RuleResult",
    "accuracy",
    "confusion",
    "harmonic_mean",
    "precision_recall_f1",
    "NgramLanguageModel",
    "Vocabulary",
    "build_vocabulary",
    "train",
    "ExternalScorer",
    "NgramScorer",
    "PerplexityScore",
    "ScorerSpec",
    "fit_scorer",
    "make_scorer",
]
