"""Declarative text rules compiled into feature extractors, plus a small
convolutional sentence classifier trained on the transformed data."""

from .corpus import (
    Dataset,
    EncodedInstance,
    Instance,
    Token,
    Vocab,
    build_vocab,
    encode,
    load_dataset,
    load_embeddings,
    tokenize,
)
from .errors import (
    ConfidenceRange,
    CorruptCheckpoint,
    DuplicateRule,
    EmptyDataset,
    EmptyLine,
    EmptySubset,
    FormatError,
    IncompatibleCheckpoint,
    NonFiniteGradient,
    NonFiniteLoss,
    ParseError,
    RulefeatError,
    ShapeError,
    TooFewInstances,
    TooFewSamples,
    UnsupportedConfidence,
    VocabOverflow,
)
from .estimator import ConvSentimentClassifier, RuleFeatureExtractor
from .evalkit import (
    CIStat,
    ConfusionCounts,
    CVReport,
    GainDropReport,
    Metrics,
    ci95,
    confusion,
    cross_validate,
    evaluate,
    gain_drop,
    kfold_split,
    metrics,
    rule_stats,
    subset_eval,
    subset_mask,
)
from .network import ModelParams, backward, cross_entropy, forward, grad_check, init_params
from .optim import AdaDeltaState, adadelta_step
from .pipeline import (
    EpochStats,
    TrainConfig,
    TrainedModel,
    load_model,
    predict,
    save_model,
    train,
)
from .rules import (
    EMPTY_RULESET,
    ExtractorChain,
    FeatureExtractor,
    Grounding,
    Rule,
    RuleSet,
    TransformedInstance,
    compile_ruleset,
    ground,
    load_builtin_ruleset,
    load_rules,
    matches_any,
    parse_rules,
)

__version__ = "0.1.0"

__all__ = [
    "AdaDeltaState",
    "CIStat",
    "ConfidenceRange",
    "ConfusionCounts",
    "ConvSentimentClassifier",
    "CorruptCheckpoint",
    "CVReport",
    "Dataset",
    "DuplicateRule",
    "EMPTY_RULESET",
    "EmptyDataset",
    "EmptyLine",
    "EmptySubset",
    "EncodedInstance",
    "EpochStats",
    "ExtractorChain",
    "FeatureExtractor",
    "FormatError",
    "GainDropReport",
    "Grounding",
    "IncompatibleCheckpoint",
    "Instance",
    "Metrics",
    "ModelParams",
    "NonFiniteGradient",
    "NonFiniteLoss",
    "ParseError",
    "Rule",
    "RuleFeatureExtractor",
    "RuleSet",
    "RulefeatError",
    "ShapeError",
    "Token",
    "TooFewInstances",
    "TooFewSamples",
    "UnsupportedConfidence",
    "VocabOverflow",
    "TrainConfig",
    "TrainedModel",
    "TransformedInstance",
    "Vocab",
    "adadelta_step",
    "backward",
    "build_vocab",
    "ci95",
    "compile_ruleset",
    "confusion",
    "cross_entropy",
    "cross_validate",
    "encode",
    "evaluate",
    "forward",
    "gain_drop",
    "grad_check",
    "ground",
    "init_params",
    "kfold_split",
    "load_builtin_ruleset",
    "load_dataset",
    "load_embeddings",
    "load_model",
    "load_rules",
    "matches_any",
    "metrics",
    "parse_rules",
    "predict",
    "rule_stats",
    "save_model",
    "subset_eval",
    "subset_mask",
    "tokenize",
    "train",
]
