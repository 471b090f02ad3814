"""Estimator-style wrappers: a rule transformer and a classifier that
follow the fit/transform/predict conventions, so they compose with
pipelines, clone(), and grid search.

Both accept raw strings or pre-split token sequences as samples.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from .corpus import Dataset, Instance, Token, tokenize
from .errors import EmptyLine, ParseError
from .pipeline import TrainConfig, predict, train
from .rules import EMPTY_RULESET, RuleSet, compile_ruleset, load_rules, parse_rules


def _resolve_rules(rules) -> RuleSet:
    """None -> empty set, RuleSet -> itself, Path or the name of an
    existing file -> loaded from disk, any other str -> DSL source."""
    if rules is None:
        return EMPTY_RULESET
    if isinstance(rules, RuleSet):
        return rules
    if isinstance(rules, Path):
        return load_rules(rules)
    if isinstance(rules, str):
        if "\n" not in rules and Path(rules).is_file():
            return load_rules(rules)
        try:
            return parse_rules(rules)
        except ParseError:
            pathlike = "\n" not in rules and '"' not in rules and ";" not in rules
            if pathlike:
                raise ParseError(
                    f"rules string {rules!r} is not an existing file and does not "
                    "parse as rule source"
                ) from None
            raise
    raise TypeError(
        f"rules must be None, DSL source, a file path, or a RuleSet, got {type(rules).__name__}"
    )


def _as_token_tuples(X) -> list[tuple[Token, ...]]:
    """Validate samples into token tuples.

    Each sample is either a string (tokenized by lowercasing and
    whitespace splitting) or a sequence of token strings.
    """
    out: list[tuple[Token, ...]] = []
    for i, sample in enumerate(X):
        if isinstance(sample, str):
            text = sample
        else:
            try:
                parts = list(sample)
            except TypeError:
                raise ValueError(
                    f"sample {i} must be a string or a sequence of strings, got {type(sample).__name__}"
                ) from None
            if not all(isinstance(p, str) for p in parts):
                raise ValueError(f"sample {i} contains non-string tokens")
            if any(not p or any(c.isspace() for c in p) for p in parts):
                raise ValueError(f"sample {i} contains empty or whitespace-bearing tokens")
            text = " ".join(parts)
        try:
            out.append(tokenize(text))
        except EmptyLine:
            raise ValueError(f"sample {i} contains no tokens") from None
    return out


def _check_binary_labels(y, n_samples: int) -> np.ndarray:
    arr = np.asarray(y)
    if arr.ndim != 1 or arr.shape[0] != n_samples:
        raise ValueError(f"y must be a vector of {n_samples} labels, got shape {arr.shape}")
    arr = arr.astype(np.int64)
    bad = set(np.unique(arr)) - {0, 1}
    if bad:
        raise ValueError(f"labels must be 0 or 1, got {sorted(bad)}")
    return arr


def _to_dataset(token_tuples, labels, name: str) -> Dataset:
    instances = tuple(
        Instance(id=i, tokens=toks, label=int(lab))
        for i, (toks, lab) in enumerate(zip(token_tuples, labels))
    )
    return Dataset(name=name, instances=instances)


class RuleFeatureExtractor(BaseEstimator, TransformerMixin):
    """Transformer that rewrites sentences through a compiled rule chain.

    Parameters
    ----------
    rules : None, str, Path, or RuleSet
        None means the identity transform; a string naming an existing
        file is loaded from disk, any other string is rule DSL source.
    """

    def __init__(self, rules=None):
        self.rules = rules

    def fit(self, X=None, y=None):
        """Compile the rules; X and y are accepted for pipeline compatibility."""
        self.ruleset_ = _resolve_rules(self.rules)
        self.chain_ = compile_ruleset(self.ruleset_)
        return self

    def transform(self, X) -> list[str]:
        """Transformed sentences as space-joined lowercase strings."""
        if not hasattr(self, "chain_"):
            raise NotFittedError("RuleFeatureExtractor.transform called before fit")
        out = []
        for toks in _as_token_tuples(X):
            inst = Instance(id=0, tokens=toks, label=0)
            out.append(self.chain_.apply_one(inst).text)
        return out


class ConvSentimentClassifier(BaseEstimator, ClassifierMixin):
    """Binary sentence classifier: rule transform, then a small CNN.

    Constructor arguments mirror TrainConfig; ``rules`` follows the same
    convention as RuleFeatureExtractor. Class 1 is positive sentiment.
    """

    def __init__(
        self,
        rules=None,
        epochs: int = 25,
        batch_size: int = 50,
        embed_dim: int = 50,
        filter_widths: tuple[int, ...] = (2, 3, 4),
        feature_maps: int = 16,
        dropout: float = 0.5,
        seed: int = 42,
        patience: int = 5,
        apply_rules_at_inference: bool = True,
        embeddings_path: str | None = None,
        min_freq: int = 1,
        dev_fraction: float = 0.1,
    ):
        self.rules = rules
        self.epochs = epochs
        self.batch_size = batch_size
        self.embed_dim = embed_dim
        self.filter_widths = filter_widths
        self.feature_maps = feature_maps
        self.dropout = dropout
        self.seed = seed
        self.patience = patience
        self.apply_rules_at_inference = apply_rules_at_inference
        self.embeddings_path = embeddings_path
        self.min_freq = min_freq
        self.dev_fraction = dev_fraction

    def _config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            embed_dim=self.embed_dim,
            filter_widths=tuple(self.filter_widths),
            feature_maps=self.feature_maps,
            dropout=self.dropout,
            seed=self.seed,
            patience=self.patience,
            apply_rules_at_inference=self.apply_rules_at_inference,
            embeddings_path=self.embeddings_path,
            min_freq=self.min_freq,
            dev_fraction=self.dev_fraction,
        )

    def fit(self, X, y):
        token_tuples = _as_token_tuples(X)
        labels = _check_binary_labels(y, len(token_tuples))
        dataset = _to_dataset(token_tuples, labels, "fit")
        self.model_ = train(self._config(), dataset, dev_set=None, ruleset=_resolve_rules(self.rules))
        self.classes_ = np.array([0, 1], dtype=np.int64)
        return self

    def _require_fitted(self) -> None:
        if not hasattr(self, "model_"):
            raise NotFittedError("ConvSentimentClassifier used before fit")

    def predict(self, X) -> np.ndarray:
        self._require_fitted()
        token_tuples = _as_token_tuples(X)
        instances = [Instance(id=i, tokens=toks, label=0) for i, toks in enumerate(token_tuples)]
        labels, _ = predict(self.model_, instances)
        return labels

    def predict_proba(self, X) -> np.ndarray:
        """Column j holds the probability of ``classes_[j]``."""
        self._require_fitted()
        token_tuples = _as_token_tuples(X)
        instances = [Instance(id=i, tokens=toks, label=0) for i, toks in enumerate(token_tuples)]
        _, probs = predict(self.model_, instances)
        return probs
