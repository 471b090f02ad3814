"""Evaluation: positive-class metrics, rule match statistics, seeded
k-fold cross-validation with 95% confidence intervals, and paired
runs that isolate what a ruleset contributes.

Positive-class conventions: label 1 is positive. Any metric whose
denominator is zero is reported as 0.0 and flagged, never NaN.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy import stats

from .corpus import Dataset
from .errors import EmptySubset, ShapeError, TooFewInstances, TooFewSamples
from .pipeline import TrainConfig, predict, train
from .rules import EMPTY_RULESET, RuleSet, ground, matches_any


@dataclasses.dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclasses.dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    accuracy: float
    zero_denominator: bool


@dataclasses.dataclass(frozen=True)
class RuleStat:
    name: str
    matched: int
    total: int


@dataclasses.dataclass(frozen=True)
class CIStat:
    """Mean with a two-sided 95% Student-t half width."""

    n: int
    mean: float
    half_width: float

    @property
    def low(self) -> float:
        return self.mean - self.half_width

    @property
    def high(self) -> float:
        return self.mean + self.half_width


@dataclasses.dataclass(frozen=True)
class FoldPlan:
    n: int
    k: int
    seed: int
    folds: tuple[tuple[int, ...], ...]

    def test_indices(self, fold: int) -> tuple[int, ...]:
        return self.folds[fold]

    def train_indices(self, fold: int) -> tuple[int, ...]:
        held = set(self.folds[fold])
        return tuple(i for i in range(self.n) if i not in held)


@dataclasses.dataclass(frozen=True)
class FoldResult:
    fold: int
    test_size: int
    accuracy: float
    subset_size: int
    subset_accuracy: float | None


@dataclasses.dataclass(frozen=True)
class CVReport:
    k: int
    seed: int
    folds: tuple[FoldResult, ...]
    accuracy: CIStat
    subset_accuracy: CIStat | None


@dataclasses.dataclass(frozen=True)
class GainDropReport:
    """Same-seed comparison of training with and without a ruleset.

    Positive deltas mean the rules helped; negative means they hurt.
    The subset columns restrict scoring to test instances the analysis
    ruleset matches, where any effect should concentrate.
    """

    rule_names: tuple[str, ...]
    with_rules: CVReport
    without_rules: CVReport
    whole_delta: float
    subset_delta: float | None
    fold_whole_deltas: tuple[float, ...]
    fold_subset_deltas: tuple[float | None, ...]


def confusion(gold, predicted) -> ConfusionCounts:
    g = np.asarray(gold, dtype=np.int64)
    p = np.asarray(predicted, dtype=np.int64)
    if g.shape != p.shape or g.ndim != 1:
        raise ShapeError(f"label arrays must be equal-length vectors, got {g.shape} and {p.shape}")
    bad = set(np.unique(g)) | set(np.unique(p))
    if not bad <= {0, 1}:
        raise ValueError(f"labels must be 0 or 1, got {sorted(bad)}")
    return ConfusionCounts(
        tp=int(np.sum((g == 1) & (p == 1))),
        fp=int(np.sum((g == 0) & (p == 1))),
        fn=int(np.sum((g == 1) & (p == 0))),
        tn=int(np.sum((g == 0) & (p == 0))),
    )


def metrics(counts: ConfusionCounts) -> Metrics:
    flagged = False

    def ratio(num: int, den: int) -> float:
        nonlocal flagged
        if den == 0:
            flagged = True
            return 0.0
        return num / den

    precision = ratio(counts.tp, counts.tp + counts.fp)
    recall = ratio(counts.tp, counts.tp + counts.fn)
    if precision + recall == 0.0:
        flagged = True
        f1 = 0.0
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    accuracy = ratio(counts.tp + counts.tn, counts.total)
    return Metrics(precision=precision, recall=recall, f1=f1, accuracy=accuracy,
                   zero_denominator=flagged)


def evaluate(gold, predicted) -> Metrics:
    return metrics(confusion(gold, predicted))


def rule_stats(dataset: Dataset, ruleset: RuleSet) -> tuple[RuleStat, ...]:
    """How many instances each rule fires on, in ruleset order."""
    out = []
    for rule in ruleset.rules:
        matched = sum(1 for inst in dataset if ground(rule, inst).matched)
        out.append(RuleStat(name=rule.name, matched=matched, total=dataset.size))
    return tuple(out)


def subset_mask(instances, ruleset: RuleSet) -> np.ndarray:
    items = list(instances.instances if isinstance(instances, Dataset) else instances)
    return np.array([matches_any(ruleset, inst) for inst in items], dtype=bool)


def subset_eval(gold, predicted, mask) -> Metrics:
    """Metrics restricted to the masked instances.

    Raises:
        EmptySubset: the mask selects nothing.
    """
    g = np.asarray(gold)
    p = np.asarray(predicted)
    m = np.asarray(mask, dtype=bool)
    if not (g.shape == p.shape == m.shape):
        raise ShapeError(f"mismatched shapes {g.shape}, {p.shape}, {m.shape}")
    if not m.any():
        raise EmptySubset("no instances match the ruleset")
    return evaluate(g[m], p[m])


def kfold_split(n: int, k: int, seed: int) -> FoldPlan:
    """Seeded shuffle then round-robin assignment into k folds.

    Fold sizes differ by at most one; every index lands in exactly one
    fold. Raises TooFewInstances when n < k.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if n < k:
        raise TooFewInstances(f"cannot split {n} instances into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    folds = tuple(tuple(int(i) for i in perm[f::k]) for f in range(k))
    return FoldPlan(n=n, k=k, seed=seed, folds=folds)


def ci95(values) -> CIStat:
    """Mean and 95% confidence half width from a Student-t interval.

    Raises TooFewSamples for fewer than two values.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"expected a vector of samples, got shape {arr.shape}")
    n = arr.size
    if n < 2:
        raise TooFewSamples(f"need at least 2 samples for an interval, got {n}")
    if np.all(arr == arr[0]):  # exact zero width, not rounding dust
        return CIStat(n=n, mean=float(arr[0]), half_width=0.0)
    mean = float(arr.mean())
    sd = float(arr.std(ddof=1))
    quantile = float(stats.t.ppf(0.975, n - 1))
    return CIStat(n=n, mean=mean, half_width=quantile * sd / math.sqrt(n))


def _fold_dataset(dataset: Dataset, indices, tag: str) -> Dataset:
    return Dataset(
        name=f"{dataset.name}-{tag}",
        instances=tuple(dataset.instances[i] for i in indices),
    )


def cross_validate(
    config: TrainConfig,
    dataset: Dataset,
    ruleset: RuleSet,
    k: int,
    subset_ruleset: RuleSet | None = None,
) -> CVReport:
    """k-fold CV: train on k-1 folds, score the held-out fold.

    Fold f trains with seed ``config.seed + f`` so folds are
    independent yet reproducible. ``subset_ruleset`` (default: the
    training ruleset) defines subset membership for the per-fold subset
    accuracies; folds where it matches nothing report None there, and
    the subset interval pools only the folds with matches (None when
    fewer than two folds qualify).
    """
    if subset_ruleset is None:
        subset_ruleset = ruleset
    plan = kfold_split(dataset.size, k, config.seed)
    fold_results = []
    for f in range(k):
        train_part = _fold_dataset(dataset, plan.train_indices(f), f"fold{f}-train")
        test_part = _fold_dataset(dataset, plan.test_indices(f), f"fold{f}-test")
        fold_config = dataclasses.replace(config, seed=config.seed + f)
        model = train(fold_config, train_part, dev_set=None, ruleset=ruleset)
        predicted, _ = predict(model, test_part)
        gold = np.array([inst.label for inst in test_part])
        accuracy = float(np.mean(predicted == gold))
        mask = subset_mask(test_part, subset_ruleset)
        subset_size = int(mask.sum())
        subset_accuracy = (
            float(np.mean(predicted[mask] == gold[mask])) if subset_size else None
        )
        fold_results.append(
            FoldResult(
                fold=f,
                test_size=test_part.size,
                accuracy=accuracy,
                subset_size=subset_size,
                subset_accuracy=subset_accuracy,
            )
        )
    whole_ci = ci95([r.accuracy for r in fold_results])
    subset_values = [r.subset_accuracy for r in fold_results if r.subset_accuracy is not None]
    subset_ci = ci95(subset_values) if len(subset_values) >= 2 else None
    return CVReport(
        k=k,
        seed=config.seed,
        folds=tuple(fold_results),
        accuracy=whole_ci,
        subset_accuracy=subset_ci,
    )


def gain_drop(
    config: TrainConfig,
    dataset: Dataset,
    ruleset: RuleSet,
    k: int,
) -> GainDropReport:
    """Effect of a ruleset, isolated by a paired same-seed comparison.

    Runs cross-validation twice from the same seed, once training with
    the rules and once without; fold splits and per-fold seeds are
    identical, so the deltas reflect the rules alone. Subset membership
    comes from the analysis ruleset in both arms.
    """
    with_rules = cross_validate(config, dataset, ruleset, k, subset_ruleset=ruleset)
    without_rules = cross_validate(config, dataset, EMPTY_RULESET, k, subset_ruleset=ruleset)
    fold_whole = tuple(
        on.accuracy - off.accuracy
        for on, off in zip(with_rules.folds, without_rules.folds)
    )
    fold_subset = tuple(
        None if on.subset_accuracy is None or off.subset_accuracy is None
        else on.subset_accuracy - off.subset_accuracy
        for on, off in zip(with_rules.folds, without_rules.folds)
    )
    subset_delta = (
        None
        if with_rules.subset_accuracy is None or without_rules.subset_accuracy is None
        else with_rules.subset_accuracy.mean - without_rules.subset_accuracy.mean
    )
    return GainDropReport(
        rule_names=ruleset.names,
        with_rules=with_rules,
        without_rules=without_rules,
        whole_delta=with_rules.accuracy.mean - without_rules.accuracy.mean,
        subset_delta=subset_delta,
        fold_whole_deltas=fold_whole,
        fold_subset_deltas=fold_subset,
    )
