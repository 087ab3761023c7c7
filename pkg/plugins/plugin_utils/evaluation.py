#!/usr/bin/env python
# -*- coding: utf-8 -*-

# Copyright (c) 2024, ZPE Systems <zpesystems.com>
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

# Make coding more python3-ish, this is required for contributions to Ansible
from __future__ import absolute_import, division, print_function

__metaclass__ = type

import csv
import itertools
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ansible.utils.display import Display

from ansible_collections.zpe.textcnn.plugins.plugin_utils.core_math import make_rng
from ansible_collections.zpe.textcnn.plugins.plugin_utils.datasets import (
    Example,
    SplitPlan,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.embeddings import (
    EmbeddingGroup,
    Vocabulary,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.errors import (
    MissingDependencyError,
    NumericError,
    TextCNNError,
    UsageError,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.model import (
    Variant,
    init_params,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.training import (
    RegularizationSpec,
    TrainConfig,
    evaluate_examples,
    train,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.types import TrialError
from ansible_collections.zpe.textcnn.plugins.plugin_utils.utils import write_json

try:
    from joblib import Parallel, delayed

    HAS_JOBLIB = True
except ImportError:
    HAS_JOBLIB = False

display = Display()

DEFAULT_LAMBDA_GRID = (1.0 / 3.0, 1.0, 3.0, 9.0, 81.0, 243.0)
DEFAULT_REPETITIONS = 10

RESULTS_HEADER = ["variant", "groups", "lambda", "seed", "fold", "metric", "value"]
SUMMARY_HEADER = ["dataset", "variant", "groups", "metric", "n", "mean", "min", "max", "cell"]


def format_lambda(value: float) -> str:
    """Exact small fractions print as fractions: 1/3, 3, 0.5 -> 1/2."""
    frac = Fraction(value).limit_denominator(1000)
    if abs(float(frac) - value) <= 1e-12 * max(1.0, abs(value)):
        if frac.denominator == 1:
            return str(frac.numerator)
        return f"{frac.numerator}/{frac.denominator}"
    return repr(float(value))


def format_lambdas(values: Sequence[float]) -> str:
    if len(values) == 1:
        return format_lambda(values[0])
    return "(" + ",".join(format_lambda(v) for v in values) + ")"


def parse_lambda(text: str) -> float:
    """Inverse of format_lambda for single values, "1/3" included."""
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"Invalid lambda value: {text}.")


@dataclass(frozen=True)
class DataSplit:
    train: List[Example]
    dev: List[Example]
    test: List[Example]


@dataclass(frozen=True)
class Trial:
    """Everything one training run needs apart from its seed."""

    variant: str
    groups: Tuple[EmbeddingGroup, ...]
    vocab: Vocabulary
    n_classes: int
    data: DataSplit
    config: TrainConfig
    spec: RegularizationSpec
    fold: int = 0

    @property
    def group_names(self) -> str:
        return "+".join(g.name for g in self.groups)


@dataclass(frozen=True)
class TrialResult:
    variant: str
    groups: str
    lambdas: Tuple[float, ...]
    seed: int
    fold: int
    metric: str
    value: float

    def as_row(self) -> List[str]:
        return [
            self.variant,
            self.groups,
            format_lambdas(self.lambdas),
            str(self.seed),
            str(self.fold),
            self.metric,
            repr(self.value),
        ]


@dataclass(frozen=True)
class Summary:
    mean: float
    min: float
    max: float
    n: int
    requested: int

    @classmethod
    def from_values(cls, values: Sequence[float], requested: Optional[int] = None) -> "Summary":
        if len(values) == 0:
            raise TextCNNError("Cannot summarize zero successful trials.")

        values = np.asarray(values, dtype=np.float64)
        return cls(
            mean=float(np.mean(values)),
            min=float(np.min(values)),
            max=float(np.max(values)),
            n=len(values),
            requested=len(values) if requested is None else requested,
        )

    def cell(self) -> str:
        """Percentages with two decimals: "95.52 (94.60,96.60)"."""
        return f"{100 * self.mean:.2f} ({100 * self.min:.2f},{100 * self.max:.2f})"


@dataclass
class RepeatResult:
    summary: Summary
    results: List[TrialResult]
    skipped: List[str] = field(default_factory=list)


@dataclass
class GridResult:
    best: Tuple[float, ...]
    scores: Dict[Tuple[float, ...], float]
    results: List[TrialResult]
    evaluations: int
    skipped: List[str] = field(default_factory=list)

    @property
    def best_score(self) -> float:
        return self.scores[self.best]


@dataclass
class CrossValidationResult:
    summary: Summary
    results: List[TrialResult]
    best_lambdas: List[Tuple[float, ...]]
    skipped: List[str] = field(default_factory=list)


def lambda_arity(variant: str, n_groups: int) -> int:
    """One bound per group for MGNC, a single bound otherwise."""
    return n_groups if variant == Variant.MGNC else 1


def spec_for(variant: str, base: RegularizationSpec, lambdas: Sequence[float]) -> RegularizationSpec:
    mode = "per_group" if variant == Variant.MGNC else "single_lambda"
    return replace(base, mode=mode, lambdas=tuple(float(v) for v in lambdas))


def run_trial(trial: Trial, seed: int, split: str = "test") -> TrialError:
    """Initialize with seed, train, and score the chosen split.
    Returns (TrialResult, None), or (None, reason) when the trial failed."""
    try:
        config = replace(trial.config, seed=seed)
        params = init_params(
            trial.groups,
            trial.n_classes,
            trial.variant,
            config.heights,
            config.maps,
            config.activation,
            make_rng(seed),
            config.dtype,
        )
        trained, _ = train(params, trial.data.train, trial.data.dev, trial.vocab, config, trial.spec)
        examples = trial.data.test if split == "test" else trial.data.dev
        value = evaluate_examples(trained, examples, trial.vocab, trial.spec, config.metric, config.batch_size)
    except (NumericError, UsageError) as err:
        return None, f"Trial {trial.variant}({trial.group_names}) seed {seed} fold {trial.fold} failed. Error: {err}"

    result = TrialResult(
        variant=trial.variant,
        groups=trial.group_names,
        lambdas=tuple(trial.spec.lambdas),
        seed=seed,
        fold=trial.fold,
        metric=config.metric,
        value=value,
    )
    return result, None


def _dispatch(calls: List[Tuple[Callable, tuple]], parallel: int = 1) -> list:
    """Run independent calls, in parallel when asked. Output order follows input order."""
    if parallel <= 1 or len(calls) <= 1:
        return [fn(*args) for fn, args in calls]

    if not HAS_JOBLIB:
        raise MissingDependencyError("Parallel trials require joblib. Install joblib or run with parallel 1.")

    return Parallel(n_jobs=parallel)(delayed(fn)(*args) for fn, args in calls)


def repeat_runs(trial: Trial, n: int = DEFAULT_REPETITIONS, base_seed: int = 0, parallel: int = 1) -> RepeatResult:
    """Train and test with seeds base_seed .. base_seed + n - 1. Failed trials are skipped."""
    if n < 1:
        raise UsageError(f"Repetition count must be at least 1. Repetitions: {n}.")

    outcomes = _dispatch([(run_trial, (trial, base_seed + i, "test")) for i in range(n)], parallel)

    results = []
    skipped = []
    for result, err in outcomes:
        if err is not None:
            display.warning(f"TextCNN evaluation - {err}")
            skipped.append(err)
            continue
        results.append(result)

    summary = Summary.from_values([r.value for r in results], requested=n)
    display.v(
        f"TextCNN evaluation - {trial.variant}({trial.group_names}) lambda {format_lambdas(trial.spec.lambdas)} - "
        f"{summary.cell()} over {summary.n} of {n} runs"
    )
    return RepeatResult(summary, results, skipped)


def grid_search(
    trial: Trial,
    grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
    dev_repeats: int = 1,
    base_seed: int = 0,
    parallel: int = 1,
) -> GridResult:
    """Score every lambda tuple of the Cartesian product on the development split.
    Highest mean dev metric wins; ties go to the lexicographically smaller tuple."""
    if len(grid) == 0:
        raise UsageError("Lambda grid must not be empty.")

    if min(grid) <= 0:
        raise UsageError(f"Lambda grid values must be positive. Grid: {list(grid)}.")

    if len(trial.data.dev) == 0:
        raise UsageError("Grid search needs a development split.")

    if dev_repeats < 1:
        raise UsageError(f"Development repeats must be at least 1. Repeats: {dev_repeats}.")

    values = sorted(set(float(v) for v in grid))
    points = list(itertools.product(values, repeat=lambda_arity(trial.variant, len(trial.groups))))

    calls = []
    for point in points:
        point_trial = replace(trial, spec=spec_for(trial.variant, trial.spec, point))
        for r in range(dev_repeats):
            calls.append((run_trial, (point_trial, base_seed + r, "dev")))

    outcomes = _dispatch(calls, parallel)

    per_point = {}
    results = []
    skipped = []
    for (_, (point_trial, _, _)), (result, err) in zip(calls, outcomes):
        if err is not None:
            display.warning(f"TextCNN grid search - {err}")
            skipped.append(err)
            continue
        results.append(result)
        per_point.setdefault(point_trial.spec.lambdas, []).append(result.value)

    if len(per_point) == 0:
        raise TextCNNError(f"Every grid search trial failed for {trial.variant}({trial.group_names}).")

    scores = {point: float(np.mean(v)) for point, v in per_point.items()}
    best = min(scores, key=lambda p: (-scores[p], p))

    display.v(
        f"TextCNN grid search - {trial.variant}({trial.group_names}) fold {trial.fold} - "
        f"best lambda {format_lambdas(best)} dev {scores[best]:.4f} over {len(points)} points"
    )
    return GridResult(best, scores, results, len(calls), skipped)


def tune_and_repeat(
    trial: Trial,
    grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
    n: int = DEFAULT_REPETITIONS,
    dev_repeats: int = 1,
    base_seed: int = 0,
    parallel: int = 1,
    final_train: Optional[Sequence[Example]] = None,
) -> Tuple[GridResult, RepeatResult]:
    """Protocol for corpora with standard splits: tune on dev, then repeat train/test with the best bound.
    final_train, when given, replaces the training split for the repetitions and they run without dev.
    Used when dev was carved from the training data, so the final models see all of it."""
    tuned = grid_search(trial, grid, dev_repeats, base_seed, parallel)
    best_trial = replace(trial, spec=spec_for(trial.variant, trial.spec, tuned.best))
    if final_train is not None:
        best_trial = replace(best_trial, data=DataSplit(list(final_train), [], trial.data.test))
    return tuned, repeat_runs(best_trial, n, base_seed, parallel)


def cross_validate(
    trial: Trial,
    examples: Sequence[Example],
    plan: SplitPlan,
    grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
    dev_repeats: int = 1,
    base_seed: int = 0,
    parallel: int = 1,
    prepare_train: Optional[Callable[[List[Example]], List[Example]]] = None,
) -> CrossValidationResult:
    """Per fold: tune on the nested dev split, retrain on the whole training portion
    with the chosen bound, and score the fold's test split."""
    results = []
    best_lambdas = []
    skipped = []

    for fold_id, fold in enumerate(plan.folds):
        train_part = [examples[i] for i in fold.train]
        dev_part = [examples[i] for i in fold.dev]
        test_part = [examples[i] for i in fold.test]
        whole_train = train_part + dev_part
        if prepare_train is not None:
            train_part = prepare_train(train_part)
            whole_train = prepare_train(whole_train)

        fold_trial = replace(trial, data=DataSplit(train_part, dev_part, test_part), fold=fold_id)
        tuned = grid_search(fold_trial, grid, dev_repeats, base_seed, parallel)
        best_lambdas.append(tuned.best)

        final_trial = replace(
            fold_trial,
            data=DataSplit(whole_train, [], test_part),
            spec=spec_for(trial.variant, trial.spec, tuned.best),
        )
        result, err = run_trial(final_trial, base_seed, "test")
        if err is not None:
            display.warning(f"TextCNN cross validation - {err}")
            skipped.append(err)
            continue

        display.v(f"TextCNN cross validation - fold {fold_id} - {result.metric} {result.value:.4f}")
        results.append(result)

    summary = Summary.from_values([r.value for r in results], requested=len(plan.folds))
    return CrossValidationResult(summary, results, best_lambdas, skipped)


def write_results_csv(path: str, results: Sequence[TrialResult]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(RESULTS_HEADER)
        for r in results:
            writer.writerow(r.as_row())


def write_summary_csv(path: str, rows: Sequence[Tuple[str, str, str, str, Summary]]) -> None:
    """rows: (dataset, variant, groups, metric, summary)."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(SUMMARY_HEADER)
        for dataset, variant, groups, metric, s in rows:
            writer.writerow([dataset, variant, groups, metric, s.n, repr(s.mean), repr(s.min), repr(s.max), s.cell()])


def best_lambda_entry(dataset: str, trial: Trial, tuned: GridResult) -> Dict:
    return {
        "dataset": dataset,
        "variant": trial.variant,
        "groups": trial.group_names,
        "lambda": format_lambdas(tuned.best),
        "lambdas": list(tuned.best),
        "dev_score": tuned.best_score,
        "evaluations": tuned.evaluations,
    }


def write_best_lambda_json(path: str, entries: Sequence[Dict]) -> None:
    _, err = write_json(path, list(entries))
    if err:
        raise TextCNNError(err)
