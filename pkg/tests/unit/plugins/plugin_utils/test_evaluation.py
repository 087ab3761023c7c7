# Copyright (c) 2024, ZPE Systems <zpesystems.com>
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

import csv
import json
import os
import pytest
import sys

from dataclasses import replace

if not sys.warnoptions:
    import warnings

    warnings.simplefilter("ignore")

from ansible_collections.zpe.textcnn.plugins.plugin_utils import evaluation
from ansible_collections.zpe.textcnn.plugins.plugin_utils.core_math import make_rng
from ansible_collections.zpe.textcnn.plugins.plugin_utils.datasets import (
    KFoldSplit,
    filter_short,
    make_splits,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.errors import (
    MissingDependencyError,
    TextCNNError,
    UsageError,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.evaluation import (
    DEFAULT_LAMBDA_GRID,
    DataSplit,
    GridResult,
    Summary,
    Trial,
    TrialResult,
    best_lambda_entry,
    cross_validate,
    format_lambda,
    format_lambdas,
    grid_search,
    lambda_arity,
    parse_lambda,
    repeat_runs,
    run_trial,
    spec_for,
    tune_and_repeat,
    write_best_lambda_json,
    write_results_csv,
    write_summary_csv,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.synthetic import make_synthetic
from ansible_collections.zpe.textcnn.plugins.plugin_utils.training import (
    RegularizationSpec,
    TrainConfig,
)

SLOW_TESTS_ENV = "TEXTCNN_SLOW_TESTS"


@pytest.fixture(scope="module")
def synthetic():
    return make_synthetic("group_informative", {"train": 40, "dev": 20, "test": 20}, dims=(5, 5), rng=make_rng(0))


@pytest.fixture(scope="function")
def trial(synthetic):
    return Trial(
        variant="mgnc",
        groups=tuple(synthetic.groups),
        vocab=synthetic.vocab,
        n_classes=2,
        data=DataSplit(synthetic.train, synthetic.dev, synthetic.test),
        config=TrainConfig(heights=(2,), maps=3, batch_size=10, epochs=1),
        spec=RegularizationSpec("per_group", lambdas=(3.0, 3.0)),
    )


def _fake_trial_runner(score):
    """run_trial stand-in scoring by the trial's lambdas, recording every call."""
    calls = []

    def fake(trial, seed, split):
        calls.append((trial, seed, split))
        value = score(trial.spec.lambdas, seed)
        if value is None:
            return None, f"seed {seed} failed"
        result = TrialResult(trial.variant, trial.group_names, trial.spec.lambdas, seed, trial.fold, "accuracy", value)
        return result, None

    fake.calls = calls
    return fake


""" Tests for lambda formatting """


@pytest.mark.parametrize(
    ("value", "expected"),
    [(1.0 / 3.0, "1/3"), (3.0, "3"), (0.5, "1/2"), (243.0, "243"), (0.123456789, "0.123456789")],
)
def test_format_lambda(value, expected):
    assert format_lambda(value) == expected


def test_format_lambdas_tuple():
    assert format_lambdas((1.0 / 3.0, 9.0)) == "(1/3,9)"
    assert format_lambdas((3.0,)) == "3"


@pytest.mark.parametrize(("text", "expected"), [("1/3", 1.0 / 3.0), ("9", 9.0), (" 0.5 ", 0.5)])
def test_parse_lambda(text, expected):
    assert parse_lambda(text) == pytest.approx(expected)


@pytest.mark.parametrize("text", ["abc", "1/0", ""])
def test_parse_lambda_invalid(text):
    with pytest.raises(UsageError):
        parse_lambda(text)


""" Tests for lambda formatting """


""" Tests for Summary """


def test_summary_from_values():
    summary = Summary.from_values([0.9552, 0.946, 0.966], requested=5)
    assert summary.n == 3
    assert summary.requested == 5
    assert summary.mean == pytest.approx(0.95573333)
    assert summary.cell() == "95.57 (94.60,96.60)"


def test_summary_no_values():
    with pytest.raises(TextCNNError):
        Summary.from_values([])


""" Tests for Summary """


""" Tests for variant helpers """


@pytest.mark.parametrize(("variant", "expected"), [("mgnc", 3), ("mg", 1), ("ccnn", 1), ("cnn", 1)])
def test_lambda_arity(variant, expected):
    assert lambda_arity(variant, 3) == expected


def test_spec_for_modes():
    base = RegularizationSpec(target="activations", dropout_p=0.3)

    mgnc = spec_for("mgnc", base, (1.0, 9.0))
    assert mgnc.mode == "per_group"
    assert mgnc.lambdas == (1.0, 9.0)
    assert mgnc.target == "activations"
    assert mgnc.dropout_p == 0.3

    assert spec_for("mg", base, (9.0,)).mode == "single_lambda"


""" Tests for variant helpers """


""" Tests for run_trial """


def test_run_trial(trial):
    result, err = run_trial(trial, seed=4)
    assert err is None
    assert result.seed == 4
    assert result.groups == "informative+noise"
    assert result.lambdas == (3.0, 3.0)
    assert 0.0 <= result.value <= 1.0


def test_run_trial_deterministic(trial):
    a, _ = run_trial(trial, seed=1, split="dev")
    b, _ = run_trial(trial, seed=1, split="dev")
    assert a == b


def test_run_trial_failure_is_reported(trial):
    """A trial that cannot train returns a reason instead of raising."""
    bad = replace(trial, data=DataSplit([], trial.data.dev, trial.data.test))
    result, err = run_trial(bad, seed=0)
    assert result is None
    assert "seed 0" in err


""" Tests for run_trial """


""" Tests for repeat_runs """


def test_repeat_runs_seeds(monkeypatch, trial):
    fake = _fake_trial_runner(lambda lambdas, seed: 0.5 + seed / 100)
    monkeypatch.setattr(evaluation, "run_trial", fake)

    repeated = repeat_runs(trial, n=3, base_seed=10)

    assert [c[1] for c in fake.calls] == [10, 11, 12]
    assert all(c[2] == "test" for c in fake.calls)
    assert repeated.summary.mean == pytest.approx(0.61)
    assert repeated.summary.n == 3


def test_repeat_runs_skips_failures(monkeypatch, trial):
    fake = _fake_trial_runner(lambda lambdas, seed: None if seed == 1 else 0.8)
    monkeypatch.setattr(evaluation, "run_trial", fake)

    repeated = repeat_runs(trial, n=3)

    assert repeated.summary.n == 2
    assert repeated.summary.requested == 3
    assert repeated.skipped == ["seed 1 failed"]


def test_repeat_runs_invalid_count(trial):
    with pytest.raises(UsageError):
        repeat_runs(trial, n=0)


""" Tests for repeat_runs """


""" Tests for grid_search """


def test_grid_search_cartesian_product(monkeypatch, trial):
    """MGNC with two groups evaluates every pair of grid values on dev."""
    fake = _fake_trial_runner(lambda lambdas, seed: 0.5)
    monkeypatch.setattr(evaluation, "run_trial", fake)

    tuned = grid_search(trial, DEFAULT_LAMBDA_GRID)

    assert tuned.evaluations == 36
    assert len(tuned.scores) == 36
    assert all(c[2] == "dev" for c in fake.calls)


def test_grid_search_picks_best(monkeypatch, trial):
    fake = _fake_trial_runner(lambda lambdas, seed: 0.9 if lambdas == (9.0, 1.0) else 0.6)
    monkeypatch.setattr(evaluation, "run_trial", fake)

    tuned = grid_search(trial, [1.0, 9.0, 3.0])

    assert tuned.best == (9.0, 1.0)
    assert tuned.best_score == pytest.approx(0.9)


def test_grid_search_tie_goes_to_smaller_tuple(monkeypatch, trial):
    fake = _fake_trial_runner(lambda lambdas, seed: 0.7 if lambdas in ((3.0, 1.0), (1.0, 9.0)) else 0.1)
    monkeypatch.setattr(evaluation, "run_trial", fake)

    assert grid_search(trial, [1.0, 3.0, 9.0]).best == (1.0, 9.0)


def test_grid_search_single_lambda_for_mg(monkeypatch, trial):
    fake = _fake_trial_runner(lambda lambdas, seed: lambdas[0] / 100)
    monkeypatch.setattr(evaluation, "run_trial", fake)

    tuned = grid_search(replace(trial, variant="mg"), [1.0, 9.0, 3.0, 9.0])

    assert tuned.evaluations == 3
    assert tuned.best == (9.0,)


def test_grid_search_averages_dev_repeats(monkeypatch, trial):
    fake = _fake_trial_runner(lambda lambdas, seed: 1.0 if seed == 0 else 0.0)
    monkeypatch.setattr(evaluation, "run_trial", fake)

    tuned = grid_search(replace(trial, variant="mg"), [3.0], dev_repeats=4)

    assert tuned.evaluations == 4
    assert tuned.scores[(3.0,)] == pytest.approx(0.25)


def test_grid_search_all_failed(monkeypatch, trial):
    monkeypatch.setattr(evaluation, "run_trial", _fake_trial_runner(lambda lambdas, seed: None))
    with pytest.raises(TextCNNError):
        grid_search(trial, [1.0])


@pytest.mark.parametrize("grid", [[], [0.0, 1.0]])
def test_grid_search_invalid_grid(trial, grid):
    with pytest.raises(UsageError):
        grid_search(trial, grid)


def test_grid_search_needs_dev(trial):
    with pytest.raises(UsageError):
        grid_search(replace(trial, data=DataSplit(trial.data.train, [], trial.data.test)), [1.0])


def test_tune_and_repeat_uses_best(monkeypatch, trial):
    fake = _fake_trial_runner(lambda lambdas, seed: 0.9 if lambdas == (3.0, 9.0) else 0.5)
    monkeypatch.setattr(evaluation, "run_trial", fake)

    tuned, repeated = tune_and_repeat(trial, [3.0, 9.0], n=2)

    assert tuned.best == (3.0, 9.0)
    assert all(r.lambdas == (3.0, 9.0) for r in repeated.results)
    assert repeated.summary.n == 2


def test_tune_and_repeat_final_train(monkeypatch, trial, synthetic):
    """Repetitions train on the given whole training data and keep no dev split."""
    fake = _fake_trial_runner(lambda lambdas, seed: 0.5)
    monkeypatch.setattr(evaluation, "run_trial", fake)
    whole = synthetic.train + synthetic.dev

    tune_and_repeat(trial, [3.0], n=2, final_train=whole)

    tuning = [c[0] for c in fake.calls if c[2] == "dev"]
    finals = [c[0] for c in fake.calls if c[2] == "test"]
    assert all(len(t.data.train) == len(synthetic.train) for t in tuning)
    assert len(finals) == 2
    for final in finals:
        assert final.data.train == whole
        assert final.data.dev == []
        assert final.data.test == synthetic.test


def test_grid_search_parallel_matches_sequential(trial):
    pytest.importorskip("joblib")
    grid = (1.0, 9.0)

    sequential = grid_search(trial, grid, dev_repeats=2, parallel=1)
    parallel = grid_search(trial, grid, dev_repeats=2, parallel=2)

    assert parallel.best == sequential.best
    assert parallel.scores == sequential.scores
    assert parallel.results == sequential.results


@pytest.mark.skipif(
    os.environ.get(SLOW_TESTS_ENV) != "1", reason=f"long running, set {SLOW_TESTS_ENV}=1 to run"
)
def test_grid_search_per_group_bounds_keep_up_with_single_bound():
    """MGNC tuned over the full grid stays within one accuracy point of tuned MG on dev over 10 seeds."""
    pytest.importorskip("joblib")
    data = make_synthetic("group_informative", rng=make_rng(0))
    base = Trial(
        variant="mg",
        groups=tuple(data.groups),
        vocab=data.vocab,
        n_classes=2,
        data=DataSplit(data.train, data.dev, data.test),
        config=TrainConfig(epochs=10),
        spec=RegularizationSpec(),
    )
    means = {}
    for variant in ("mg", "mgnc"):
        variant_trial = replace(base, variant=variant)
        tuned = grid_search(variant_trial, DEFAULT_LAMBDA_GRID, parallel=4)
        if variant == "mgnc":
            assert tuned.evaluations == 36
            assert len(tuned.scores) == 36
        best_trial = replace(variant_trial, spec=spec_for(variant, variant_trial.spec, tuned.best))
        outcomes = [run_trial(best_trial, seed, "dev") for seed in range(10)]
        assert all(err is None for _, err in outcomes)
        means[variant] = Summary.from_values([result.value for result, _ in outcomes]).mean

    assert means["mgnc"] >= means["mg"] - 0.01


""" Tests for grid_search """


""" Tests for cross_validate """


def test_cross_validate_retrains_on_train_and_dev(monkeypatch, trial, synthetic):
    fake = _fake_trial_runner(lambda lambdas, seed: 0.8 if lambdas == (1.0, 1.0) else 0.4)
    monkeypatch.setattr(evaluation, "run_trial", fake)
    examples = synthetic.train + synthetic.dev
    plan = make_splits(len(examples), KFoldSplit(k=3, dev_fraction=0.2), seed=0)

    cv = cross_validate(trial, examples, plan, [1.0, 3.0])

    assert cv.best_lambdas == [(1.0, 1.0)] * 3
    assert [r.fold for r in cv.results] == [0, 1, 2]
    assert cv.summary.n == 3

    finals = [c[0] for c in fake.calls if c[2] == "test"]
    assert len(finals) == 3
    for final, fold in zip(finals, plan.folds):
        assert final.data.dev == []
        assert len(final.data.train) == len(fold.train) + len(fold.dev)
        assert len(final.data.test) == len(fold.test)


def test_cross_validate_prepares_training_portion(monkeypatch, trial, synthetic):
    fake = _fake_trial_runner(lambda lambdas, seed: 0.5)
    monkeypatch.setattr(evaluation, "run_trial", fake)
    examples = synthetic.train
    plan = make_splits(len(examples), KFoldSplit(k=2, dev_fraction=0.25), seed=0)

    cross_validate(replace(trial, variant="mg"), examples, plan, [3.0], prepare_train=lambda part: part[:5])

    tuning = [c[0] for c in fake.calls if c[2] == "dev"]
    assert all(len(t.data.train) == 5 for t in tuning)



def test_cross_validate_prepares_final_training_portion(monkeypatch, trial, synthetic):
    """The retrain set follows the training-portion rules, dev examples included."""
    fake = _fake_trial_runner(lambda lambdas, seed: 0.5)
    monkeypatch.setattr(evaluation, "run_trial", fake)
    examples = synthetic.train + synthetic.dev
    plan = make_splits(len(examples), KFoldSplit(k=2, dev_fraction=0.25), seed=0)

    cross_validate(trial, examples, plan, [3.0], prepare_train=lambda part: filter_short(part, 8))

    finals = [c[0] for c in fake.calls if c[2] == "test"]
    for final, fold in zip(finals, plan.folds):
        expected = filter_short([examples[i] for i in list(fold.train) + list(fold.dev)], 8)
        assert final.data.train == expected
        assert all(e.length >= 8 for e in final.data.train)


""" Tests for cross_validate """


""" Tests for _dispatch """


def test_dispatch_serial_keeps_order():
    assert evaluation._dispatch([(pow, (2, 3)), (pow, (3, 2))], parallel=1) == [8, 9]


def test_dispatch_parallel_keeps_order():
    pytest.importorskip("joblib")
    assert evaluation._dispatch([(pow, (2, 3)), (pow, (3, 2)), (pow, (2, 2))], parallel=2) == [8, 9, 4]


def test_dispatch_parallel_without_joblib(monkeypatch):
    monkeypatch.setattr(evaluation, "HAS_JOBLIB", False)
    with pytest.raises(MissingDependencyError):
        evaluation._dispatch([(pow, (2, 3)), (pow, (3, 2))], parallel=2)


""" Tests for _dispatch """


""" Tests for result files """


def test_results_csv(tmp_path):
    results = [
        TrialResult("mgnc", "w2v+glove", (1.0 / 3.0, 9.0), 0, 0, "accuracy", 0.875),
        TrialResult("mg", "w2v+glove", (3.0,), 1, 2, "auc", 0.5),
    ]
    path = str(tmp_path / "results.csv")

    write_results_csv(path, results)

    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["variant", "groups", "lambda", "seed", "fold", "metric", "value"]
    assert rows[1] == ["mgnc", "w2v+glove", "(1/3,9)", "0", "0", "accuracy", "0.875"]


def test_summary_csv(tmp_path):
    path = str(tmp_path / "summary.csv")
    summary = Summary.from_values([0.5, 1.0])

    write_summary_csv(path, [("sst", "mgnc", "w2v+glove", "accuracy", summary)])

    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    assert rows[0]["cell"] == "75.00 (50.00,100.00)"
    assert rows[0]["n"] == "2"


def test_best_lambda_json(tmp_path, trial):
    tuned = GridResult(best=(1.0 / 3.0, 3.0), scores={(1.0 / 3.0, 3.0): 0.8}, results=[], evaluations=4)
    path = str(tmp_path / "best_lambda.json")

    write_best_lambda_json(path, [best_lambda_entry("synthetic", trial, tuned)])

    with open(path) as f:
        content = json.load(f)
    assert content[0]["lambda"] == "(1/3,3)"
    assert content[0]["groups"] == "informative+noise"
    assert content[0]["dev_score"] == 0.8


""" Tests for result files """
