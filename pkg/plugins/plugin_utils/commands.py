#!/usr/bin/env python
# -*- coding: utf-8 -*-

# Copyright (c) 2024, ZPE Systems <zpesystems.com>
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

# Make coding more python3-ish, this is required for contributions to Ansible
from __future__ import absolute_import, division, print_function

__metaclass__ = type

import copy
import csv
import os
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from ansible.utils.display import Display

from ansible_collections.zpe.textcnn.plugins.plugin_utils.checkpoint import (
    load_checkpoint,
    save_checkpoint,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.core_math import (
    make_rng,
    spawn_rngs,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.datasets import (
    TOKENIZER_MODES,
    Corpus,
    Example,
    FixedSplit,
    KFoldSplit,
    carve_dev,
    filter_short,
    load_tsv,
    make_splits,
    remap_labels,
    undersample_majority,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.embeddings import (
    EmbeddingGroup,
    Vocabulary,
    build_vocabulary,
    load_text_vectors,
    load_word2vec_binary,
    random_group,
    write_text_vectors,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.errors import (
    ConfigValidationError,
    FormatError,
    NumericError,
    TextCNNError,
    UsageError,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.evaluation import (
    DEFAULT_LAMBDA_GRID,
    DataSplit,
    Trial,
    best_lambda_entry,
    cross_validate,
    format_lambda,
    format_lambdas,
    grid_search,
    lambda_arity,
    parse_lambda,
    spec_for,
    tune_and_repeat,
    write_best_lambda_json,
    write_results_csv,
    write_summary_csv,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.gradcheck import (
    TENSOR_CLASSES,
    run_gradcheck,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.jinja_templates import (
    render_report,
    render_table,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.metrics import METRICS
from ansible_collections.zpe.textcnn.plugins.plugin_utils.model import (
    ACTIVATIONS,
    VARIANTS,
    Variant,
    init_params,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.synthetic import (
    DEFAULT_SIZES,
    SYNTHETIC_TASKS,
    make_synthetic,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.training import (
    CONSTRAINT_TARGETS,
    RegularizationSpec,
    TrainConfig,
    evaluate_examples,
    train,
    write_history_csv,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.utils import (
    dump_json,
    ensure_directory,
    read_json,
    read_json_list,
    write_file,
    write_json,
)

display = Display()

EMBEDDING_FORMATS = ("word2vec", "text", "random")
SPLIT_STRATEGIES = ("fixed", "kfold")
GRADCHECK_MODES = ("weights", "activations", "all")

CONFIG_SNAPSHOT = "config.json"
# written into snapshots for reference, ignored when a snapshot is loaded back
SNAPSHOT_ONLY_FIELDS = ("command",)

ENV_OUTPUT_DIR = "TEXTCNN_OUTPUT_DIR"
ENV_PARALLEL = "TEXTCNN_PARALLEL"

CONFIG_DEFAULTS = {
    "name": None,
    "data": None,
    "train": None,
    "dev": None,
    "test": None,
    "tokenizer": "whitespace",
    "label_map": None,
    "min_length": 0,
    "undersample": False,
    "split": "fixed",
    "split_fractions": [0.8, 0.1, 0.1],
    "folds": 10,
    "dev_fraction": 0.1,
    "embeddings": [],
    "variant": Variant.MGNC,
    "allow_single_group": False,
    "heights": [3, 4, 5],
    "maps": 100,
    "batch_size": 50,
    "epochs": 25,
    "patience": None,
    "activation": "relu",
    "precision": "64",
    "metric": "accuracy",
    "dropout": 0.5,
    "constraint_target": "classifier_weights",
    "lambdas": ["3"],
    "lambda_grid": [format_lambda(v) for v in DEFAULT_LAMBDA_GRID],
    "repetitions": 10,
    "dev_repeats": 1,
    "seed": 0,
    "parallel": 1,
    "output_dir": "textcnn-output",
    "checkpoint": None,
    "evaluate_split": "test",
    "gradcheck_mode": "all",
    "synth_task": "separable",
    "synth_sizes": dict(DEFAULT_SIZES),
    "synth_dims": None,
    "report_inputs": [],
}


def parse_embedding_spec(text: str) -> Dict:
    """name=path:format[:frozen], or name=random:dim[:frozen]."""
    if "=" not in text:
        raise ConfigValidationError(f"Field embeddings: expected name=path:format, got {text!r}.")

    name, rest = text.split("=", 1)
    trainable = True
    if rest.endswith(":frozen"):
        trainable = False
        rest = rest[: -len(":frozen")]

    if ":" not in rest:
        raise ConfigValidationError(f"Field embeddings: missing format in {text!r}.")

    path, fmt = rest.rsplit(":", 1)
    if path == "random":
        try:
            dim = int(fmt)
        except ValueError:
            raise ConfigValidationError(f"Field embeddings: random embedding needs a dimension in {text!r}.")
        return {"name": name, "path": None, "format": "random", "dim": dim, "trainable": trainable}

    return {"name": name, "path": path, "format": fmt, "dim": None, "trainable": trainable}


def _fail(field: str, message: str) -> None:
    raise ConfigValidationError(f"Field {field}: {message}")


class ExperimentConfig:
    """Resolved experiment configuration.
    Precedence: explicit overrides, then the configuration file, then environment, then defaults."""

    def __init__(self, data: Optional[Dict] = None) -> None:
        data = {k: v for k, v in (data or {}).items() if k not in SNAPSHOT_ONLY_FIELDS}
        unknown = sorted(set(data) - set(CONFIG_DEFAULTS))
        if unknown:
            raise ConfigValidationError(f"Unknown configuration fields: {', '.join(unknown)}.")

        values = copy.deepcopy(CONFIG_DEFAULTS)
        values.update(copy.deepcopy(data))
        self._values = values
        self._validate()

    @classmethod
    def from_sources(cls, file_data: Optional[Dict] = None, overrides: Optional[Dict] = None) -> "ExperimentConfig":
        merged = {}
        env_output = os.environ.get(ENV_OUTPUT_DIR, None)
        if env_output:
            merged["output_dir"] = env_output

        env_parallel = os.environ.get(ENV_PARALLEL, None)
        if env_parallel:
            try:
                merged["parallel"] = int(env_parallel)
            except ValueError:
                _fail("parallel", f"{ENV_PARALLEL} must be an integer, got {env_parallel!r}.")

        merged.update(file_data or {})
        merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls(merged)

    @classmethod
    def from_file(cls, path: str, overrides: Optional[Dict] = None) -> "ExperimentConfig":
        content, err = read_json(path)
        if err:
            raise ConfigValidationError(f"Field config: {err}")
        return cls.from_sources(content, overrides)

    def __getattr__(self, name: str) -> Any:
        values = self.__dict__.get("_values", {})
        if name in values:
            return values[name]
        raise AttributeError(name)

    def to_dict(self) -> Dict:
        return copy.deepcopy(self._values)

    def replace(self, **changes) -> "ExperimentConfig":
        values = self.to_dict()
        values.update(changes)
        return ExperimentConfig(values)

    def _validate(self) -> None:
        v = self._values

        for name, choices in (
            ("tokenizer", TOKENIZER_MODES),
            ("split", SPLIT_STRATEGIES),
            ("variant", VARIANTS),
            ("activation", ACTIVATIONS),
            ("metric", METRICS),
            ("constraint_target", CONSTRAINT_TARGETS),
            ("evaluate_split", ("dev", "test")),
            ("gradcheck_mode", GRADCHECK_MODES),
            ("synth_task", SYNTHETIC_TASKS),
        ):
            if v[name] not in choices:
                _fail(name, f"must be one of {choices}, got {v[name]!r}.")

        v["precision"] = str(v["precision"])
        if v["precision"] not in ("64", "32"):
            _fail("precision", f"must be 64 or 32, got {v['precision']!r}.")

        for name in ("maps", "batch_size", "epochs", "folds", "repetitions", "dev_repeats", "parallel"):
            if not isinstance(v[name], int) or isinstance(v[name], bool) or v[name] < 1:
                _fail(name, f"must be a positive integer, got {v[name]!r}.")

        for name in ("min_length", "seed"):
            if not isinstance(v[name], int) or isinstance(v[name], bool) or v[name] < 0:
                _fail(name, f"must be a non-negative integer, got {v[name]!r}.")

        if v["patience"] is not None and (not isinstance(v["patience"], int) or v["patience"] < 1):
            _fail("patience", f"must be a positive integer or null, got {v['patience']!r}.")

        if not isinstance(v["heights"], list) or len(v["heights"]) == 0:
            _fail("heights", f"must be a non-empty list, got {v['heights']!r}.")
        if any(not isinstance(h, int) or h < 1 for h in v["heights"]) or len(set(v["heights"])) != len(v["heights"]):
            _fail("heights", f"must hold distinct positive integers, got {v['heights']!r}.")

        if not isinstance(v["dropout"], (int, float)) or not 0 <= v["dropout"] < 1:
            _fail("dropout", f"must be in [0, 1), got {v['dropout']!r}.")

        if not 0 <= v["dev_fraction"] < 1:
            _fail("dev_fraction", f"must be in [0, 1), got {v['dev_fraction']!r}.")

        fractions = v["split_fractions"]
        if not isinstance(fractions, list) or len(fractions) != 3:
            _fail("split_fractions", f"must be [train, dev, test], got {fractions!r}.")
        if min(fractions) < 0 or fractions[0] <= 0 or abs(sum(fractions) - 1.0) > 1e-9:
            _fail("split_fractions", f"must be non-negative, sum to 1, and keep a training portion, got {fractions!r}.")

        v["lambdas"] = self._lambda_list("lambdas", v["lambdas"])
        v["lambda_grid"] = self._lambda_list("lambda_grid", v["lambda_grid"])

        if v["label_map"] is not None and not isinstance(v["label_map"], dict):
            _fail("label_map", "must be an object mapping label names to new names or null.")

        if not isinstance(v["embeddings"], list):
            _fail("embeddings", "must be a list.")
        v["embeddings"] = [self._embedding(i, e) for i, e in enumerate(v["embeddings"])]
        names = [e["name"] for e in v["embeddings"]]
        if len(set(names)) != len(names):
            _fail("embeddings", f"group names must be unique, got {names}.")

        if not isinstance(v["synth_sizes"], dict) or any(
            not isinstance(v["synth_sizes"].get(k), int) or v["synth_sizes"][k] < 1 for k in DEFAULT_SIZES
        ):
            _fail("synth_sizes", f"must give positive train, dev and test sizes, got {v['synth_sizes']!r}.")

        if v["synth_dims"] is not None and (
            not isinstance(v["synth_dims"], list) or any(not isinstance(d, int) or d < 1 for d in v["synth_dims"])
        ):
            _fail("synth_dims", f"must be a list of positive integers or null, got {v['synth_dims']!r}.")

        if not isinstance(v["report_inputs"], list):
            _fail("report_inputs", "must be a list of result directories.")

        if not v["output_dir"]:
            _fail("output_dir", "must not be empty.")

        try:
            self.train_config()
            self.base_spec()
        except UsageError as err:
            raise ConfigValidationError(f"Invalid training configuration. {err}")

    def _lambda_list(self, field: str, values) -> List[str]:
        if not isinstance(values, list) or len(values) == 0:
            _fail(field, f"must be a non-empty list, got {values!r}.")

        parsed = []
        for value in values:
            try:
                lam = parse_lambda(str(value))
            except UsageError:
                _fail(field, f"invalid value {value!r}.")
            if lam <= 0:
                _fail(field, f"values must be positive, got {value!r}.")
            parsed.append(format_lambda(lam))
        return parsed

    def _embedding(self, position: int, entry) -> Dict:
        field = f"embeddings[{position}]"
        if isinstance(entry, str):
            entry = parse_embedding_spec(entry)
        if not isinstance(entry, dict):
            _fail(field, "must be an object or a name=path:format string.")

        resolved = {"name": None, "path": None, "format": None, "dim": None, "trainable": True}
        unknown = set(entry) - set(resolved)
        if unknown:
            _fail(field, f"unknown keys {sorted(unknown)}.")
        resolved.update(entry)

        if not resolved["name"]:
            _fail(field, "needs a name.")
        if resolved["format"] not in EMBEDDING_FORMATS:
            _fail(field, f"format must be one of {EMBEDDING_FORMATS}, got {resolved['format']!r}.")
        if resolved["format"] == "random":
            if not isinstance(resolved["dim"], int) or resolved["dim"] < 1:
                _fail(field, "random embeddings need a positive dim.")
        elif not resolved["path"]:
            _fail(field, "needs a path.")
        resolved["trainable"] = bool(resolved["trainable"])
        return resolved

    def lambda_values(self) -> Tuple[float, ...]:
        return tuple(parse_lambda(s) for s in self.lambdas)

    def grid_values(self) -> Tuple[float, ...]:
        return tuple(parse_lambda(s) for s in self.lambda_grid)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            heights=tuple(self.heights),
            maps=self.maps,
            batch_size=self.batch_size,
            epochs=self.epochs,
            activation=self.activation,
            seed=self.seed,
            precision=self.precision,
            patience=self.patience,
            metric=self.metric,
        )

    def base_spec(self) -> RegularizationSpec:
        return RegularizationSpec(
            mode="single_lambda",
            target=self.constraint_target,
            lambdas=(self.lambda_values()[0],),
            dropout_p=float(self.dropout),
        )

    def regularization_spec(self, n_groups: int) -> RegularizationSpec:
        """Bounds from the lambdas field. A single value is used for every group under MGNC."""
        lambdas = self.lambda_values()
        arity = lambda_arity(self.variant, n_groups)
        if len(lambdas) == 1:
            lambdas = lambdas * arity
        if len(lambdas) != arity:
            _fail("lambdas", f"variant {self.variant} with {n_groups} groups needs {arity} values, got {len(lambdas)}.")
        return spec_for(self.variant, self.base_spec(), lambdas)

    def check_readable(self, embeddings: bool = True) -> None:
        for name in ("data", "train", "dev", "test"):
            path = self._values[name]
            if path is not None and not os.access(path, os.R_OK):
                _fail(name, f"file {path} is not readable.")
        for i, e in enumerate(self.embeddings if embeddings else []):
            if e["format"] != "random" and not os.access(e["path"], os.R_OK):
                _fail(f"embeddings[{i}]", f"file {e['path']} is not readable.")

    def check_groups(self) -> None:
        m = len(self.embeddings)
        if m == 0:
            _fail("embeddings", "at least one embedding group is required.")
        if self.variant == Variant.CNN and m != 1:
            _fail("variant", f"cnn uses exactly one embedding group, {m} configured.")
        if self.variant == Variant.CCNN and m < 2:
            _fail("variant", "ccnn concatenates at least two embedding groups.")
        if self.variant == Variant.MGNC and m < 2 and not self.allow_single_group:
            _fail("variant", "mgnc needs at least two embedding groups, or allow_single_group.")
        if self.variant == Variant.MG and m == 1:
            display.warning("TextCNN config - mg with one embedding group behaves as cnn.")


@dataclass
class ExperimentData:
    name: str
    label_names: List[str]
    vocab: Vocabulary
    groups: List[EmbeddingGroup]
    split: DataSplit
    examples: List[Example]
    # prepared train + dev when dev was carved from the training data, else None
    whole_train: Optional[List[Example]] = None


def _prepare_train(cfg: ExperimentConfig) -> Callable[[List[Example]], List[Example]]:
    """Filtering and undersampling, applied to training portions only."""

    def prepare(examples: List[Example]) -> List[Example]:
        if cfg.min_length > 0:
            examples = filter_short(examples, cfg.min_length)
        if cfg.undersample:
            examples = undersample_majority(examples, spawn_rngs(cfg.seed, 1)[0])
        if len(examples) == 0:
            raise UsageError("Training split is empty after filtering.")
        return examples

    return prepare


def _load_parts(cfg: ExperimentConfig) -> Tuple[Dict[str, List[Example]], List[str]]:
    corpus = Corpus()
    parts = {}
    names = ("data",) if cfg.data else ("train", "dev", "test")
    for name in names:
        path = getattr(cfg, name)
        if path is None:
            continue
        start = len(corpus.examples)
        load_tsv(path, cfg.tokenizer, corpus)
        parts[name] = corpus.examples[start:]

    label_names = list(corpus.label_names)
    if cfg.label_map is not None:
        for name in parts:
            parts[name], new_names = remap_labels(parts[name], label_names, cfg.label_map)
        label_names = new_names

    return parts, label_names


def load_experiment_data(cfg: ExperimentConfig, with_groups: bool = True) -> ExperimentData:
    """Read the corpus, build the vocabulary over every loaded example, load embeddings, and split."""
    if bool(cfg.data) == bool(cfg.train):
        _fail("data", "give either data (one file to split) or train (with optional dev and test files).")

    cfg.check_readable(embeddings=with_groups)
    if with_groups:
        cfg.check_groups()

    parts, label_names = _load_parts(cfg)
    if len(label_names) < 2:
        _fail("data", f"classification needs at least two labels, found {label_names}.")
    if cfg.metric == "auc" and len(label_names) != 2:
        _fail("metric", f"auc requires binary labels, found {len(label_names)} classes.")

    all_examples = [e for part in parts.values() for e in part]
    vocab = build_vocabulary(e.tokens for e in all_examples)

    groups = []
    if with_groups:
        rng = make_rng(cfg.seed)
        dtype = cfg.train_config().dtype
        for e in cfg.embeddings:
            if e["format"] == "word2vec":
                groups.append(load_word2vec_binary(e["path"], vocab, rng, e["name"], e["trainable"], dtype))
            elif e["format"] == "text":
                groups.append(load_text_vectors(e["path"], vocab, rng, e["name"], e["trainable"], dtype))
            else:
                groups.append(random_group(e["name"], vocab, e["dim"], rng, e["trainable"], dtype))

    if cfg.data:
        examples = parts["data"]
        if cfg.split == "kfold":
            plan = make_splits(len(examples), KFoldSplit(cfg.folds, cfg.dev_fraction), cfg.seed)
        else:
            plan = make_splits(len(examples), FixedSplit(*cfg.split_fractions), cfg.seed)
        fold = plan.folds[0]
        train_part = [examples[i] for i in fold.train]
        dev_part = [examples[i] for i in fold.dev]
        test_part = [examples[i] for i in fold.test]
        carved = True
    else:
        examples = parts["train"]
        carved = "dev" not in parts
        if not carved:
            train_part, dev_part = examples, parts["dev"]
        else:
            train_idx, dev_idx = carve_dev(np.arange(len(examples)), cfg.dev_fraction, cfg.seed)
            train_part = [examples[i] for i in train_idx]
            dev_part = [examples[i] for i in dev_idx]
        test_part = parts.get("test", [])

    prepare = _prepare_train(cfg)
    split = DataSplit(prepare(train_part), dev_part, test_part)
    whole_train = prepare(train_part + dev_part) if carved and len(dev_part) > 0 else None
    display.v(
        f"TextCNN data - {len(split.train)} train, {len(split.dev)} dev, {len(split.test)} test examples, "
        f"{len(vocab) - 1} words, {len(label_names)} labels"
    )

    name = cfg.name or os.path.splitext(os.path.basename(cfg.data or cfg.train))[0]
    return ExperimentData(name, label_names, vocab, groups, split, examples, whole_train)


def build_trial(cfg: ExperimentConfig, data: ExperimentData) -> Trial:
    return Trial(
        variant=cfg.variant,
        groups=tuple(data.groups),
        vocab=data.vocab,
        n_classes=len(data.label_names),
        data=data.split,
        config=cfg.train_config(),
        spec=cfg.regularization_spec(len(data.groups)),
    )


def _output_dir(cfg: ExperimentConfig) -> str:
    _, err = ensure_directory(cfg.output_dir)
    if err:
        raise TextCNNError(err)
    return cfg.output_dir


def _write_json(path: str, content: Any) -> None:
    _, err = write_json(path, content)
    if err:
        raise TextCNNError(err)


def write_snapshot(cfg: ExperimentConfig, command: str) -> str:
    """Resolved configuration that reproduces the command's outputs."""
    path = os.path.join(_output_dir(cfg), CONFIG_SNAPSHOT)
    snapshot = cfg.to_dict()
    snapshot["command"] = command
    _write_json(path, snapshot)
    return path


def cmd_train(cfg: ExperimentConfig) -> Dict:
    """Train once. Writes the checkpoint, the history CSV and the configuration snapshot."""
    data = load_experiment_data(cfg)
    trial = build_trial(cfg, data)
    out = _output_dir(cfg)
    snapshot = write_snapshot(cfg, "train")

    params = init_params(
        trial.groups,
        trial.n_classes,
        trial.variant,
        trial.config.heights,
        trial.config.maps,
        trial.config.activation,
        make_rng(cfg.seed),
        trial.config.dtype,
    )
    trained, history = train(params, data.split.train, data.split.dev, data.vocab, trial.config, trial.spec)

    checkpoint = cfg.checkpoint or os.path.join(out, "model.npz")
    save_checkpoint(checkpoint, trained, data.vocab, data.label_names, cfg.to_dict())
    history_path = os.path.join(out, "history.csv")
    write_history_csv(history_path, history)

    result = {
        "checkpoint": checkpoint,
        "history": history_path,
        "config": snapshot,
        "best_epoch": history.best_epoch,
        "dev_metric": history.best_dev_metric,
        "metric": cfg.metric,
    }
    if len(data.split.test) > 0:
        result["test_metric"] = evaluate_examples(
            trained, data.split.test, data.vocab, trial.spec, cfg.metric, cfg.batch_size
        )

    display.v(f"TextCNN train - best epoch {history.best_epoch} - dev {cfg.metric} {history.best_dev_metric}")
    return result


def _align_to_checkpoint(
    examples: List[Example], label_names: List[str], vocab: Vocabulary, labels: List[str]
) -> List[Example]:
    """Re-index labels by name and drop words the checkpoint never saw."""
    label_index = {name: i for i, name in enumerate(labels)}
    unknown = sorted(set(label_names) - set(label_index))
    if unknown:
        raise UsageError(f"Labels {unknown} are unknown to the checkpoint. Checkpoint labels: {labels}.")

    aligned = []
    dropped = 0
    for e in examples:
        tokens = tuple(t for t in e.tokens if t in vocab)
        dropped += len(e.tokens) - len(tokens)
        if tokens:
            aligned.append(Example(tokens, label_index[label_names[e.label]]))

    if dropped:
        display.warning(f"TextCNN evaluate - {dropped} tokens unknown to the checkpoint were dropped.")
    return aligned


def cmd_evaluate(cfg: ExperimentConfig) -> Dict:
    """Score a checkpoint on the test (or dev) split of the configured data."""
    if not cfg.checkpoint:
        _fail("checkpoint", "evaluate needs a checkpoint path.")
    if not os.access(cfg.checkpoint, os.R_OK):
        _fail("checkpoint", f"file {cfg.checkpoint} is not readable.")

    params, vocab, labels, saved = load_checkpoint(cfg.checkpoint)
    data = load_experiment_data(cfg, with_groups=False)
    snapshot = write_snapshot(cfg, "evaluate")

    saved_cfg = ExperimentConfig(saved) if saved else cfg
    spec = saved_cfg.regularization_spec(len(params.groups))

    examples = data.split.test if cfg.evaluate_split == "test" else data.split.dev
    examples = _align_to_checkpoint(examples, data.label_names, vocab, labels)
    if len(examples) == 0:
        _fail("evaluate_split", f"the {cfg.evaluate_split} split is empty.")

    value = evaluate_examples(params, examples, vocab, spec, cfg.metric, cfg.batch_size)
    metrics = {"split": cfg.evaluate_split, "metric": cfg.metric, "value": value, "examples": len(examples)}
    metrics_path = os.path.join(_output_dir(cfg), "metrics.json")
    _write_json(metrics_path, metrics)

    display.v(f"TextCNN evaluate - {cfg.metric} on {cfg.evaluate_split}: {value:.4f}")
    return dict(metrics, metrics_file=metrics_path, config=snapshot)


def _write_grid_csv(path: str, scores: Dict[Tuple[float, ...], float]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["lambda", "dev_metric"])
        for point in sorted(scores):
            writer.writerow([format_lambdas(point), repr(scores[point])])


def cmd_gridsearch(cfg: ExperimentConfig) -> Dict:
    """Tune the max-norm bounds on the development split."""
    data = load_experiment_data(cfg)
    trial = build_trial(cfg, data)
    out = _output_dir(cfg)
    snapshot = write_snapshot(cfg, "gridsearch")

    tuned = grid_search(trial, cfg.grid_values(), cfg.dev_repeats, cfg.seed, cfg.parallel)

    results_path = os.path.join(out, "results.csv")
    write_results_csv(results_path, tuned.results)
    grid_path = os.path.join(out, "grid.csv")
    _write_grid_csv(grid_path, tuned.scores)
    best_path = os.path.join(out, "best_lambda.json")
    write_best_lambda_json(best_path, [best_lambda_entry(data.name, trial, tuned)])

    return {
        "best_lambda": format_lambdas(tuned.best),
        "dev_metric": tuned.best_score,
        "evaluations": tuned.evaluations,
        "skipped": len(tuned.skipped),
        "results": results_path,
        "grid": grid_path,
        "best_lambda_file": best_path,
        "config": snapshot,
    }


def cmd_cv(cfg: ExperimentConfig) -> Dict:
    """k-fold cross validation with nested tuning, or tune-then-repeat on fixed splits."""
    data = load_experiment_data(cfg)
    trial = build_trial(cfg, data)
    out = _output_dir(cfg)
    snapshot = write_snapshot(cfg, "cv")
    grid = cfg.grid_values()

    if cfg.data and cfg.split == "kfold":
        plan = make_splits(len(data.examples), KFoldSplit(cfg.folds, cfg.dev_fraction), cfg.seed)
        cv = cross_validate(
            trial, data.examples, plan, grid, cfg.dev_repeats, cfg.seed, cfg.parallel, _prepare_train(cfg)
        )
        summary, results = cv.summary, cv.results
        best_entries = [
            {
                "dataset": data.name,
                "variant": trial.variant,
                "groups": trial.group_names,
                "fold": fold_id,
                "lambda": format_lambdas(best),
                "lambdas": list(best),
            }
            for fold_id, best in enumerate(cv.best_lambdas)
        ]
    else:
        tuned, repeated = tune_and_repeat(
            trial, grid, cfg.repetitions, cfg.dev_repeats, cfg.seed, cfg.parallel, data.whole_train
        )
        summary, results = repeated.summary, repeated.results
        best_entries = [best_lambda_entry(data.name, trial, tuned)]

    results_path = os.path.join(out, "results.csv")
    write_results_csv(results_path, results)
    summary_path = os.path.join(out, "summary.csv")
    write_summary_csv(summary_path, [(data.name, trial.variant, trial.group_names, cfg.metric, summary)])
    best_path = os.path.join(out, "best_lambda.json")
    write_best_lambda_json(best_path, best_entries)

    display.v(f"TextCNN cv - {trial.variant}({trial.group_names}) on {data.name}: {summary.cell()}")
    return {
        "summary": summary.cell(),
        "mean": summary.mean,
        "n": summary.n,
        "requested": summary.requested,
        "results": results_path,
        "summary_file": summary_path,
        "best_lambda_file": best_path,
        "config": snapshot,
    }


def cmd_gradcheck(cfg: ExperimentConfig) -> Dict:
    """Backward against central differences on a tiny random model, in 64-bit."""
    if cfg.precision != "64":
        _fail("precision", "gradient check requires 64-bit precision.")

    out = _output_dir(cfg)
    snapshot = write_snapshot(cfg, "gradcheck")

    targets = {
        "weights": ["classifier_weights"],
        "activations": ["activations"],
        "all": ["classifier_weights", "activations"],
    }[cfg.gradcheck_mode]

    report = {}
    failures = []
    for target in targets:
        checked = run_gradcheck(target=target, seed=cfg.seed, activation=cfg.activation)
        report[target] = {
            "passed": checked.passed,
            "errors": {c: checked.errors.get(c, 0.0) for c in TENSOR_CLASSES},
            "tensors": checked.tensor_errors,
        }
        failures.extend(f"{target} {line}" for line in checked.failures())

    report_path = os.path.join(out, "gradcheck.json")
    _write_json(report_path, report)

    if failures:
        raise NumericError("Gradient check failed. " + "; ".join(failures))

    return {"passed": True, "report": report_path, "config": snapshot, "errors": {t: r["errors"] for t, r in report.items()}}


def _write_tsv(path: str, examples: List[Example], label_names: List[str]) -> None:
    content = "".join(f"{label_names[e.label]}\t{' '.join(e.tokens)}\n" for e in examples)
    _, err = write_file(path, content.encode("utf-8"))
    if err:
        raise TextCNNError(err)


def cmd_synth(cfg: ExperimentConfig) -> Dict:
    """Write a synthetic corpus, its embedding files, and an experiment configuration using them."""
    out = _output_dir(cfg)
    snapshot = write_snapshot(cfg, "synth")

    data = make_synthetic(cfg.synth_task, cfg.synth_sizes, cfg.synth_dims, make_rng(cfg.seed))

    files = {}
    for split in ("train", "dev", "test"):
        files[split] = os.path.join(out, f"{split}.tsv")
        _write_tsv(files[split], data.split(split), data.label_names)

    embeddings = []
    for group in data.groups:
        path = os.path.join(out, f"{group.name}.txt")
        write_text_vectors(path, data.vocab.tokens(), group.table[1:])
        embeddings.append({"name": group.name, "path": path, "format": "text", "trainable": group.trainable})

    experiment = {
        "name": f"synthetic-{cfg.synth_task}",
        "train": files["train"],
        "dev": files["dev"],
        "test": files["test"],
        "embeddings": embeddings,
        "variant": Variant.MGNC if len(embeddings) > 1 else Variant.CNN,
        "seed": cfg.seed,
    }
    experiment_path = os.path.join(out, "experiment.json")
    _write_json(experiment_path, experiment)

    return dict(files, embeddings=[e["path"] for e in embeddings], experiment=experiment_path, config=snapshot)


def _read_summary_rows(path: str) -> List[Dict]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def cmd_report(cfg: ExperimentConfig) -> Dict:
    """Collect summary.csv and best_lambda.json files into markdown tables."""
    if len(cfg.report_inputs) == 0:
        _fail("report_inputs", "report needs at least one result directory.")

    summary_cells = {}
    lambda_cells = {}
    datasets = []
    for directory in cfg.report_inputs:
        summary_path = os.path.join(directory, "summary.csv")
        best_path = os.path.join(directory, "best_lambda.json")
        if not os.path.exists(summary_path) and not os.path.exists(best_path):
            _fail("report_inputs", f"directory {directory} holds neither summary.csv nor best_lambda.json.")

        if os.path.exists(summary_path):
            for row in _read_summary_rows(summary_path):
                model = f"{row['variant']}({row['groups']})"
                summary_cells.setdefault(model, {})[row["dataset"]] = row["cell"]
                if row["dataset"] not in datasets:
                    datasets.append(row["dataset"])

        if os.path.exists(best_path):
            entries, err = read_json_list(best_path)
            if err:
                raise FormatError(err)
            for entry in entries:
                model = f"{entry['variant']}({entry['groups']})"
                key = entry["dataset"] if "fold" not in entry else f"{entry['dataset']} fold {entry['fold']}"
                lambda_cells.setdefault(model, {})[key] = entry["lambda"]

    lambda_columns = sorted({c for cells in lambda_cells.values() for c in cells})

    summary_table, err = render_table(
        "Model", datasets, [{"name": m, "cells": c} for m, c in sorted(summary_cells.items())]
    )
    if err:
        raise TextCNNError(err)

    lambda_table = ""
    if lambda_cells:
        lambda_table, err = render_table(
            "Model", lambda_columns, [{"name": m, "cells": c} for m, c in sorted(lambda_cells.items())]
        )
        if err:
            raise TextCNNError(err)

    report, err = render_report("Results", summary_table, lambda_table)
    if err:
        raise TextCNNError(err)

    out = _output_dir(cfg)
    snapshot = write_snapshot(cfg, "report")
    report_path = os.path.join(out, "report.md")
    _, err = write_file(report_path, report.encode("utf-8"))
    if err:
        raise TextCNNError(err)

    return {"report": report_path, "config": snapshot, "models": sorted(set(summary_cells) | set(lambda_cells))}


COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "gridsearch": cmd_gridsearch,
    "cv": cmd_cv,
    "gradcheck": cmd_gradcheck,
    "synth": cmd_synth,
    "report": cmd_report,
}


def run_command(command: str, cfg: ExperimentConfig) -> Dict:
    handler = COMMANDS.get(command, None)
    if handler is None:
        raise UsageError(f"Unknown command {command}. Commands: {', '.join(COMMANDS)}.")

    display.v(f"TextCNN {command} - output directory {cfg.output_dir}")
    return handler(cfg)


def format_result(result: Dict) -> str:
    return dump_json(result)
