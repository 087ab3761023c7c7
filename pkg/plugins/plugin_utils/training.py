#!/usr/bin/env python
# -*- coding: utf-8 -*-

# Copyright (c) 2024, ZPE Systems <zpesystems.com>
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

# Make coding more python3-ish, this is required for contributions to Ansible
from __future__ import absolute_import, division, print_function

__metaclass__ = type

import csv
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ansible.utils.display import Display

from ansible_collections.zpe.textcnn.plugins.plugin_utils.core_math import (
    PRECISIONS,
    rescale_rows_to_max_norm,
    spawn_rngs,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.datasets import (
    Batch,
    Example,
    batch_iter,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.embeddings import Vocabulary
from ansible_collections.zpe.textcnn.plugins.plugin_utils.errors import (
    NumericError,
    UsageError,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.metrics import (
    METRICS,
    compute_metric,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.model import (
    ACTIVATIONS,
    Classifier,
    ForwardTrace,
    ModelParams,
    backward,
    classify,
    forward,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.types import NormSegment

display = Display()

ADADELTA_RHO = 0.95
ADADELTA_EPSILON = 1e-6

# stands in for an unbounded max norm
UNBOUNDED_LAMBDA = 1e9

CONSTRAINT_MODES = ("single_lambda", "per_group")
CONSTRAINT_TARGETS = ("classifier_weights", "activations")


class AdaDeltaState:
    """Running averages of squared gradients and squared updates for one tensor."""

    def __init__(self, shape, dtype=np.float64, rho: float = ADADELTA_RHO, epsilon: float = ADADELTA_EPSILON) -> None:
        if not 0 <= rho < 1 or epsilon <= 0:
            raise UsageError(f"AdaDelta needs 0 <= rho < 1 and epsilon > 0. Rho: {rho}. Epsilon: {epsilon}.")

        self.sq_grad = np.zeros(shape, dtype=dtype)
        self.sq_delta = np.zeros(shape, dtype=dtype)
        self.rho = rho
        self.epsilon = epsilon


def adadelta_update(param: np.ndarray, grad: np.ndarray, state: AdaDeltaState) -> np.ndarray:
    """One AdaDelta step. param is updated in place and returned."""
    if param.shape != grad.shape or param.shape != state.sq_grad.shape:
        raise UsageError(
            f"AdaDelta shapes differ. Parameter: {param.shape}. Gradient: {grad.shape}. State: {state.sq_grad.shape}."
        )

    rho = state.rho
    eps = state.epsilon
    state.sq_grad *= rho
    state.sq_grad += (1 - rho) * grad * grad
    delta = -(np.sqrt(state.sq_delta + eps) / np.sqrt(state.sq_grad + eps)) * grad
    state.sq_delta *= rho
    state.sq_delta += (1 - rho) * delta * delta
    param += delta
    return param


@dataclass(frozen=True)
class RegularizationSpec:
    mode: str = "single_lambda"
    target: str = "classifier_weights"
    lambdas: Tuple[float, ...] = (3.0,)
    dropout_p: float = 0.5

    def __post_init__(self):
        if self.mode not in CONSTRAINT_MODES:
            raise UsageError(f"Constraint mode must be one of {CONSTRAINT_MODES}. Mode: {self.mode}.")

        if self.target not in CONSTRAINT_TARGETS:
            raise UsageError(f"Constraint target must be one of {CONSTRAINT_TARGETS}. Target: {self.target}.")

        if len(self.lambdas) == 0 or min(self.lambdas) <= 0:
            raise UsageError(f"Max norm bounds must be positive. Lambdas: {self.lambdas}.")

        if self.mode == "single_lambda" and len(self.lambdas) != 1:
            raise UsageError(f"Single lambda mode takes exactly one bound. Lambdas: {self.lambdas}.")

        if not 0 <= self.dropout_p < 1:
            raise UsageError(f"Dropout probability must be in [0, 1). Dropout: {self.dropout_p}.")

    def segments(self, boundaries: Sequence[Tuple[int, int]]) -> List[NormSegment]:
        """Column ranges of the feature vector and the bound each one obeys."""
        if self.mode == "single_lambda":
            return [(boundaries[0][0], boundaries[-1][1], self.lambdas[0])]

        if len(self.lambdas) != len(boundaries):
            raise UsageError(
                f"Per group constraints need one bound per group. Groups: {len(boundaries)}. Lambdas: {len(self.lambdas)}."
            )

        return [(start, stop, lam) for (start, stop), lam in zip(boundaries, self.lambdas)]


@dataclass(frozen=True)
class TrainConfig:
    heights: Tuple[int, ...] = (3, 4, 5)
    maps: int = 100
    batch_size: int = 50
    epochs: int = 25
    activation: str = "relu"
    seed: int = 0
    precision: str = "64"
    patience: Optional[int] = None
    metric: str = "accuracy"

    def __post_init__(self):
        if len(self.heights) == 0 or min(self.heights) < 1:
            raise UsageError(f"Filter heights must be positive. Heights: {self.heights}.")

        for name in ("maps", "batch_size", "epochs"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be positive. Value: {getattr(self, name)}.")

        if self.patience is not None and self.patience < 1:
            raise UsageError(f"Patience must be positive. Patience: {self.patience}.")

        if self.activation not in ACTIVATIONS:
            raise UsageError(f"Activation must be one of {ACTIVATIONS}. Activation: {self.activation}.")

        if self.precision not in PRECISIONS:
            raise UsageError(f"Precision must be one of {sorted(PRECISIONS)}. Precision: {self.precision}.")

        if self.metric not in METRICS:
            raise UsageError(f"Metric must be one of {METRICS}. Metric: {self.metric}.")

    @property
    def dtype(self):
        return PRECISIONS[self.precision]


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    dev_metric: Optional[float]


@dataclass
class TrainHistory:
    records: List[EpochRecord] = field(default_factory=list)
    best_epoch: Optional[int] = None

    @property
    def best_dev_metric(self) -> Optional[float]:
        for r in self.records:
            if r.epoch == self.best_epoch:
                return r.dev_metric
        return None


def apply_norm_constraints(classifier: Classifier, spec: RegularizationSpec) -> Classifier:
    """Rescale each class row (or each group segment of it) onto its max-norm bound."""
    if spec.target != "classifier_weights":
        raise UsageError("Weight constraints apply only when the constraint target is classifier_weights.")

    weights = classifier.weights.copy()
    for start, stop, lam in spec.segments(classifier.boundaries):
        weights[:, start:stop], _ = rescale_rows_to_max_norm(weights[:, start:stop], lam)

    return Classifier(weights, classifier.bias, classifier.boundaries)


def constrain_activations(trace: ForwardTrace, spec: RegularizationSpec, params: ModelParams) -> ForwardTrace:
    """Rescale each o_l (or the whole o) onto its bound before the classifier.
    The applied factors stay in the trace for backward."""
    segments = spec.segments(params.classifier.boundaries)
    scaled = trace.pooled.copy()
    scales = np.ones((scaled.shape[0], len(segments)), dtype=scaled.dtype)
    for j, (start, stop, lam) in enumerate(segments):
        scaled[:, start:stop], scales[:, j] = rescale_rows_to_max_norm(trace.pooled[:, start:stop], lam)

    constrained = replace(trace, scaled=scaled, norm_segments=tuple(segments), norm_scales=scales)
    return classify(params, constrained)


def regularized_forward(
    params: ModelParams,
    batch: Batch,
    spec: RegularizationSpec,
    mode: str = "test",
    rng: Optional[np.random.Generator] = None,
) -> ForwardTrace:
    """Forward pass with dropout and, for the activations target, the max-norm rescale.
    The rescale is applied in test mode too so the classifier always sees one scale."""
    trace = forward(params, batch, spec.dropout_p, mode, rng)
    if spec.target == "activations":
        trace = constrain_activations(trace, spec, params)
    return trace


def predict(params: ModelParams, batch: Batch, spec: RegularizationSpec) -> np.ndarray:
    """Class probabilities in test mode."""
    return regularized_forward(params, batch, spec, "test").probs


def predict_examples(
    params: ModelParams,
    examples: Sequence[Example],
    vocab: Vocabulary,
    spec: RegularizationSpec,
    batch_size: int = 50,
) -> np.ndarray:
    probs = [predict(params, batch, spec) for batch in batch_iter(examples, vocab, batch_size, params.h_max)]
    return np.concatenate(probs, axis=0)


def evaluate_examples(
    params: ModelParams,
    examples: Sequence[Example],
    vocab: Vocabulary,
    spec: RegularizationSpec,
    metric: str = "accuracy",
    batch_size: int = 50,
) -> float:
    if len(examples) == 0:
        raise UsageError("Cannot evaluate on an empty split.")

    probs = predict_examples(params, examples, vocab, spec, batch_size)
    labels = np.array([e.label for e in examples], dtype=np.int64)
    return compute_metric(metric, probs, labels)


def train(
    params: ModelParams,
    train_examples: Sequence[Example],
    dev_examples: Sequence[Example],
    vocab: Vocabulary,
    config: TrainConfig,
    spec: RegularizationSpec,
    on_batch_end: Optional[Callable[[int, int, ModelParams], None]] = None,
) -> Tuple[ModelParams, TrainHistory]:
    """Mini-batch AdaDelta training. Weight constraints are enforced after every batch update.
    Returns the parameters of the best development epoch, or of the last epoch without
    a development split. The params argument is not modified."""
    if len(train_examples) == 0:
        raise UsageError("Training split is empty.")

    params = params.copy()
    spec.segments(params.classifier.boundaries)

    shuffle_rng, dropout_rng = spawn_rngs(config.seed, 2)
    states = {
        name: AdaDeltaState(tensor.shape, tensor.dtype) for name, tensor in params.tensors()
    }

    history = TrainHistory()
    best_params = None
    best_metric = None

    for epoch in range(1, config.epochs + 1):
        loss_sum = 0.0
        for b, batch in enumerate(
            batch_iter(train_examples, vocab, config.batch_size, params.h_max, shuffle_rng)
        ):
            trace = regularized_forward(params, batch, spec, "train", dropout_rng)
            grads = backward(trace, params, batch.labels)
            if not np.isfinite(grads.loss):
                raise NumericError(
                    f"Non-finite loss at seed {config.seed}, epoch {epoch}, batch {b}. Loss: {grads.loss}."
                )

            named = grads.as_dict()
            for name, tensor in params.tensors():
                if not np.all(np.isfinite(named[name])):
                    raise NumericError(
                        f"Non-finite gradient of {name} at seed {config.seed}, epoch {epoch}, batch {b}."
                    )
                adadelta_update(tensor, named[name], states[name])

            if spec.target == "classifier_weights":
                params.classifier = apply_norm_constraints(params.classifier, spec)

            loss_sum += grads.loss * len(batch)
            display.vv(f"TextCNN training - seed {config.seed} - epoch {epoch} - batch {b} - loss {grads.loss:.6f}")

            if on_batch_end is not None:
                on_batch_end(epoch, b, params)

        train_loss = loss_sum / len(train_examples)
        dev_metric = None
        if len(dev_examples) > 0:
            dev_metric = evaluate_examples(params, dev_examples, vocab, spec, config.metric, config.batch_size)

        history.records.append(EpochRecord(epoch, train_loss, dev_metric))
        display.v(
            f"TextCNN training - seed {config.seed} - epoch {epoch} - train loss {train_loss:.6f} - dev {config.metric} {dev_metric}"
        )

        if dev_metric is None:
            continue

        if best_metric is None or dev_metric > best_metric:
            best_metric = dev_metric
            best_params = params.copy()
            history.best_epoch = epoch
        elif config.patience is not None and epoch - history.best_epoch >= config.patience:
            display.v(f"TextCNN training - seed {config.seed} - early stop at epoch {epoch}.")
            break

    if best_params is None:
        history.best_epoch = history.records[-1].epoch
        return params, history

    return best_params, history


def write_history_csv(path: str, history: TrainHistory) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "dev_metric"])
        for r in history.records:
            writer.writerow([r.epoch, repr(r.train_loss), "" if r.dev_metric is None else repr(r.dev_metric)])
