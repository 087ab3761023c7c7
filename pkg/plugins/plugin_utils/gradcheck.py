#!/usr/bin/env python
# -*- coding: utf-8 -*-

# Copyright (c) 2024, ZPE Systems <zpesystems.com>
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

# Make coding more python3-ish, this is required for contributions to Ansible
from __future__ import absolute_import, division, print_function

__metaclass__ = type

from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from ansible.utils.display import Display

from ansible_collections.zpe.textcnn.plugins.plugin_utils.core_math import (
    finite_difference_gradient,
    make_rng,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.datasets import (
    Batch,
    Example,
    make_batch,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.embeddings import (
    PAD_INDEX,
    Vocabulary,
    random_group,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.errors import UsageError
from ansible_collections.zpe.textcnn.plugins.plugin_utils.model import (
    ModelParams,
    backward,
    batch_loss,
    init_params,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.training import (
    UNBOUNDED_LAMBDA,
    RegularizationSpec,
    regularized_forward,
)

display = Display()

GRADCHECK_TOLERANCE = 1e-4
GRADCHECK_STEP = 1e-5

TENSOR_CLASSES = ("classifier_w", "classifier_b", "filter_w", "filter_b", "embeddings")

# offenders listed per tensor when above tolerance
MAX_OFFENDERS = 5


def tensor_class(name: str) -> str:
    if name == "classifier.w":
        return "classifier_w"
    elif name == "classifier.b":
        return "classifier_b"
    elif name.startswith("filters.") and name.endswith(".w"):
        return "filter_w"
    elif name.startswith("filters.") and name.endswith(".b"):
        return "filter_b"
    elif name.startswith("embeddings."):
        return "embeddings"

    raise UsageError(f"Unknown tensor name: {name}.")


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max|a - n| / max(max|a|, max|n|, 1e-12) over a tensor."""
    if analytic.size == 0:
        return 0.0
    scale = max(float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))), 1e-12)
    return float(np.max(np.abs(analytic - numeric))) / scale


@dataclass
class GradCheckReport:
    tolerance: float
    errors: Dict[str, float] = field(default_factory=dict)
    tensor_errors: Dict[str, float] = field(default_factory=dict)
    offenders: Dict[str, List[Tuple[int, ...]]] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(e <= self.tolerance for e in self.errors.values())

    def failures(self) -> List[str]:
        lines = []
        for name, err in self.tensor_errors.items():
            if err > self.tolerance:
                lines.append(f"{name}: relative error {err:.3e} at indices {self.offenders.get(name, [])}")
        return lines


def check_gradients(
    params: ModelParams,
    batch: Batch,
    spec: RegularizationSpec,
    h: float = GRADCHECK_STEP,
    seed: int = 0,
    tolerance: float = GRADCHECK_TOLERANCE,
) -> GradCheckReport:
    """Compare backward against central differences of the batch loss for every trainable tensor.
    Every loss evaluation draws the dropout mask from the same seed, so the mask is fixed."""
    if params.dtype != np.float64:
        raise UsageError("Gradient check requires 64-bit parameters.")

    trace = regularized_forward(params, batch, spec, "train", make_rng(seed))
    analytic = backward(trace, params, batch.labels).as_dict()

    def loss_at(tensor: np.ndarray):
        def f(theta: np.ndarray) -> float:
            original = tensor.copy()
            tensor[...] = theta
            try:
                t = regularized_forward(params, batch, spec, "train", make_rng(seed))
                return batch_loss(t.probs, batch.labels)
            finally:
                tensor[...] = original

        return f

    report = GradCheckReport(tolerance)
    for name, tensor in params.tensors():
        numeric = finite_difference_gradient(loss_at(tensor), tensor, h)
        a = analytic[name]
        if name.startswith("embeddings."):
            keep = np.arange(tensor.shape[0]) != PAD_INDEX
            a = a[keep]
            numeric = numeric[keep]

        err = relative_error(a, numeric)
        report.tensor_errors[name] = err
        cls = tensor_class(name)
        report.errors[cls] = max(report.errors.get(cls, 0.0), err)

        if err > tolerance:
            diff = np.abs(a - numeric)
            worst = np.argsort(diff, axis=None)[::-1][:MAX_OFFENDERS]
            report.offenders[name] = [tuple(int(i) for i in np.unravel_index(w, diff.shape)) for w in worst]

        display.vv(f"TextCNN gradcheck - {name} - relative error {err:.3e}")

    return report


def make_tiny_model(
    seed: int = 0,
    variant: str = "mgnc",
    dims: Tuple[int, ...] = (4, 5),
    heights: Tuple[int, ...] = (2, 3),
    maps: int = 3,
    vocab_size: int = 20,
    length: int = 7,
    n_classes: int = 3,
    batch_size: int = 4,
    activation: str = "relu",
) -> Tuple[ModelParams, Batch]:
    """Random tiny model with weights large enough that every gradient is far from zero."""
    if variant == "cnn":
        dims = dims[:1]

    rng = make_rng(seed)
    vocab = Vocabulary([f"w{i}" for i in range(1, vocab_size)])
    groups = [
        random_group(f"g{i}", vocab, d, rng) for i, d in enumerate(dims, start=1)
    ]
    params = init_params(groups, n_classes, variant, heights, maps, activation, rng)

    for group in params.groups:
        group.table[1:] = rng.normal(0.0, 1.0, size=group.table[1:].shape)
    for bank in params.banks:
        for hgt in bank.heights:
            bank.weights[hgt][...] = rng.uniform(-0.5, 0.5, size=bank.weights[hgt].shape)
            bank.biases[hgt][...] = rng.uniform(-0.1, 0.1, size=bank.biases[hgt].shape)
    params.classifier.weights[...] = rng.normal(0.0, 0.5, size=params.classifier.weights.shape)
    params.classifier.bias[...] = rng.normal(0.0, 0.1, size=params.classifier.bias.shape)

    tokens = vocab.tokens()
    examples = []
    for row in range(batch_size):
        n = length if row == 0 else int(rng.integers(max(heights), length + 1))
        words = tuple(tokens[int(i)] for i in rng.integers(0, len(tokens), size=n))
        examples.append(Example(words, int(rng.integers(0, n_classes))))

    return params, make_batch(examples, vocab, max(heights))


def gradcheck_spec(
    params: ModelParams,
    batch: Batch,
    target: str = "classifier_weights",
    dropout_p: float = 0.5,
    seed: int = 0,
) -> RegularizationSpec:
    """Per-group spec for a tiny model. For the activations target the bounds sit
    below the observed norms so the rescale branch is exercised."""
    m = len(params.groups)
    mode = "per_group" if m > 1 else "single_lambda"
    if target == "classifier_weights":
        return RegularizationSpec(mode, target, (UNBOUNDED_LAMBDA,) * m, dropout_p)

    plain = RegularizationSpec(mode, "classifier_weights", (UNBOUNDED_LAMBDA,) * m, dropout_p)
    pooled = regularized_forward(params, batch, plain, "train", make_rng(seed)).pooled
    lambdas = []
    for start, stop in params.classifier.boundaries if m > 1 else [(0, params.n_features)]:
        norms = np.linalg.norm(pooled[:, start:stop], axis=1)
        positive = norms[norms > 0]
        lambdas.append(0.5 * float(np.min(positive)) if len(positive) else 1.0)

    return RegularizationSpec(mode, target, tuple(lambdas), dropout_p)


def run_gradcheck(
    target: str = "classifier_weights",
    seed: int = 0,
    activation: str = "relu",
    variant: str = "mgnc",
    h: float = GRADCHECK_STEP,
    tolerance: float = GRADCHECK_TOLERANCE,
) -> GradCheckReport:
    params, batch = make_tiny_model(seed=seed, variant=variant, activation=activation)
    spec = gradcheck_spec(params, batch, target, seed=seed)
    report = check_gradients(params, batch, spec, h, seed, tolerance)

    display.v(
        f"TextCNN gradcheck - target {target} - "
        + ", ".join(f"{k} {v:.3e}" for k, v in report.errors.items())
    )
    return report
