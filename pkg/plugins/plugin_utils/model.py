#!/usr/bin/env python
# -*- coding: utf-8 -*-

# Copyright (c) 2024, ZPE Systems <zpesystems.com>
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

# Make coding more python3-ish, this is required for contributions to Ansible
from __future__ import absolute_import, division, print_function

__metaclass__ = type

from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ansible_collections.zpe.textcnn.plugins.plugin_utils.core_math import (
    PROBABILITY_FLOOR,
    softmax,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.datasets import Batch
from ansible_collections.zpe.textcnn.plugins.plugin_utils.embeddings import (
    PAD_INDEX,
    EmbeddingGroup,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.errors import UsageError
from ansible_collections.zpe.textcnn.plugins.plugin_utils.types import (
    Boundary,
    NormSegment,
)

ACTIVATIONS = ("relu", "tanh", "identity")
VARIANTS = ("cnn", "ccnn", "mg", "mgnc")

FILTER_INIT_RANGE = 0.01


class Variant:
    """Model variants."""

    CNN = "cnn"
    CCNN = "ccnn"
    MG = "mg"
    MGNC = "mgnc"


def activate(c: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(c, 0)
    elif kind == "tanh":
        return np.tanh(c)
    elif kind == "identity":
        return c.copy()

    raise UsageError(f"Activation must be one of {ACTIVATIONS}. Activation: {kind}.")


def _activation_derivative(pre: np.ndarray, post: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (pre > 0).astype(pre.dtype)
    elif kind == "tanh":
        return 1 - post * post
    return np.ones_like(pre)


class FilterBank:
    """Filters of one embedding group: for each height, maps filters of shape (h, d)."""

    def __init__(
        self,
        group_name: str,
        dim: int,
        heights: Sequence[int],
        maps: int,
        activation: str,
        weights: Dict[int, np.ndarray],
        biases: Dict[int, np.ndarray],
    ) -> None:
        if activation not in ACTIVATIONS:
            raise UsageError(f"Activation must be one of {ACTIVATIONS}. Activation: {activation}.")

        if len(heights) == 0 or len(set(heights)) != len(heights) or min(heights) < 1:
            raise UsageError(f"Filter heights must be distinct positive integers. Heights: {heights}.")

        if maps < 1:
            raise UsageError(f"Feature maps per height must be positive. Maps: {maps}.")

        for h in heights:
            if weights[h].shape != (maps, h, dim) or biases[h].shape != (maps,):
                raise UsageError(
                    f"Filter shapes of group {group_name} do not match height {h}, {maps} maps and dimension {dim}."
                )

        self.group_name = group_name
        self.dim = dim
        self.heights = tuple(heights)
        self.maps = maps
        self.activation = activation
        self.weights = weights
        self.biases = biases

    @classmethod
    def initialize(
        cls,
        group_name: str,
        dim: int,
        heights: Sequence[int],
        maps: int,
        activation: str,
        rng: np.random.Generator,
        dtype=np.float64,
    ) -> "FilterBank":
        weights = {}
        biases = {}
        for h in heights:
            weights[h] = rng.uniform(
                -FILTER_INIT_RANGE, FILTER_INIT_RANGE, size=(maps, h, dim)
            ).astype(dtype)
            biases[h] = np.zeros(maps, dtype=dtype)

        return cls(group_name, dim, heights, maps, activation, weights, biases)

    @property
    def n_features(self) -> int:
        return len(self.heights) * self.maps

    def copy(self) -> "FilterBank":
        return FilterBank(
            self.group_name,
            self.dim,
            self.heights,
            self.maps,
            self.activation,
            {h: w.copy() for h, w in self.weights.items()},
            {h: b.copy() for h, b in self.biases.items()},
        )


class Classifier:
    """Softmax layer over the concatenated features, columns partitioned by group."""

    def __init__(self, weights: np.ndarray, bias: np.ndarray, boundaries: Sequence[Boundary]) -> None:
        if weights.ndim != 2 or bias.shape != (weights.shape[0],):
            raise UsageError("Classifier weights must be (classes, features) with one bias per class.")

        position = 0
        for start, stop in boundaries:
            if start != position or stop <= start:
                raise UsageError(f"Group boundaries must be contiguous and ordered. Boundaries: {boundaries}.")
            position = stop

        if position != weights.shape[1]:
            raise UsageError(
                f"Group boundaries cover {position} features, classifier has {weights.shape[1]}."
            )

        self.weights = weights
        self.bias = bias
        self.boundaries = [tuple(b) for b in boundaries]

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    def copy(self) -> "Classifier":
        return Classifier(self.weights.copy(), self.bias.copy(), list(self.boundaries))


class ModelParams:
    """Embedding groups, one filter bank per group, and the classifier."""

    def __init__(
        self,
        variant: str,
        groups: List[EmbeddingGroup],
        banks: List[FilterBank],
        classifier: Classifier,
    ) -> None:
        if variant not in VARIANTS:
            raise UsageError(f"Variant must be one of {VARIANTS}. Variant: {variant}.")

        if len(groups) < 1 or len(groups) != len(banks):
            raise UsageError("Model needs at least one embedding group and one filter bank per group.")

        if variant == Variant.CCNN and len(groups) != 1:
            raise UsageError("C-CNN models have exactly one concatenated embedding group.")

        for group, bank in zip(groups, banks):
            if group.dim != bank.dim:
                raise UsageError(
                    f"Filter bank width {bank.dim} does not match group {group.name} dimension {group.dim}."
                )

        if sum(b.n_features for b in banks) != classifier.weights.shape[1]:
            raise UsageError("Classifier width does not match the number of pooled features.")

        self.variant = variant
        self.groups = groups
        self.banks = banks
        self.classifier = classifier

    @property
    def heights(self) -> Tuple[int, ...]:
        return self.banks[0].heights

    @property
    def h_max(self) -> int:
        return max(max(b.heights) for b in self.banks)

    @property
    def n_features(self) -> int:
        return self.classifier.weights.shape[1]

    @property
    def dtype(self):
        return self.classifier.weights.dtype

    def tensors(self) -> List[Tuple[str, np.ndarray]]:
        """Trainable tensors in a fixed order. Frozen embedding groups are left out."""
        tensors = [
            ("classifier.w", self.classifier.weights),
            ("classifier.b", self.classifier.bias),
        ]
        for l, bank in enumerate(self.banks):
            for h in bank.heights:
                tensors.append((f"filters.{l}.{h}.w", bank.weights[h]))
                tensors.append((f"filters.{l}.{h}.b", bank.biases[h]))
        for l, group in enumerate(self.groups):
            if group.trainable:
                tensors.append((f"embeddings.{l}", group.table))
        return tensors

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.variant,
            [g.copy() for g in self.groups],
            [b.copy() for b in self.banks],
            self.classifier.copy(),
        )


@dataclass(frozen=True)
class HeightTrace:
    height: int
    windows: np.ndarray  # (B, T, h*d)
    pre: np.ndarray  # (B, T, maps) convolution before activation
    post: np.ndarray  # (B, T, maps)
    argmax: np.ndarray  # (B, maps)


@dataclass(frozen=True)
class GroupTrace:
    sentence: np.ndarray  # (B, s, d)
    heights: Tuple[HeightTrace, ...]


@dataclass(frozen=True)
class ForwardTrace:
    mode: str
    dropout_p: float
    indices: np.ndarray
    groups: Tuple[GroupTrace, ...]
    pooled: np.ndarray  # o before any rescaling or dropout, (B, k)
    scaled: np.ndarray  # o after the activation max-norm constraint
    mask: Optional[np.ndarray]
    features: np.ndarray  # classifier input
    logits: np.ndarray
    probs: np.ndarray
    norm_segments: Optional[Tuple[NormSegment, ...]] = None
    norm_scales: Optional[np.ndarray] = None  # (B, segments)


@dataclass
class Gradients:
    loss: float
    classifier_w: np.ndarray
    classifier_b: np.ndarray
    filter_w: List[Dict[int, np.ndarray]]
    filter_b: List[Dict[int, np.ndarray]]
    embeddings: List[Optional[np.ndarray]]

    def as_dict(self) -> Dict[str, np.ndarray]:
        """Gradients keyed like ModelParams.tensors()."""
        grads = {"classifier.w": self.classifier_w, "classifier.b": self.classifier_b}
        for l, (fw, fb) in enumerate(zip(self.filter_w, self.filter_b)):
            for h in fw:
                grads[f"filters.{l}.{h}.w"] = fw[h]
                grads[f"filters.{l}.{h}.b"] = fb[h]
        for l, emb in enumerate(self.embeddings):
            if emb is not None:
                grads[f"embeddings.{l}"] = emb
        return grads


def sentence_matrix(indices: np.ndarray, group: EmbeddingGroup) -> np.ndarray:
    """Rows of the group table for each token index. Works on one row or a batch."""
    indices = np.asarray(indices)
    if indices.size and (indices.min() < 0 or indices.max() >= group.table.shape[0]):
        raise UsageError(
            f"Token index out of range for group {group.name} of vocabulary size {group.table.shape[0]}."
        )

    return group.table[indices]


def _windows(sentences: np.ndarray, h: int) -> np.ndarray:
    """(B, s, d) -> (B, s - h + 1, h * d) flattened local regions."""
    batch, s, d = sentences.shape
    view = sliding_window_view(sentences, h, axis=1)  # (B, T, d, h)
    return np.ascontiguousarray(view.transpose(0, 1, 3, 2)).reshape(batch, s - h + 1, h * d)


def convolve(A: np.ndarray, w: np.ndarray, b: float) -> np.ndarray:
    """Feature map of one filter: component j = b + sum(A[j:j+h] * w). No activation."""
    A = np.asarray(A)
    w = np.asarray(w)
    if A.ndim != 2 or w.ndim != 2 or A.shape[1] != w.shape[1]:
        raise UsageError(f"Sentence matrix {A.shape} and filter {w.shape} widths differ.")

    if A.shape[0] < w.shape[0]:
        raise UsageError(f"Sentence length {A.shape[0]} is shorter than filter height {w.shape[0]}.")

    return _windows(A[None], w.shape[0])[0] @ w.ravel() + b


def max_pool_1(c: np.ndarray) -> Tuple[float, int]:
    """Largest component and the smallest index attaining it."""
    c = np.asarray(c)
    if c.size == 0:
        raise UsageError("Cannot pool an empty feature map.")

    argmax = int(np.argmax(c))
    return c[argmax], argmax


def make_ccnn_group(groups: Sequence[EmbeddingGroup]) -> EmbeddingGroup:
    """One group whose rows are the concatenation of every group's rows."""
    if len(groups) < 2:
        raise UsageError("C-CNN needs at least two embedding groups.")

    vocab = groups[0].vocab
    for g in groups[1:]:
        if g.vocab is not vocab and g.vocab != vocab:
            raise UsageError(f"Embedding group {g.name} uses a different vocabulary.")

    table = np.hstack([g.table for g in groups])
    return EmbeddingGroup(
        "+".join(g.name for g in groups),
        vocab,
        table,
        trainable=all(g.trainable for g in groups),
        oov_count=max(g.oov_count for g in groups),
    )


def resolve_groups(variant: str, groups: Sequence[EmbeddingGroup]) -> List[EmbeddingGroup]:
    """Embedding groups the variant actually convolves over."""
    if variant not in VARIANTS:
        raise UsageError(f"Variant must be one of {VARIANTS}. Variant: {variant}.")

    if len(groups) == 0:
        raise UsageError("At least one embedding group is required.")

    if variant == Variant.CNN:
        if len(groups) != 1:
            raise UsageError(f"Basic CNN uses one embedding group, {len(groups)} given.")
        return [groups[0].copy()]

    if variant == Variant.CCNN:
        return [make_ccnn_group(groups)]

    return [g.copy() for g in groups]


def init_params(
    groups: Sequence[EmbeddingGroup],
    n_classes: int,
    variant: str,
    heights: Sequence[int],
    maps: int,
    activation: str,
    rng: np.random.Generator,
    dtype=np.float64,
) -> ModelParams:
    """Filters uniform in [-0.01, 0.01], biases and classifier at zero."""
    if n_classes < 2:
        raise UsageError(f"Classification needs at least two classes. Classes: {n_classes}.")

    model_groups = resolve_groups(variant, groups)
    banks = []
    boundaries = []
    position = 0
    for group in model_groups:
        group.table = group.table.astype(dtype, copy=False)
        bank = FilterBank.initialize(group.name, group.dim, heights, maps, activation, rng, dtype)
        banks.append(bank)
        boundaries.append((position, position + bank.n_features))
        position += bank.n_features

    classifier = Classifier(
        np.zeros((n_classes, position), dtype=dtype),
        np.zeros(n_classes, dtype=dtype),
        boundaries,
    )
    return ModelParams(variant, model_groups, banks, classifier)


def _group_forward(indices: np.ndarray, group: EmbeddingGroup, bank: FilterBank) -> Tuple[GroupTrace, np.ndarray]:
    sentences = sentence_matrix(indices, group)
    batch = sentences.shape[0]

    traces = []
    pooled = []
    for h in bank.heights:
        windows = _windows(sentences, h)
        flat = bank.weights[h].reshape(bank.maps, -1)
        pre = windows @ flat.T + bank.biases[h]
        post = activate(pre, bank.activation)
        argmax = np.argmax(post, axis=1)
        pooled.append(post[np.arange(batch)[:, None], argmax, np.arange(bank.maps)[None, :]])
        traces.append(HeightTrace(h, windows, pre, post, argmax))

    return GroupTrace(sentences, tuple(traces)), np.concatenate(pooled, axis=1)


def classify(params: ModelParams, trace: ForwardTrace) -> ForwardTrace:
    """Recompute the classifier input, logits and probabilities of a trace."""
    weights = params.classifier.weights
    if trace.mode == "train":
        features = trace.scaled * trace.mask if trace.mask is not None else trace.scaled
    else:
        features = trace.scaled
        if trace.dropout_p > 0:
            weights = weights * (1 - trace.dropout_p)

    logits = features @ weights.T + params.classifier.bias
    return replace(trace, features=features, logits=logits, probs=softmax(logits))


def forward(
    params: ModelParams,
    batch: Batch,
    dropout_p: float = 0.0,
    mode: str = "test",
    rng: Optional[np.random.Generator] = None,
) -> ForwardTrace:
    """Convolve, activate and pool each group, concatenate, drop out (train), classify.
    Test mode consumes no randomness and scales the classifier by 1 - dropout_p."""
    if mode not in ("train", "test"):
        raise UsageError(f"Forward mode must be train or test. Mode: {mode}.")

    if not 0 <= dropout_p < 1:
        raise UsageError(f"Dropout probability must be in [0, 1). Dropout: {dropout_p}.")

    indices = batch.indices if isinstance(batch, Batch) else np.asarray(batch)
    if indices.ndim != 2:
        raise UsageError("Batch indices must be a (batch, length) matrix.")

    if indices.shape[1] < params.h_max:
        raise UsageError(
            f"Padded length {indices.shape[1]} is shorter than the largest filter height {params.h_max}."
        )

    group_traces = []
    pooled = []
    for group, bank in zip(params.groups, params.banks):
        trace, o_l = _group_forward(indices, group, bank)
        group_traces.append(trace)
        pooled.append(o_l)
    o = np.concatenate(pooled, axis=1)

    mask = None
    if mode == "train":
        if rng is None:
            raise UsageError("Train mode forward needs a random generator for dropout.")
        mask = (rng.random(o.shape) >= dropout_p).astype(o.dtype)

    trace = ForwardTrace(
        mode=mode,
        dropout_p=dropout_p,
        indices=indices,
        groups=tuple(group_traces),
        pooled=o,
        scaled=o,
        mask=mask,
        features=o,
        logits=o,
        probs=o,
    )
    return classify(params, trace)


def batch_loss(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean cross entropy of a batch."""
    picked = probs[np.arange(len(labels)), labels]
    return float(np.mean(-np.log(np.maximum(picked, PROBABILITY_FLOOR))))


def _norm_backward(trace: ForwardTrace, d_scaled: np.ndarray) -> np.ndarray:
    """Gradient through o_l * min(1, lambda / |o_l|) per segment and row."""
    if trace.norm_segments is None:
        return d_scaled

    d_pooled = d_scaled.copy()
    for j, (start, stop, _lam) in enumerate(trace.norm_segments):
        scales = trace.norm_scales[:, j]
        rows = np.nonzero(scales != 1.0)[0]
        if len(rows) == 0:
            continue
        o = trace.pooled[rows, start:stop]
        g = d_scaled[rows, start:stop]
        u = o / np.sqrt(np.sum(o * o, axis=1, keepdims=True))
        d_pooled[rows, start:stop] = scales[rows, None] * (g - u * np.sum(u * g, axis=1, keepdims=True))

    return d_pooled


def backward(trace: ForwardTrace, params: ModelParams, labels: np.ndarray) -> Gradients:
    """Gradients of the mean cross entropy. Filters and embeddings only receive gradient
    through the argmax window of each feature map. PAD rows get zero gradient."""
    if trace.mode != "train":
        raise UsageError("Backward needs a trace produced in train mode.")

    labels = np.asarray(labels)
    batch = trace.probs.shape[0]
    if len(labels) != batch or len(trace.groups) != len(params.groups):
        raise UsageError("Trace does not match the labels or the model parameters.")

    if trace.features.shape[1] != params.n_features:
        raise UsageError("Trace feature width does not match the model parameters.")

    d_logits = trace.probs.copy()
    d_logits[np.arange(batch), labels] -= 1
    d_logits /= batch

    classifier_w = d_logits.T @ trace.features
    classifier_b = d_logits.sum(axis=0)

    d_features = d_logits @ params.classifier.weights
    d_scaled = d_features * trace.mask if trace.mask is not None else d_features
    d_pooled = _norm_backward(trace, d_scaled)

    filter_w = []
    filter_b = []
    embeddings = []
    rows = np.arange(batch)[:, None]
    for (start, stop), group, bank, group_trace in zip(
        params.classifier.boundaries, params.groups, params.banks, trace.groups
    ):
        d_o = d_pooled[:, start:stop]
        d_sentence = np.zeros_like(group_trace.sentence) if group.trainable else None

        fw = {}
        fb = {}
        for i, ht in enumerate(group_trace.heights):
            cols = np.arange(bank.maps)[None, :]
            d_post = d_o[:, i * bank.maps:(i + 1) * bank.maps]
            pre = ht.pre[rows, ht.argmax, cols]
            post = ht.post[rows, ht.argmax, cols]
            d_pre = d_post * _activation_derivative(pre, post, bank.activation)

            selected = ht.windows[rows, ht.argmax]  # (B, maps, h*d)
            fw[ht.height] = np.einsum("bn,bnk->nk", d_pre, selected).reshape(bank.weights[ht.height].shape)
            fb[ht.height] = d_pre.sum(axis=0)

            if d_sentence is not None:
                flat = bank.weights[ht.height].reshape(bank.maps, -1)
                d_windows = (d_pre[:, :, None] * flat[None]).reshape(batch, bank.maps, ht.height, bank.dim)
                for r in range(ht.height):
                    np.add.at(d_sentence, (np.broadcast_to(rows, ht.argmax.shape), ht.argmax + r), d_windows[:, :, r, :])

        filter_w.append(fw)
        filter_b.append(fb)

        if d_sentence is None:
            embeddings.append(None)
        else:
            d_table = np.zeros_like(group.table)
            np.add.at(d_table, trace.indices, d_sentence)
            d_table[PAD_INDEX] = 0
            embeddings.append(d_table)

    return Gradients(
        loss=batch_loss(trace.probs, labels),
        classifier_w=classifier_w,
        classifier_b=classifier_b,
        filter_w=filter_w,
        filter_b=filter_b,
        embeddings=embeddings,
    )
