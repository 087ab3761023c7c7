#!/usr/bin/env python
# -*- coding: utf-8 -*-

# Copyright (c) 2024, ZPE Systems <zpesystems.com>
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

# Make coding more python3-ish, this is required for contributions to Ansible
from __future__ import absolute_import, division, print_function

__metaclass__ = type

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ansible_collections.zpe.textcnn.plugins.plugin_utils.datasets import Example
from ansible_collections.zpe.textcnn.plugins.plugin_utils.embeddings import (
    EmbeddingGroup,
    Vocabulary,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.errors import UsageError

SYNTHETIC_TASKS = ("separable", "group_informative")

DEFAULT_SIZES = {"train": 500, "dev": 100, "test": 100}
DEFAULT_DIMS = {"separable": (20,), "group_informative": (20, 20)}

LABEL_NAMES = ["negative", "positive"]

INDICATORS_PER_CLASS = 10
FILLER_TOKENS = 50
MIN_LENGTH = 5
MAX_LENGTH = 12
MAX_INDICATORS = 3

CENTROID_SCALE = 1.0
INDICATOR_SPREAD = 0.5
FILLER_SCALE = 0.1


@dataclass
class SyntheticData:
    task: str
    train: List[Example]
    dev: List[Example]
    test: List[Example]
    label_names: List[str]
    vocab: Vocabulary
    groups: List[EmbeddingGroup]
    indicators: Dict[int, List[str]]

    def split(self, name: str) -> List[Example]:
        return getattr(self, name)


def _indicator_token(label: int, i: int) -> str:
    return f"{LABEL_NAMES[label][:3]}{i}"


def _vocab_tokens() -> Tuple[List[str], Dict[int, List[str]], List[str]]:
    indicators = {
        label: [_indicator_token(label, i) for i in range(INDICATORS_PER_CLASS)]
        for label in range(len(LABEL_NAMES))
    }
    fillers = [f"fill{i}" for i in range(FILLER_TOKENS)]
    return indicators[0] + indicators[1] + fillers, indicators, fillers


def _informative_table(vocab: Vocabulary, indicators, fillers, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Indicator vectors around a class centroid, small filler vectors."""
    table = np.zeros((len(vocab), dim))
    for label, tokens in indicators.items():
        centroid = rng.normal(0.0, CENTROID_SCALE, size=dim)
        for token in tokens:
            table[vocab.index(token)] = centroid + rng.normal(0.0, INDICATOR_SPREAD, size=dim)
    for token in fillers:
        table[vocab.index(token)] = rng.normal(0.0, FILLER_SCALE, size=dim)
    return table


def _noise_table(vocab: Vocabulary, indicators, fillers, dim: int, rng: np.random.Generator) -> np.ndarray:
    """The i-th indicator of every class shares one vector, so the group carries no label."""
    table = np.zeros((len(vocab), dim))
    for i in range(INDICATORS_PER_CLASS):
        shared = rng.normal(0.0, 1.0, size=dim)
        for tokens in indicators.values():
            table[vocab.index(tokens[i])] = shared
    for token in fillers:
        table[vocab.index(token)] = rng.normal(0.0, 1.0, size=dim)
    return table


def _sentences(n: int, indicators, fillers, rng: np.random.Generator) -> List[Example]:
    examples = []
    for _ in range(n):
        label = int(rng.integers(0, len(LABEL_NAMES)))
        length = int(rng.integers(MIN_LENGTH, MAX_LENGTH + 1))
        n_ind = int(rng.integers(1, MAX_INDICATORS + 1))
        words = [indicators[label][int(i)] for i in rng.integers(0, INDICATORS_PER_CLASS, size=n_ind)]
        words += [fillers[int(i)] for i in rng.integers(0, len(fillers), size=length - n_ind)]
        order = rng.permutation(length)
        examples.append(Example(tuple(words[i] for i in order), label))
    return examples


def make_synthetic(
    task: str,
    sizes: Optional[Dict[str, int]] = None,
    dims: Optional[Sequence[int]] = None,
    rng: Optional[np.random.Generator] = None,
) -> SyntheticData:
    """Desk-scale classification tasks with known structure.
    separable: each sentence holds 1 to 3 indicator tokens of its class among shared fillers.
    group_informative: same sentences, with a second frozen group that cannot tell the classes apart."""
    if task not in SYNTHETIC_TASKS:
        raise UsageError(f"Synthetic task must be one of {SYNTHETIC_TASKS}. Task: {task}.")

    if rng is None:
        raise UsageError("Synthetic data needs a random generator.")

    sizes = dict(DEFAULT_SIZES, **(sizes or {}))
    if min(sizes.values()) < 1:
        raise UsageError(f"Synthetic split sizes must be positive. Sizes: {sizes}.")

    dims = tuple(dims) if dims else DEFAULT_DIMS[task]
    expected_groups = len(DEFAULT_DIMS[task])
    if len(dims) != expected_groups or min(dims) < 1:
        raise UsageError(f"Task {task} needs {expected_groups} positive dimensions. Dimensions: {dims}.")

    tokens, indicators, fillers = _vocab_tokens()
    vocab = Vocabulary(tokens)

    name = "informative" if task == "group_informative" else "vectors"
    groups = [EmbeddingGroup(name, vocab, _informative_table(vocab, indicators, fillers, dims[0], rng))]
    if task == "group_informative":
        groups.append(
            EmbeddingGroup("noise", vocab, _noise_table(vocab, indicators, fillers, dims[1], rng), trainable=False)
        )

    return SyntheticData(
        task=task,
        train=_sentences(sizes["train"], indicators, fillers, rng),
        dev=_sentences(sizes["dev"], indicators, fillers, rng),
        test=_sentences(sizes["test"], indicators, fillers, rng),
        label_names=list(LABEL_NAMES),
        vocab=vocab,
        groups=groups,
        indicators=indicators,
    )
