#!/usr/bin/env python
# -*- coding: utf-8 -*-

# Copyright (c) 2024, ZPE Systems <zpesystems.com>
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

# Make coding more python3-ish, this is required for contributions to Ansible
from __future__ import absolute_import, division, print_function

__metaclass__ = type

import re
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from sklearn.model_selection import KFold, train_test_split

from ansible.utils.display import Display

from ansible_collections.zpe.textcnn.plugins.plugin_utils.core_math import make_rng
from ansible_collections.zpe.textcnn.plugins.plugin_utils.embeddings import (
    PAD_INDEX,
    Vocabulary,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.errors import (
    FormatError,
    UsageError,
)

display = Display()

TOKENIZER_MODES = ("whitespace", "cleaned")

_SEPARATED_CHARACTERS = re.compile(r"([,.!?'\"()])")


@dataclass(frozen=True)
class Example:
    tokens: Tuple[str, ...]
    label: int

    @property
    def length(self) -> int:
        return len(self.tokens)


@dataclass
class Corpus:
    """Examples loaded from one or more TSV files sharing one label index."""

    examples: List[Example] = field(default_factory=list)
    label_names: List[str] = field(default_factory=list)
    skipped: int = 0

    @property
    def n_classes(self) -> int:
        return len(self.label_names)


@dataclass(frozen=True)
class Batch:
    indices: np.ndarray  # (batch, s_batch), PAD suffix
    lengths: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return self.indices.shape[0]


@dataclass(frozen=True)
class FixedSplit:
    train: float = 0.8
    dev: float = 0.1
    test: float = 0.1


@dataclass(frozen=True)
class KFoldSplit:
    k: int = 10
    dev_fraction: float = 0.1


@dataclass(frozen=True)
class Fold:
    train: np.ndarray
    dev: np.ndarray
    test: np.ndarray


@dataclass(frozen=True)
class SplitPlan:
    strategy: str
    seed: int
    folds: Tuple[Fold, ...]


def tokenize(text: str, mode: str = "whitespace") -> List[str]:
    """Split text into tokens.
    whitespace: split on whitespace runs.
    cleaned: lowercase, and the characters , . ! ? ' " ( ) become tokens on their own."""
    if mode not in TOKENIZER_MODES:
        raise UsageError(f"Tokenizer mode must be one of {TOKENIZER_MODES}. Mode: {mode}.")

    text = text.replace("\x00", "")
    if mode == "cleaned":
        text = _SEPARATED_CHARACTERS.sub(r" \1 ", text.lower())

    return text.split()


def load_tsv(
    path: str, mode: str = "whitespace", corpus: Optional[Corpus] = None
) -> Corpus:
    """Read "label<TAB>text" lines. Labels get dense indices in first-occurrence order.
    Passing an existing corpus appends to it and keeps its label indices."""
    if corpus is None:
        corpus = Corpus()

    label_index = {name: i for i, name in enumerate(corpus.label_names)}
    skipped = 0

    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            line = line.rstrip("\r\n")
            if line.strip() == "":
                skipped += 1
                continue

            parts = line.split("\t", 1)
            if len(parts) != 2:
                raise FormatError(f"Missing TAB separator in {path} at line {line_number}.")

            label, text = parts[0].strip(), parts[1]
            tokens = tokenize(text, mode)
            if len(tokens) == 0:
                skipped += 1
                continue

            if label not in label_index:
                label_index[label] = len(corpus.label_names)
                corpus.label_names.append(label)

            corpus.examples.append(Example(tuple(tokens), label_index[label]))

    if skipped > 0:
        display.warning(f"TextCNN datasets - {skipped} lines without text skipped in {path}.")
        corpus.skipped += skipped

    return corpus


def remap_labels(
    examples: Sequence[Example],
    label_names: Sequence[str],
    mapping: Dict[str, Optional[str]],
) -> Tuple[List[Example], List[str]]:
    """Collapse labels by name. Labels mapped to None, or missing from mapping, are dropped."""
    new_names = []
    new_index = {}
    translation = {}
    for old_index, name in enumerate(label_names):
        target = mapping.get(name, None)
        if target is None:
            continue
        if target not in new_index:
            new_index[target] = len(new_names)
            new_names.append(target)
        translation[old_index] = new_index[target]

    remapped = [
        Example(e.tokens, translation[e.label]) for e in examples if e.label in translation
    ]
    return remapped, new_names


def filter_short(examples: Sequence[Example], min_len: int = 4) -> List[Example]:
    """Drop examples shorter than min_len tokens. Meant for training portions only."""
    if min_len < 1:
        raise UsageError(f"Minimum length must be at least 1. Minimum length: {min_len}.")

    return [e for e in examples if e.length >= min_len]


def undersample_majority(
    examples: Sequence[Example], rng: np.random.Generator
) -> List[Example]:
    """Subsample the majority class, without replacement, down to the minority size."""
    by_label = {}
    for i, e in enumerate(examples):
        by_label.setdefault(e.label, []).append(i)

    if len(by_label) != 2:
        raise UsageError(
            f"Undersampling requires exactly two classes. Classes found: {len(by_label)}."
        )

    idx_a, idx_b = [indices for _, indices in sorted(by_label.items())]
    minority, majority = (idx_a, idx_b) if len(idx_a) <= len(idx_b) else (idx_b, idx_a)

    kept = rng.choice(np.array(majority), size=len(minority), replace=False)
    selected = np.concatenate([np.array(minority), kept])
    order = rng.permutation(selected)

    return [examples[i] for i in order]


def carve_dev(
    train: np.ndarray, dev_fraction: float, seed: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Split a development portion off a training portion."""
    train = np.asarray(train)
    if dev_fraction <= 0:
        return np.sort(train), np.array([], dtype=np.int64)

    if dev_fraction >= 1:
        raise UsageError(f"Development fraction must be below 1. Fraction: {dev_fraction}.")

    rest, dev = train_test_split(train, test_size=dev_fraction, random_state=seed, shuffle=True)
    return np.sort(rest), np.sort(dev)


def make_splits(n: int, strategy: Union[FixedSplit, KFoldSplit], seed: int) -> SplitPlan:
    """Disjoint, covering, deterministic split of n example indices."""
    if isinstance(strategy, FixedSplit):
        fractions = (strategy.train, strategy.dev, strategy.test)
        if min(fractions) < 0 or strategy.train <= 0 or abs(sum(fractions) - 1.0) > 1e-9:
            raise UsageError(
                f"Split fractions must be non-negative, sum to 1, and keep a training portion. Fractions: {fractions}."
            )

        order = make_rng(seed).permutation(n)
        n_test = int(round(strategy.test * n))
        n_dev = int(round(strategy.dev * n))
        if n - n_test - n_dev <= 0:
            raise UsageError(f"Split leaves no training examples. Examples: {n}.")

        fold = Fold(
            train=np.sort(order[n_test + n_dev:]),
            dev=np.sort(order[n_test:n_test + n_dev]),
            test=np.sort(order[:n_test]),
        )
        return SplitPlan("fixed", seed, (fold,))

    if isinstance(strategy, KFoldSplit):
        if strategy.k < 2:
            raise UsageError(f"K-fold split requires k >= 2. k: {strategy.k}.")
        if n < strategy.k:
            raise UsageError(f"Cannot split {n} examples into {strategy.k} folds.")

        folds = []
        kfold = KFold(n_splits=strategy.k, shuffle=True, random_state=seed)
        for fold_id, (train, test) in enumerate(kfold.split(np.arange(n))):
            train, dev = carve_dev(train, strategy.dev_fraction, seed + fold_id)
            folds.append(Fold(train=train, dev=dev, test=np.sort(test)))

        return SplitPlan("kfold", seed, tuple(folds))

    raise UsageError(f"Unknown split strategy: {strategy}.")


def make_batch(examples: Sequence[Example], vocab: Vocabulary, h_max: int) -> Batch:
    """Pad to the longest sentence of the batch, and never below h_max."""
    lengths = np.array([e.length for e in examples], dtype=np.int64)
    s_batch = max(int(lengths.max()) if len(examples) else 0, h_max)

    indices = np.full((len(examples), s_batch), PAD_INDEX, dtype=np.int64)
    for row, e in enumerate(examples):
        indices[row, : e.length] = vocab.encode(e.tokens)

    labels = np.array([e.label for e in examples], dtype=np.int64)
    return Batch(indices=indices, lengths=lengths, labels=labels)


def batch_iter(
    examples: Sequence[Example],
    vocab: Vocabulary,
    batch_size: int = 50,
    h_max: int = 5,
    rng: Optional[np.random.Generator] = None,
) -> Iterator[Batch]:
    """Mini-batches over examples. Order is shuffled when rng is given."""
    if batch_size < 1:
        raise UsageError(f"Batch size must be at least 1. Batch size: {batch_size}.")

    if rng is None:
        order = np.arange(len(examples))
    else:
        order = rng.permutation(len(examples))

    for start in range(0, len(order), batch_size):
        chunk = [examples[i] for i in order[start:start + batch_size]]
        yield make_batch(chunk, vocab, h_max)
