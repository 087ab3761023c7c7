#!/usr/bin/env python
# -*- coding: utf-8 -*-

# Copyright (c) 2024, ZPE Systems <zpesystems.com>
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

# Make coding more python3-ish, this is required for contributions to Ansible
from __future__ import absolute_import, division, print_function

__metaclass__ = type

from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from ansible.utils.display import Display

from ansible_collections.zpe.textcnn.plugins.plugin_utils.errors import (
    FormatError,
    UsageError,
)

display = Display()

# NUL never survives tokenization, so the pad token cannot collide with corpus text
PAD_TOKEN = "\x00<pad>"
PAD_INDEX = 0

OOV_RANGE = 0.25


class Vocabulary:
    """Bijective token/index mapping. Index 0 is reserved for padding."""

    def __init__(self, tokens: Optional[Sequence[str]] = None) -> None:
        self._index_to_token = [PAD_TOKEN]
        self._token_to_index = {PAD_TOKEN: PAD_INDEX}

        for token in tokens or []:
            if token == PAD_TOKEN:
                continue
            self._add(token)

    def _add(self, token: str) -> int:
        index = self._token_to_index.get(token, None)
        if index is None:
            index = len(self._index_to_token)
            self._token_to_index[token] = index
            self._index_to_token.append(token)

        return index

    def __len__(self) -> int:
        return len(self._index_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_index

    def __eq__(self, other) -> bool:
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return self._index_to_token == other._index_to_token

    def index(self, token: str) -> int:
        index = self._token_to_index.get(token, None)
        if index is None:
            raise UsageError(f"Token {token!r} is not in the vocabulary.")
        return index

    def token(self, index: int) -> str:
        if index < 0 or index >= len(self._index_to_token):
            raise UsageError(f"Index {index} out of range for vocabulary of size {len(self)}.")
        return self._index_to_token[index]

    def encode(self, tokens: Iterable[str]) -> List[int]:
        return [self.index(t) for t in tokens]

    def tokens(self) -> List[str]:
        """All tokens in index order, PAD excluded."""
        return list(self._index_to_token[1:])


def build_vocabulary(corpora: Iterable[Sequence[str]]) -> Vocabulary:
    """Collect every distinct token in order of first occurrence."""
    tokens = []
    for sequence in corpora:
        tokens.extend(sequence)

    if len(tokens) == 0:
        raise UsageError("Cannot build a vocabulary from an empty corpus.")

    return Vocabulary(tokens)


class EmbeddingGroup:
    """One embedding set aligned to a vocabulary. Dimensionality is free per group."""

    def __init__(
        self,
        name: str,
        vocab: Vocabulary,
        table: np.ndarray,
        trainable: bool = True,
        oov_count: int = 0,
    ) -> None:
        if not name:
            raise UsageError("Embedding group name must not be empty.")

        # own copy, the caller's array is left untouched
        table = np.array(table, copy=True)
        if table.ndim != 2:
            raise UsageError(f"Embedding table of group {name} must be a matrix.")

        if table.shape[0] != len(vocab):
            raise UsageError(
                f"Embedding table of group {name} has {table.shape[0]} rows, vocabulary has {len(vocab)}."
            )

        if table.shape[1] <= 0:
            raise UsageError(f"Embedding group {name} must have a positive dimension.")

        self.name = name
        self.vocab = vocab
        self.table = table
        self.table[PAD_INDEX] = 0
        self.trainable = trainable
        self.oov_count = oov_count

    @property
    def dim(self) -> int:
        return self.table.shape[1]

    def copy(self) -> "EmbeddingGroup":
        return EmbeddingGroup(
            self.name, self.vocab, self.table, self.trainable, self.oov_count
        )


def init_oov(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Random vector for a word missing from the pre-trained file."""
    if dim <= 0:
        raise UsageError(f"Embedding dimension must be positive. Dimension: {dim}.")

    return rng.uniform(-OOV_RANGE, OOV_RANGE, size=dim)


def _assemble_group(
    name: str,
    vocab: Vocabulary,
    dim: int,
    found: Dict[int, np.ndarray],
    rng: np.random.Generator,
    trainable: bool,
    dtype,
) -> EmbeddingGroup:
    """Fill rows in vocabulary order so that OOV draws are deterministic."""
    table = np.zeros((len(vocab), dim), dtype=dtype)
    oov_count = 0
    for index in range(1, len(vocab)):
        vector = found.get(index, None)
        if vector is None:
            vector = init_oov(dim, rng)
            oov_count += 1
        table[index] = vector

    if oov_count > 0:
        display.v(
            f"TextCNN embeddings - Group {name} - {oov_count} of {len(vocab) - 1} words not found, randomly initialized."
        )

    return EmbeddingGroup(name, vocab, table, trainable, oov_count)


def _read_until(f, stop: bytes, skip_leading: bytes = b"") -> Optional[bytes]:
    """Read bytes up to the stop byte. None at clean end of file."""
    chunks = []
    while True:
        ch = f.read(1)
        if not ch:
            return None if len(chunks) == 0 else b"".join(chunks)
        if ch == stop:
            return b"".join(chunks)
        if len(chunks) == 0 and skip_leading and ch in skip_leading:
            continue
        chunks.append(ch)


def load_word2vec_binary(
    path: str,
    vocab: Vocabulary,
    rng: np.random.Generator,
    name: str = "word2vec",
    trainable: bool = True,
    dtype=np.float64,
) -> EmbeddingGroup:
    """Load vectors from the word2vec binary format.
    Header "<count> <dim>\\n", then per record: token bytes, 0x20, dim little-endian
    float32 values, and an optional 0x0A. Only vocabulary words are kept."""
    found = {}
    with open(path, "rb") as f:
        header = _read_until(f, b"\n")
        if header is None:
            raise FormatError(f"Empty word2vec file {path} at byte offset 0.")

        parts = header.split()
        try:
            count, dim = int(parts[0]), int(parts[1])
            if len(parts) != 2:
                raise ValueError("header must have two fields")
        except (ValueError, IndexError):
            raise FormatError(f"Malformed word2vec header in {path} at byte offset 0.")

        if dim <= 0 or count < 0:
            raise FormatError(
                f"Invalid word2vec header in {path} at byte offset 0. Count: {count}. Dimension: {dim}."
            )

        record_size = 4 * dim
        for record in range(count):
            offset = f.tell()
            token = _read_until(f, b" ", skip_leading=b"\n")
            if token is None:
                raise FormatError(
                    f"Truncated word2vec file {path} at byte offset {offset}. Expected {count} records, found {record}."
                )

            offset = f.tell()
            payload = f.read(record_size)
            if len(payload) != record_size:
                raise FormatError(
                    f"Truncated vector in word2vec file {path} at byte offset {offset}. Record {record}."
                )

            word = token.decode("utf-8", errors="replace")
            if word in vocab:
                index = vocab.index(word)
                if index != PAD_INDEX and index not in found:
                    found[index] = np.frombuffer(payload, dtype="<f4").astype(dtype)

    return _assemble_group(name, vocab, dim, found, rng, trainable, dtype)


def _is_header(fields: List[str]) -> bool:
    if len(fields) != 2:
        return False
    try:
        int(fields[0])
        int(fields[1])
    except ValueError:
        return False
    return True


def load_text_vectors(
    path: str,
    vocab: Vocabulary,
    rng: np.random.Generator,
    name: str = "glove",
    trainable: bool = True,
    dtype=np.float64,
) -> EmbeddingGroup:
    """Load vectors from a text file with one "token v1 ... vd" record per line.
    An optional first line of exactly two integers is treated as a header."""
    found = {}
    dim = None
    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            fields = line.rstrip("\r\n").rstrip(" ").split(" ")
            if len(fields) == 1 and fields[0] == "":
                continue

            if line_number == 1 and _is_header(fields):
                dim = int(fields[1])
                if dim <= 0:
                    raise FormatError(f"Invalid dimension in header of {path} at line 1.")
                continue

            if dim is None:
                dim = len(fields) - 1
                if dim <= 0:
                    raise FormatError(f"Record without values in {path} at line {line_number}.")

            if len(fields) - 1 != dim:
                raise FormatError(
                    f"Inconsistent dimension in {path} at line {line_number}. Expected {dim}, found {len(fields) - 1}."
                )

            # every record is parsed, words outside the vocabulary included
            try:
                vector = np.array([float(v) for v in fields[1:]], dtype=dtype)
            except ValueError as err:
                raise FormatError(f"Unparseable value in {path} at line {line_number}. Error: {err}.")

            word = fields[0]
            if word not in vocab:
                continue

            index = vocab.index(word)
            if index not in found:
                found[index] = vector

    if dim is None:
        raise FormatError(f"No vectors found in {path}.")

    return _assemble_group(name, vocab, dim, found, rng, trainable, dtype)


def random_group(
    name: str,
    vocab: Vocabulary,
    dim: int,
    rng: np.random.Generator,
    trainable: bool = True,
    dtype=np.float64,
) -> EmbeddingGroup:
    """Group without pre-trained vectors, every word initialized like an OOV word."""
    return _assemble_group(name, vocab, dim, {}, rng, trainable, dtype)


def write_word2vec_binary(
    path: str,
    tokens: Sequence[str],
    vectors: np.ndarray,
    trailing_newline: bool = True,
) -> None:
    vectors = np.asarray(vectors, dtype="<f4")
    with open(path, "wb") as f:
        f.write(f"{len(tokens)} {vectors.shape[1]}\n".encode("ascii"))
        for token, vector in zip(tokens, vectors):
            f.write(token.encode("utf-8") + b" ")
            f.write(vector.tobytes())
            if trailing_newline:
                f.write(b"\n")


def write_text_vectors(
    path: str, tokens: Sequence[str], vectors: np.ndarray, header: bool = False
) -> None:
    vectors = np.asarray(vectors)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        if header:
            f.write(f"{len(tokens)} {vectors.shape[1]}\n")
        for token, vector in zip(tokens, vectors):
            f.write(token + " " + " ".join(repr(float(v)) for v in vector) + "\n")
