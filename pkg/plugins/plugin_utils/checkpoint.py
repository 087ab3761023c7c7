#!/usr/bin/env python
# -*- coding: utf-8 -*-

# Copyright (c) 2024, ZPE Systems <zpesystems.com>
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

# Make coding more python3-ish, this is required for contributions to Ansible
from __future__ import absolute_import, division, print_function

__metaclass__ = type

import json
import zipfile
from typing import Dict, List, Optional, Tuple

import numpy as np

from ansible_collections.zpe.textcnn.plugins.plugin_utils.embeddings import (
    EmbeddingGroup,
    Vocabulary,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.errors import (
    FormatError,
    UsageError,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.model import (
    Classifier,
    FilterBank,
    ModelParams,
)

CHECKPOINT_FORMAT_VERSION = 1
ENTRY_TIMESTAMP = (1980, 1, 1, 0, 0, 0)


def save_checkpoint(
    path: str,
    params: ModelParams,
    vocab: Vocabulary,
    labels: List[str],
    config: Optional[Dict] = None,
) -> None:
    """Write every tensor and the metadata needed to rebuild the model into a .npz file."""
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "variant": params.variant,
        "groups": [
            {"name": g.name, "trainable": g.trainable, "oov_count": g.oov_count}
            for g in params.groups
        ],
        "heights": list(params.heights),
        "maps": params.banks[0].maps,
        "activation": params.banks[0].activation,
        "boundaries": [list(b) for b in params.classifier.boundaries],
        "vocab": vocab.tokens(),
        "labels": list(labels),
        "config": config or {},
    }

    arrays = {
        "meta": np.array(json.dumps(meta, sort_keys=True)),
        "classifier.w": params.classifier.weights,
        "classifier.b": params.classifier.bias,
    }
    for l, (group, bank) in enumerate(zip(params.groups, params.banks)):
        arrays[f"group.{l}.table"] = group.table
        for h in bank.heights:
            arrays[f"filters.{l}.{h}.w"] = bank.weights[h]
            arrays[f"filters.{l}.{h}.b"] = bank.biases[h]

    # same layout as np.savez, with fixed entry timestamps so equal models give equal files
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED, allowZip64=True) as archive:
        for key, value in arrays.items():
            info = zipfile.ZipInfo(f"{key}.npy", date_time=ENTRY_TIMESTAMP)
            with archive.open(info, "w", force_zip64=True) as f:
                np.lib.format.write_array(f, np.asanyarray(value), allow_pickle=False)


def load_checkpoint(path: str) -> Tuple[ModelParams, Vocabulary, List[str], Dict]:
    """Read a checkpoint written by save_checkpoint. Unreadable or incompatible files raise FormatError."""
    try:
        with np.load(path, allow_pickle=False) as data:
            arrays = {k: data[k] for k in data.files}
    except (OSError, ValueError, EOFError, zipfile.BadZipFile) as err:
        raise FormatError(f"Corrupt checkpoint {path}. Error: {err}")

    try:
        meta = json.loads(str(arrays["meta"]))
    except (KeyError, ValueError) as err:
        raise FormatError(f"Checkpoint {path} has no readable metadata. Error: {err}")

    version = meta.get("format_version", None)
    if version != CHECKPOINT_FORMAT_VERSION:
        raise FormatError(
            f"Unsupported checkpoint format version in {path}. Expected {CHECKPOINT_FORMAT_VERSION}, found {version}."
        )

    try:
        vocab = Vocabulary(meta["vocab"])
        groups = []
        banks = []
        for l, g in enumerate(meta["groups"]):
            table = arrays[f"group.{l}.table"]
            groups.append(EmbeddingGroup(g["name"], vocab, table, g["trainable"], g["oov_count"]))
            banks.append(
                FilterBank(
                    g["name"],
                    table.shape[1],
                    meta["heights"],
                    meta["maps"],
                    meta["activation"],
                    {h: arrays[f"filters.{l}.{h}.w"] for h in meta["heights"]},
                    {h: arrays[f"filters.{l}.{h}.b"] for h in meta["heights"]},
                )
            )

        classifier = Classifier(
            arrays["classifier.w"], arrays["classifier.b"], [tuple(b) for b in meta["boundaries"]]
        )
        params = ModelParams(meta["variant"], groups, banks, classifier)
    except (KeyError, TypeError, UsageError) as err:
        raise FormatError(f"Incompatible checkpoint {path}. Error: {err}")

    return params, vocab, meta["labels"], meta["config"]
