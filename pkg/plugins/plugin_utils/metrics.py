#!/usr/bin/env python
# -*- coding: utf-8 -*-

# Copyright (c) 2024, ZPE Systems <zpesystems.com>
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

# Make coding more python3-ish, this is required for contributions to Ansible
from __future__ import absolute_import, division, print_function

__metaclass__ = type

import numpy as np
from scipy.stats import rankdata

from ansible_collections.zpe.textcnn.plugins.plugin_utils.errors import UsageError

METRICS = ("accuracy", "auc")


def accuracy(predictions: np.ndarray, labels: np.ndarray) -> float:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise UsageError(
            f"Predictions and labels differ in length. Predictions: {len(predictions)}. Labels: {len(labels)}."
        )

    if labels.size == 0:
        raise UsageError("Cannot compute accuracy of an empty set.")

    return float(np.mean(predictions == labels))


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Area under the ROC curve as the Mann-Whitney statistic.
    Ties between a positive and a negative score count one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise UsageError(
            f"Scores and labels differ in length. Scores: {len(scores)}. Labels: {len(labels)}."
        )

    positive = labels == 1
    n_pos = int(np.sum(positive))
    n_neg = int(np.sum(labels == 0))
    if n_pos + n_neg != labels.size:
        raise UsageError("AUC requires binary labels 0 and 1.")

    if n_pos == 0 or n_neg == 0:
        raise UsageError("AUC requires both classes to be present.")

    ranks = rankdata(scores, method="average")
    u = np.sum(ranks[positive]) - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def compute_metric(metric: str, probs: np.ndarray, labels: np.ndarray) -> float:
    """Metric of class probabilities. AUC scores the probability of class 1."""
    if metric == "accuracy":
        return accuracy(np.argmax(probs, axis=1), labels)
    elif metric == "auc":
        if probs.shape[1] != 2:
            raise UsageError(f"AUC requires a binary task. Classes: {probs.shape[1]}.")
        return auc(probs[:, 1], labels)

    raise UsageError(f"Metric must be one of {METRICS}. Metric: {metric}.")
