# Copyright (c) 2024, ZPE Systems <zpesystems.com>
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

import numpy as np
import pytest
import sys

if not sys.warnoptions:
    import warnings

    warnings.simplefilter("ignore")

from ansible_collections.zpe.textcnn.plugins.plugin_utils.errors import UsageError
from ansible_collections.zpe.textcnn.plugins.plugin_utils.metrics import (
    accuracy,
    auc,
    compute_metric,
)


""" Tests for accuracy """


def test_accuracy():
    assert accuracy(np.array([0, 1, 1, 2]), np.array([0, 1, 0, 2])) == pytest.approx(0.75)


def test_accuracy_length_mismatch():
    with pytest.raises(UsageError):
        accuracy(np.array([0, 1]), np.array([0]))


def test_accuracy_empty():
    with pytest.raises(UsageError):
        accuracy(np.array([]), np.array([]))


""" Tests for accuracy """


""" Tests for auc """


@pytest.mark.parametrize(
    ("scores", "labels", "expected"),
    [
        ([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1], 0.75),
        ([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0], 1.0),
        ([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1], 0.0),
        ([0.5, 0.5, 0.5, 0.5], [0, 1, 0, 1], 0.5),
        ([0.2, 0.5, 0.5, 0.9], [0, 0, 1, 1], 0.875),
    ],
)
def test_auc(scores, labels, expected):
    """Ties between classes count one half."""
    assert auc(np.array(scores), np.array(labels)) == pytest.approx(expected)


def _pairwise_auc(scores, labels):
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    return wins / (len(pos) * len(neg))


def test_auc_matches_pair_enumeration():
    """Random instances with many ties agree with counting every positive-negative pair."""
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(2, 40))
        labels = rng.integers(0, 2, n)
        labels[0], labels[1] = 0, 1
        scores = rng.integers(0, 6, n) / 5.0
        assert auc(scores, labels) == pytest.approx(_pairwise_auc(scores, labels), abs=1e-12)


def test_auc_invariant_under_increasing_transform():
    rng = np.random.default_rng(1)
    for _ in range(100):
        labels = rng.integers(0, 2, 30)
        labels[0], labels[1] = 0, 1
        scores = rng.integers(0, 10, 30) / 10.0
        assert auc(np.exp(3 * scores) - 2, labels) == auc(scores, labels)


def test_auc_single_class():
    with pytest.raises(UsageError):
        auc(np.array([0.1, 0.2]), np.array([1, 1]))


def test_auc_non_binary_labels():
    with pytest.raises(UsageError):
        auc(np.array([0.1, 0.2, 0.3]), np.array([0, 1, 2]))


""" Tests for auc """


""" Tests for compute_metric """


def test_compute_metric_accuracy():
    probs = np.array([[0.9, 0.1], [0.4, 0.6], [0.7, 0.3]])
    assert compute_metric("accuracy", probs, np.array([0, 1, 1])) == pytest.approx(2 / 3)


def test_compute_metric_auc_uses_positive_class():
    probs = np.array([[0.9, 0.1], [0.4, 0.6], [0.7, 0.3]])
    assert compute_metric("auc", probs, np.array([0, 1, 1])) == pytest.approx(1.0)


def test_compute_metric_auc_multiclass():
    with pytest.raises(UsageError):
        compute_metric("auc", np.ones((2, 3)) / 3, np.array([0, 1]))


def test_compute_metric_unknown():
    with pytest.raises(UsageError):
        compute_metric("f1", np.ones((2, 2)) / 2, np.array([0, 1]))


""" Tests for compute_metric """
