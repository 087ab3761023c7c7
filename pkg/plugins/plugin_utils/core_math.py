#!/usr/bin/env python
# -*- coding: utf-8 -*-

# Copyright (c) 2024, ZPE Systems <zpesystems.com>
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

# Make coding more python3-ish, this is required for contributions to Ansible
from __future__ import absolute_import, division, print_function

__metaclass__ = type

from typing import Callable, List, Tuple

import numpy as np

from ansible_collections.zpe.textcnn.plugins.plugin_utils.errors import (
    NumericError,
    UsageError,
)

PROBABILITY_FLOOR = 1e-12

PRECISIONS = {
    "64": np.float64,
    "32": np.float32,
}


def make_rng(seed: int) -> np.random.Generator:
    """Create a deterministic generator.
    The bit generator is PCG64 (numpy), seeded through SeedSequence, which gives the
    same stream for the same seed on every platform."""
    if seed is None or int(seed) < 0:
        raise UsageError(f"Seed must be a non-negative integer. Seed: {seed}.")

    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def spawn_rngs(seed: int, count: int) -> List[np.random.Generator]:
    """Independent PCG64 streams derived from one seed."""
    if seed is None or int(seed) < 0:
        raise UsageError(f"Seed must be a non-negative integer. Seed: {seed}.")

    children = np.random.SeedSequence(int(seed)).spawn(count)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def resolve_dtype(precision: str) -> type:
    dtype = PRECISIONS.get(str(precision), None)
    if dtype is None:
        raise UsageError(
            f"Precision must be one of {sorted(PRECISIONS)}. Precision: {precision}."
        )

    return dtype


def l2_norm(v: np.ndarray) -> float:
    v = np.asarray(v)
    if v.size == 0:
        raise UsageError("Cannot compute the l2 norm of an empty vector.")

    return float(np.linalg.norm(v.ravel()))


def norm_slack(dtype) -> float:
    """Relative excess over a max-norm bound that is still accepted as within it.
    Rescaled vectors land on the bound up to rounding, so a second rescale must
    see them as already inside."""
    eps = np.finfo(dtype).eps
    return max(1e-12, 64 * float(eps))


def max_norm_scale(norm: float, lam: float, dtype=np.float64) -> float:
    """Factor that brings a vector of the given norm inside the bound lam."""
    if lam <= 0:
        raise UsageError(f"Max norm bound must be positive. Lambda: {lam}.")

    if norm <= lam * (1.0 + norm_slack(dtype)):
        return 1.0

    return lam / norm


def rescale_to_max_norm(v: np.ndarray, lam: float) -> np.ndarray:
    """Return v if its l2 norm is within lam, otherwise v scaled onto the bound."""
    if lam <= 0:
        raise UsageError(f"Max norm bound must be positive. Lambda: {lam}.")

    v = np.asarray(v)
    if v.dtype.kind != "f":
        v = v.astype(np.float64)

    if v.size == 0:
        return v.copy()

    scale = max_norm_scale(l2_norm(v), lam, v.dtype)
    if scale == 1.0:
        return v.copy()

    return v * v.dtype.type(scale)


def rescale_rows_to_max_norm(
    matrix: np.ndarray, lam: float
) -> Tuple[np.ndarray, np.ndarray]:
    """Row-wise rescale_to_max_norm. Returns rescaled rows and the applied factors."""
    if lam <= 0:
        raise UsageError(f"Max norm bound must be positive. Lambda: {lam}.")

    norms = np.sqrt(np.sum(matrix * matrix, axis=1))
    limit = lam * (1.0 + norm_slack(matrix.dtype))
    scales = np.ones_like(norms)
    over = norms > limit
    scales[over] = lam / norms[over]

    return matrix * scales[:, None], scales


def softmax(z: np.ndarray) -> np.ndarray:
    """Softmax along the last axis, computed with max-subtraction."""
    z = np.asarray(z)
    if z.size == 0:
        raise UsageError("Cannot compute softmax of an empty vector.")

    shifted = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, label: int) -> float:
    probs = np.asarray(probs)
    if label < 0 or label >= probs.shape[-1]:
        raise UsageError(
            f"Label {label} out of range for {probs.shape[-1]} classes."
        )

    return float(-np.log(max(float(probs[label]), PROBABILITY_FLOOR)))


def finite_difference_gradient(
    f: Callable[[np.ndarray], float], theta: np.ndarray, h: float = 1e-5
) -> np.ndarray:
    """Central differences: component i = (f(theta + h e_i) - f(theta - h e_i)) / 2h.
    theta may have any shape; the result has the same shape."""
    if h <= 0:
        raise UsageError(f"Finite difference step must be positive. Step: {h}.")

    theta = np.array(theta, dtype=np.float64)
    grad = np.zeros_like(theta)
    flat_theta = theta.reshape(-1)
    flat_grad = grad.reshape(-1)

    for i in range(flat_theta.size):
        original = flat_theta[i]

        flat_theta[i] = original + h
        f_plus = f(theta)
        flat_theta[i] = original - h
        f_minus = f(theta)
        flat_theta[i] = original

        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericError(
                f"Non-finite function value while differentiating component {i}."
            )

        flat_grad[i] = (f_plus - f_minus) / (2.0 * h)

    return grad
