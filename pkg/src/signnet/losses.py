"""Loss functions; each returns (scalar value, gradient w.r.t. predictions).

Log arguments are clamped to [1e-12, 1 - 1e-12]; the matching gradients use
the clamped probabilities so analytic and finite-difference values agree
away from the clamp boundary.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError, ShapeError
from .layers import softmax
from .tensor import Tensor

CLAMP_EPS = 1e-12


def _check_same_shape(pred, target, name):
    if pred.shape != target.shape:
        raise ShapeError(f"{name}: shapes differ, {pred.shape} vs {target.shape}")


def mse_loss(pred: Tensor, target: Tensor) -> tuple[float, Tensor]:
    _check_same_shape(pred, target, "mse")
    n = pred.size
    diff = pred - target
    value = float((diff * diff).sum() / n)
    return value, diff * (2.0 / n)


def mae_loss(pred: Tensor, target: Tensor) -> tuple[float, Tensor]:
    _check_same_shape(pred, target, "mae")
    n = pred.size
    diff = pred - target
    value = float(np.abs(diff).sum() / n)
    return value, np.sign(diff) * (1.0 / n)


def _check_binary(target, name):
    if not np.isin(target, (0, 1)).all():
        raise ParameterError(f"{name}: targets must be 0 or 1")


def bce_loss(pred: Tensor, target: Tensor) -> tuple[float, Tensor]:
    """Binary cross entropy over probabilities."""
    _check_same_shape(pred, target, "bce")
    _check_binary(target, "bce")
    n = pred.size
    p = np.clip(pred, CLAMP_EPS, 1.0 - CLAMP_EPS)
    value = float(-(target * np.log(p) + (1.0 - target) * np.log(1.0 - p)).sum() / n)
    grad = (p - target) / (p * (1.0 - p)) / n
    return value, grad.astype(pred.dtype, copy=False)


def categorical_cross_entropy(pred: Tensor, target: Tensor) -> tuple[float, Tensor]:
    """Per-class binary cross entropy, summed over classes and scaled by 1/C.

    pred rows must lie in the probability simplex (within 1e-6); target rows
    must be exactly one-hot.
    """
    _check_same_shape(pred, target, "cce")
    if pred.ndim != 2:
        raise ShapeError(f"cce expects [N, C], got {pred.shape}")
    if np.abs(pred.sum(axis=1) - 1.0).max() > 1e-6 or pred.min() < -1e-6:
        raise ParameterError("cce: prediction rows must lie in the simplex")
    _check_binary(target, "cce")
    if not (target.sum(axis=1) == 1).all():
        raise ParameterError("cce: target rows must be one-hot")
    batch, classes = pred.shape
    p = np.clip(pred, CLAMP_EPS, 1.0 - CLAMP_EPS)
    per_term = target * np.log(p) + (1.0 - target) * np.log(1.0 - p)
    value = float(-per_term.sum() / (batch * classes))
    grad = -(target / p - (1.0 - target) / (1.0 - p)) / (batch * classes)
    return value, grad.astype(pred.dtype, copy=False)


def _check_labels(scores, labels, name):
    if scores.ndim != 2:
        raise ShapeError(f"{name} expects [N, C] scores, got {scores.shape}")
    labels = np.asarray(labels)
    if labels.shape != (scores.shape[0],):
        raise ShapeError(
            f"{name}: labels shape {labels.shape} does not match batch {scores.shape[0]}"
        )
    if labels.min() < 0 or labels.max() >= scores.shape[1]:
        raise ParameterError(f"{name}: label outside [0, {scores.shape[1]})")
    return labels.astype(np.int64)


def softmax_cross_entropy(scores: Tensor, labels) -> tuple[float, Tensor]:
    """Cross entropy on raw scores; gradient is (softmax - onehot) / batch."""
    labels = _check_labels(scores, labels, "softmax cross entropy")
    batch = scores.shape[0]
    shifted = scores - scores.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    value = float((log_z - shifted[np.arange(batch), labels]).sum() / batch)
    grad = softmax(scores)
    grad[np.arange(batch), labels] -= 1.0
    grad /= batch
    return value, grad.astype(scores.dtype, copy=False)


def hinge_loss(scores: Tensor, labels, delta: float = 1.0) -> tuple[float, Tensor]:
    """Multiclass margin loss: mean over the batch of
    sum_{j != y} max(0, s_j - s_y + delta)."""
    if delta < 0:
        raise ParameterError(f"margin must be >= 0, got {delta}")
    labels = _check_labels(scores, labels, "hinge")
    batch = scores.shape[0]
    rows = np.arange(batch)
    correct = scores[rows, labels][:, None]
    margins = scores - correct + delta
    margins[rows, labels] = 0.0
    violating = margins > 0
    value = float(np.where(violating, margins, 0.0).sum() / batch)
    grad = violating.astype(scores.dtype)
    grad[rows, labels] = -violating.sum(axis=1).astype(scores.dtype)
    grad /= batch
    return value, grad
