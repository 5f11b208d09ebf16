"""Classic baselines: k-nearest-neighbour voting and a logistic unit.

These operate on flattened feature vectors and share the loss/optimizer
conventions of the network stack.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError, ShapeError
from .layers import sigmoid
from .tensor import Tensor


def euclidean_distance(a: Tensor, b: Tensor) -> float:
    if a.shape != b.shape:
        raise ShapeError(f"distance operands differ: {a.shape} vs {b.shape}")
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.sqrt((diff * diff).sum()))


def knn_classify(query: Tensor, stored: Tensor, labels, k: int = 5) -> int:
    """Majority vote among the k nearest stored vectors.

    Neighbour distance ties resolve to the lower stored index.  Vote ties
    resolve to the tied class whose nearest member is closest (then lower
    index on exact distance ties).
    """
    stored = np.asarray(stored, dtype=np.float64)
    labels = np.asarray(labels)
    if stored.ndim != 2:
        raise ShapeError(f"stored vectors must be [N, D], got {stored.shape}")
    if labels.shape != (stored.shape[0],):
        raise ShapeError(
            f"labels {labels.shape} do not match {stored.shape[0]} stored vectors"
        )
    if not 1 <= k <= stored.shape[0]:
        raise ParameterError(f"k must be in [1, {stored.shape[0]}], got {k}")
    q = np.asarray(query, dtype=np.float64).reshape(-1)
    if q.shape[0] != stored.shape[1]:
        raise ShapeError(f"query dim {q.shape[0]} vs stored dim {stored.shape[1]}")
    deltas = stored - q[None, :]
    distances = np.sqrt((deltas * deltas).sum(axis=1))
    # stable sort on distance keeps lower indices first among equals
    order = np.argsort(distances, kind="stable")[:k]
    votes: dict[int, int] = {}
    best_member: dict[int, int] = {}  # class -> position in `order` of nearest member
    for rank, idx in enumerate(order):
        label = int(labels[idx])
        votes[label] = votes.get(label, 0) + 1
        best_member.setdefault(label, rank)
    top = max(votes.values())
    tied = [label for label, count in votes.items() if count == top]
    return min(tied, key=lambda label: best_member[label])


def linear_scores(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """Class scores W x + b for a batch; weights [C, D], bias [C]."""
    x = np.asarray(x)
    if x.ndim != 2 or weights.ndim != 2 or x.shape[1] != weights.shape[1]:
        raise ShapeError(
            f"linear scores shapes: x {x.shape}, weights {weights.shape}"
        )
    if bias.shape != (weights.shape[0],):
        raise ShapeError(f"bias {bias.shape} vs {weights.shape[0]} classes")
    return x @ weights.T + bias


def logistic_train_step(
    weights: Tensor, bias: float, x: Tensor, y: Tensor, lr: float
) -> tuple[Tensor, float]:
    """One full-batch gradient step of a single logistic unit.

    Returns the updated (weights, bias); inputs are not mutated.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ShapeError(f"logistic step shapes: x {x.shape}, y {y.shape}")
    if weights.shape != (x.shape[1],):
        raise ShapeError(f"weights {weights.shape} vs feature dim {x.shape[1]}")
    if lr <= 0:
        raise ParameterError(f"learning rate must be positive, got {lr}")
    m = x.shape[0]
    pred = sigmoid(x @ weights + bias)
    error = pred - y
    grad_w = x.T @ error / m
    grad_b = float(error.sum() / m)
    return weights - lr * grad_w, float(bias - lr * grad_b)


def logistic_fit(
    x: Tensor, y: Tensor, lr: float = 0.5, epochs: int = 200
) -> tuple[Tensor, float, int]:
    """Run logistic steps until training accuracy hits 1.0 or epochs run out.

    Returns (weights, bias, epochs_used)."""
    x = np.asarray(x, dtype=np.float64)
    weights = np.zeros(x.shape[1], dtype=np.float64)
    bias = 0.0
    used = 0
    for epoch in range(1, epochs + 1):
        weights, bias = logistic_train_step(weights, bias, x, y, lr)
        used = epoch
        pred = sigmoid(x @ weights + bias) >= 0.5
        if (pred == (np.asarray(y) == 1)).all():
            break
    return weights, bias, used
