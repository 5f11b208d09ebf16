"""Parameter update rules.  All updates mutate parameter arrays in place."""

from __future__ import annotations

import numpy as np

from .errors import NumericError, ParameterError
from .tensor import Tensor


def _check_finite(name: str, grad: Tensor) -> None:
    if not np.isfinite(grad).all():
        raise NumericError(f"non-finite gradient for parameter {name!r}")


class Optimizer:
    def step(self, params: dict[str, Tensor], grads: dict[str, Tensor]) -> None:
        raise NotImplementedError


class Sgd(Optimizer):
    """Plain stochastic gradient descent: theta <- theta - lr * grad."""

    def __init__(self, lr: float):
        if lr < 0:
            raise ParameterError(f"learning rate must be >= 0, got {lr}")
        self.lr = float(lr)

    def step(self, params, grads):
        for name, p in params.items():
            g = grads[name]
            _check_finite(name, g)
            p -= self.lr * g


class Adam(Optimizer):
    """Adam with bias-corrected first and second moments."""

    def __init__(
        self,
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        if lr < 0:
            raise ParameterError(f"learning rate must be >= 0, got {lr}")
        if not 0.0 <= beta1 < 1.0 or not 0.0 <= beta2 < 1.0:
            raise ParameterError(f"betas must lie in [0, 1), got {beta1}, {beta2}")
        if eps <= 0:
            raise ParameterError(f"eps must be positive, got {eps}")
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.state: dict[str, tuple[Tensor, Tensor]] = {}

    def step(self, params, grads):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in params.items():
            g = grads[name]
            _check_finite(name, g)
            if name not in self.state:
                self.state[name] = (np.zeros_like(p), np.zeros_like(p))
            m, v = self.state[name]
            # update biased moments, then correct
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / bc1
            v_hat = v / bc2
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(kind: str, lr: float) -> Optimizer:
    if kind == "sgd":
        return Sgd(lr)
    if kind == "adam":
        return Adam(lr)
    raise ParameterError(f"unknown optimizer {kind!r}")
