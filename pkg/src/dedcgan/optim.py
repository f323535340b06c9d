"""First-order optimizers updating :class:`~dedcgan.tensor.Tensor` parameters in place."""
from __future__ import annotations

from typing import Iterable

import numpy as np

from .exceptions import MissingGrad
from .tensor import Tensor


class Optimizer:
    def __init__(self, params: Iterable[Tensor], lr: float):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = float(lr)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = np.zeros_like(p.data)

    def _check(self) -> None:
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise MissingGrad(f"parameter {p.name or i} has no gradient")

    def step(self) -> None:
        raise NotImplementedError

    def state_dict(self) -> dict:
        return {}


class SGD(Optimizer):
    """Plain gradient descent: ``w <- w - lr * g``."""

    def step(self) -> None:
        self._check()
        for p in self.params:
            p.data -= (self.lr * p.grad).astype(p.dtype)


class Adam(Optimizer):
    """Adam with bias-corrected moment estimates."""

    def __init__(self, params, lr: float = 2e-4, betas=(0.5, 0.999), eps: float = 1e-8):
        super().__init__(params, lr)
        self.beta1, self.beta2 = map(float, betas)
        self.eps = float(eps)
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self._check()
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            upd = self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data -= upd.astype(p.dtype)

    def state_dict(self) -> dict:
        return {"t": self.t}
