"""Momentum SGD."""

from __future__ import annotations

import numpy as np


def zero_grads(params) -> None:
    for p in params:
        p.grad = None


def sgd_step(params, lr: float, momentum: float = 0.0) -> None:
    """``v <- momentum * v + g``; ``p <- p - lr * v``. Parameters without a gradient are skipped."""
    for p in params:
        if p.grad is None:
            continue
        if p.momentum is None:
            p.momentum = np.zeros_like(p.data)
        p.momentum *= momentum
        p.momentum += p.grad
        p.data -= lr * p.momentum


class Adam:
    """Adam with bias correction; state lives on the optimizer."""

    def __init__(self, params, lr: float = 1e-2, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            m *= self.b1
            m += (1.0 - self.b1) * p.grad
            v *= self.b2
            v += (1.0 - self.b2) * p.grad ** 2
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
