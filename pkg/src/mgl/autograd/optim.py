"""Momentum SGD with the poly learning-rate schedule."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def poly_lr(iteration: int, max_iter: int, base_lr: float, power: float) -> float:
    if not 0 <= iteration < max_iter:
        raise ValueError(f"iteration {iteration} outside [0, {max_iter})")
    return base_lr * (1.0 - iteration / max_iter) ** power


def sgd_poly_step(params, grads, velocities, iteration, max_iter, base_lr, power,
                  momentum) -> float:
    """One in-place update p <- p - lr * v with v <- momentum*v + g; returns lr."""
    lr = poly_lr(iteration, max_iter, base_lr, power)
    for p, g, v in zip(params, grads, velocities):
        v *= momentum
        if g is not None:
            v += g
        p -= p.dtype.type(lr) * v
    return lr


class SgdPoly:
    """Holds per-parameter velocity state over a named parameter dict."""

    def __init__(self, params: dict[str, Tensor], base_lr: float, power: float,
                 momentum: float, max_iter: int):
        self.params = params
        self.base_lr = base_lr
        self.power = power
        self.momentum = momentum
        self.max_iter = max_iter
        self.velocities = {name: np.zeros_like(p.data) for name, p in params.items()}

    def step(self, iteration: int) -> float:
        names = list(self.params)
        return sgd_poly_step(
            [self.params[n].data for n in names],
            [self.params[n].grad for n in names],
            [self.velocities[n] for n in names],
            iteration, self.max_iter, self.base_lr, self.power, self.momentum)

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.grad = None
