"""Optimizers, gradient clipping, plateau schedule, finite-difference checks."""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import UsageError
from .tensor import Tensor


class Optimizer:
    def __init__(self, params: Iterable[Tensor], lr: float):
        self.params = list(params)
        if not self.params:
            raise UsageError("optimizer needs at least one parameter")
        self.lr = lr
        self.step_count = 0

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def _check_grads(self) -> None:
        if all(p.grad is None for p in self.params):
            raise UsageError("step() called with no gradients populated")

    def step(self) -> None:
        raise NotImplementedError


class SGD(Optimizer):
    def __init__(self, params, lr: float, momentum: float = 0.0):
        super().__init__(params, lr)
        self.momentum = momentum
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self._check_grads()
        self.step_count += 1
        for p, v in zip(self.params, self.velocity):
            if p.grad is None:
                continue
            if self.momentum:
                v *= self.momentum
                v += p.grad
                p.data -= self.lr * v
            else:
                p.data -= self.lr * p.grad


class Adam(Optimizer):
    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        super().__init__(params, lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self._check_grads()
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


class ReduceOnPlateau:
    """Multiply the lr by `factor` when the tracked metric stops improving."""

    def __init__(self, optimizer: Optimizer, factor: float = 0.2,
                 patience: int = 2, mode: str = "max", min_delta: float = 1e-4):
        if mode not in ("max", "min"):
            raise UsageError(f"mode must be 'max' or 'min', got {mode!r}")
        self.optimizer = optimizer
        self.factor = factor
        self.patience = patience
        self.mode = mode
        self.min_delta = min_delta
        self.best: float | None = None
        self.bad_epochs = 0
        self.num_drops = 0

    def update(self, metric: float) -> bool:
        """Feed one epoch's metric; returns True when the lr was dropped."""
        improved = (self.best is None or
                    (self.mode == "max" and metric > self.best + self.min_delta) or
                    (self.mode == "min" and metric < self.best - self.min_delta))
        if improved:
            self.best = metric
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        if self.bad_epochs > self.patience:
            self.optimizer.lr *= self.factor
            self.num_drops += 1
            self.bad_epochs = 0
            return True
        return False


def clip_global_norm(params: Sequence[Tensor], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm > 0:
        scale = max_norm / (norm + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor],
               h: float = 1e-5) -> float:
    """Worst relative error between analytic and central-difference gradients.

    `f` is a zero-argument closure over `params` returning a scalar loss;
    it must be re-runnable (each call builds a fresh tape).
    """
    loss = f()
    if loss.size != 1:
        raise UsageError(f"grad_check needs a scalar loss, got {loss.shape}")
    for p in params:
        p.grad = None
    loss.backward()
    analytic = [np.array(p.grad if p.grad is not None else
                         np.zeros_like(p.data)) for p in params]
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            up = f().item()
            flat[j] = orig - h
            down = f().item()
            flat[j] = orig
            num = (up - down) / (2.0 * h)
            ana = a.reshape(-1)[j]
            err = abs(ana - num) / max(abs(ana), abs(num), 1e-8)
            worst = max(worst, err)
    return worst
