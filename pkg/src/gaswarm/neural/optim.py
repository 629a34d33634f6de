"""Adam with decoupled weight decay and two learning-rate schedules."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .layers import ParameterStore


class Adam:
    """Bias-corrected Adam; weight decay is applied as ``lr * wd * param`` after the step."""

    def __init__(self, params: ParameterStore, lr: float = 1e-3, weight_decay: float = 0.0,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params, self.lr, self.weight_decay = params, lr, weight_decay
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self) -> None:
        self.params.zero_grad()

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            m = self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            v = self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            if self.weight_decay:
                p.data = p.data - self.lr * self.weight_decay * p.data

    def state_dict(self) -> dict:
        return {"t": self.t, "lr": self.lr, "m": {k: v.copy() for k, v in self.m.items()},
                "v": {k: v.copy() for k, v in self.v.items()}}

    def load_state_dict(self, state: dict) -> None:
        self.t, self.lr = int(state["t"]), float(state["lr"])
        self.m = {k: np.array(v) for k, v in state["m"].items()}
        self.v = {k: np.array(v) for k, v in state["v"].items()}


class CyclicLR:
    """Triangular cycle between ``base_lr`` and ``max_lr``; starts at ``base_lr``."""

    def __init__(self, optimizer: Adam, base_lr: float, max_lr: float, step_size_up: int):
        if step_size_up < 1:
            raise ValueError("step_size_up must be positive")
        self.opt, self.base, self.max, self.size = optimizer, base_lr, max_lr, step_size_up
        self.iteration = 0
        optimizer.lr = self.rate(0)

    def rate(self, it: int) -> float:
        cycle = math.floor(1 + it / (2 * self.size))
        x = abs(it / self.size - 2 * cycle + 1)
        return self.base + (self.max - self.base) * max(0.0, 1.0 - x)

    def step(self) -> None:
        self.iteration += 1
        self.opt.lr = self.rate(self.iteration)


@dataclass
class ReduceLROnPlateau:
    """Multiply the rate by ``factor`` after ``patience`` epochs without relative improvement."""
    optimizer: Adam
    patience: int = 10
    factor: float = 0.1
    threshold: float = 1e-4
    min_lr: float = 0.0
    best: float = field(default=math.inf, init=False)
    bad_epochs: int = field(default=0, init=False)

    def step(self, metric: float) -> None:
        if metric < self.best * (1.0 - self.threshold):
            self.best, self.bad_epochs = metric, 0
            return
        self.bad_epochs += 1
        if self.bad_epochs > self.patience:
            self.optimizer.lr = max(self.optimizer.lr * self.factor, self.min_lr)
            self.bad_epochs = 0
