"""Adam optimizer and the stepped learning-rate schedule."""

from __future__ import annotations

import numpy as np

from .tensor import Parameter


class LrSchedule:
    """Initial rate scaled by `factor` at each decay epoch (epochs are 1-based).

    Defaults follow the training protocol used throughout: 5e-4 initial,
    a tenfold drop entering epochs 10 and 15, 30 epochs total.
    """

    def __init__(
        self,
        initial: float = 5e-4,
        decay_epochs: tuple[int, ...] = (10, 15),
        factor: float = 0.1,
    ):
        self.initial = initial
        self.decay_epochs = tuple(sorted(decay_epochs))
        self.factor = factor

    def lr_at(self, epoch: int) -> float:
        drops = sum(1 for d in self.decay_epochs if epoch >= d)
        return self.initial * self.factor**drops


class Adam:
    """Standard bias-corrected Adam over a fixed parameter list."""

    def __init__(
        self,
        params: list[Parameter],
        lr: float = 5e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self, lr: float | None = None) -> None:
        if lr is None:
            lr = self.lr
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**t
        bc2 = 1.0 - b2**t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            upd = v * (1.0 / bc2)
            np.sqrt(upd, out=upd)
            upd += self.eps
            np.divide(m, upd, out=upd)
            upd *= lr / bc1
            p.data -= upd.astype(p.data.dtype, copy=False)
