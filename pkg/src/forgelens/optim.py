"""Decoupled-weight-decay Adam and the warmup + one-cycle cosine schedule."""

from __future__ import annotations

import math
from typing import Dict

import numpy as np

from .autodiff import Tensor


class AdamW:
    """Adam with decoupled weight decay over a named parameter dict."""

    def __init__(self, params: Dict[str, Tensor], lr: float = 3e-4,
                 betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = {name: p for name, p in params.items() if p.requires_grad}
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m = {n: np.zeros_like(p.data) for n, p in self.params.items()}
        self._v = {n: np.zeros_like(p.data) for n, p in self.params.items()}
        self.grad_accum = {n: 0.0 for n in self.params}  # cumulative |grad| per parameter

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def step(self):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            self.grad_accum[name] += float(np.abs(g).sum())
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay:
                update = update + self.weight_decay * p.data
            p.data -= self.lr * update


def lr_at(step: int, total_steps: int, peak: float, warmup_frac: float) -> float:
    """Linear warmup from 0 to ``peak``, then one-cycle cosine decay to 0."""
    warmup = max(1, int(round(total_steps * warmup_frac)))
    if step < warmup:
        return peak * step / warmup
    if total_steps <= warmup:
        return peak
    t = (step - warmup) / (total_steps - warmup)
    return peak * 0.5 * (1.0 + math.cos(math.pi * min(1.0, t)))
