"""Adam with box projection, norm clipping, and a plateau LR schedule."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(w, grad, state: AdamState, lr: float, beta1=0.9, beta2=0.999, eps=1e-8,
              bounds: tuple[float, float] | None = (0.0, 1.0)):
    """One bias-corrected Adam update; returns ``(w', state')`` without mutating inputs.

    With ``bounds`` set, the updated weights are clipped into the box.
    """
    w = np.asarray(w, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if w.shape != grad.shape or w.shape != state.m.shape:
        raise ValueError(f"shape mismatch: w{w.shape} grad{grad.shape} state{state.m.shape}")
    t = state.t + 1
    m = beta1 * state.m + (1 - beta1) * grad
    v = beta2 * state.v + (1 - beta2) * grad * grad
    m_hat = m / (1 - beta1 ** t)
    v_hat = v / (1 - beta2 ** t)
    w_new = w - lr * m_hat / (np.sqrt(v_hat) + eps)
    if bounds is not None:
        w_new = np.clip(w_new, *bounds)
    return w_new, AdamState(m, v, t)


def clip_gradient(grad, max_norm: float = 1.0) -> np.ndarray:
    grad = np.asarray(grad, dtype=float)
    norm = float(np.sqrt(np.dot(grad, grad)))
    if norm > max_norm:
        return grad * (max_norm / norm)
    return grad.copy()


@dataclass
class PlateauScheduler:
    """Halve-on-plateau schedule: ``factor`` after ``patience`` epochs
    without an improvement larger than ``threshold`` (absolute)."""

    lr: float
    factor: float = 0.5
    patience: int = 3
    threshold: float = 1e-5
    min_lr: float = 0.0
    best: float = field(default=float("inf"))
    bad_epochs: int = 0

    def step(self, metric: float) -> float:
        if metric < self.best - self.threshold:
            self.best = metric
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                self.lr = max(self.lr * self.factor, self.min_lr)
                self.bad_epochs = 0
        return self.lr
