"""Behavior cloning of clause weights.

Valuations are computed once up front (the grounding and gaze stages are
frozen), so training touches nothing but the weight vector.  Minibatch Adam
with box projection to [0, 1], gradient-norm clipping, a halve-on-plateau
learning rate and early stopping on a held-out set of whole trajectories.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .optim import AdamState, PlateauScheduler, adam_step, clip_gradient
from .reasoner import InferenceGraph, ReasonerConfig, loss_and_grad

LR_GRID = (0.02, 0.01, 0.001, 0.0005, 0.0001)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 32
    max_epochs: int = 100
    plateau_factor: float = 0.5
    plateau_patience: int = 3
    early_stopping_patience: int = 5
    grad_clip_norm: float = 1.0
    validation_fraction: float = 0.05
    min_delta: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    lr_grid: tuple[float, ...] = LR_GRID

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("learning_rate and batch_size must be positive, max_epochs >= 0")
        if not 0 < self.validation_fraction < 1:
            raise ValueError("validation_fraction must be in (0, 1)")
        if not self.lr_grid:
            raise ValueError("lr_grid must not be empty")


class TrainingError(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class TrainReport:
    weights: np.ndarray
    best_epoch: int
    best_val_loss: float
    train_losses: list[float]
    val_losses: list[float]
    lrs: list[float]
    stop_reason: str  # early_stopping, max_epochs or non_finite
    wall_seconds: float = field(default=0.0, compare=False)

    def __eq__(self, other):
        if not isinstance(other, TrainReport):
            return NotImplemented
        return (np.array_equal(self.weights, other.weights)
                and self.best_epoch == other.best_epoch
                and self.best_val_loss == other.best_val_loss
                and self.train_losses == other.train_losses
                and self.val_losses == other.val_losses
                and self.lrs == other.lrs
                and self.stop_reason == other.stop_reason)

    @property
    def epochs_run(self) -> int:
        return len(self.train_losses)


def policy_loss(V, actions, w, graph: InferenceGraph, cfg: ReasonerConfig = ReasonerConfig()) -> float:
    return loss_and_grad(V, actions, w, graph, cfg, need_grad=False)[0]


def policy_grad(V, actions, w, graph: InferenceGraph, cfg: ReasonerConfig = ReasonerConfig()) -> np.ndarray:
    return loss_and_grad(V, actions, w, graph, cfg)[1]


def split_by_trajectory(traj_ids, fraction: float, rng: np.random.Generator):
    """Boolean validation mask holding out whole trajectories (at least one,
    never all)."""
    traj_ids = np.asarray(traj_ids)
    uniq = np.unique(traj_ids)
    if uniq.size < 2:
        raise ValueError("validation split needs at least two trajectories")
    k = min(uniq.size - 1, max(1, int(math.ceil(fraction * uniq.size))))
    held = rng.choice(uniq, size=k, replace=False)
    return np.isin(traj_ids, held)


def init_weights(n: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).uniform(0.0, 1.0, n)


def train(V, actions, traj_ids, graph: InferenceGraph, cfg: TrainConfig = TrainConfig(),
          rcfg: ReasonerConfig = ReasonerConfig(), w0=None, log_path=None, backend=None) -> TrainReport:
    """Fit clause weights on precomputed valuations ``V`` (one row per frame).

    Returns the weights with the lowest validation loss seen, the
    initialization included.
    """
    t0 = time.perf_counter()
    V = np.asarray(V, dtype=float)
    actions = np.asarray(actions, dtype=np.int64)
    if V.shape[0] == 0:
        raise ValueError("empty training set")
    rng = np.random.default_rng(cfg.seed)
    w = init_weights(graph.n_weights, cfg.seed) if w0 is None else np.clip(np.asarray(w0, float), 0, 1)
    val_mask = split_by_trajectory(traj_ids, cfg.validation_fraction, rng)
    tr_idx = np.flatnonzero(~val_mask)
    va_idx = np.flatnonzero(val_mask)

    def val_loss(w):
        return loss_and_grad(V[va_idx], actions[va_idx], w, graph, rcfg, backend, need_grad=False)[0]

    state = AdamState.zeros(graph.n_weights)
    sched = PlateauScheduler(cfg.learning_rate, cfg.plateau_factor, cfg.plateau_patience, cfg.min_delta)
    best_w, best_val, best_epoch, since_best = w.copy(), val_loss(w), -1, 0
    train_losses, val_losses, lrs = [], [], []
    reason = "max_epochs"

    def report():
        return TrainReport(best_w, best_epoch, float(best_val), train_losses, val_losses, lrs,
                           reason, time.perf_counter() - t0)

    log = open(log_path, "w") if log_path else None
    try:
        for epoch in range(cfg.max_epochs):
            order = rng.permutation(tr_idx)
            batch_losses, sizes = [], []
            lr = sched.lr
            for start in range(0, order.size, cfg.batch_size):
                b = order[start:start + cfg.batch_size]
                loss, g = loss_and_grad(V[b], actions[b], w, graph, rcfg, backend)
                if not (np.isfinite(loss) and np.all(np.isfinite(g))):
                    reason = "non_finite"
                    raise TrainingError(f"non-finite loss at epoch {epoch}, frames {b.tolist()}", report())
                g = clip_gradient(g, cfg.grad_clip_norm)
                w, state = adam_step(w, g, state, lr, cfg.beta1, cfg.beta2, cfg.eps)
                batch_losses.append(loss)
                sizes.append(b.size)
            tl = float(np.average(batch_losses, weights=sizes))
            vl = val_loss(w)
            train_losses.append(tl)
            val_losses.append(vl)
            lrs.append(lr)
            sched.step(vl)
            if vl < best_val - cfg.min_delta:
                best_val, best_w, best_epoch, since_best = vl, w.copy(), epoch, 0
            else:
                since_best += 1
            if log:
                log.write(json.dumps({"epoch": epoch, "train_loss": tl, "val_loss": vl, "lr": lr}) + "\n")
            if since_best >= cfg.early_stopping_patience:
                reason = "early_stopping"
                break
    finally:
        if log:
            log.close()
    return report()


def lr_grid_search(V, actions, traj_ids, graph: InferenceGraph, cfg: TrainConfig = TrainConfig(),
                   rcfg: ReasonerConfig = ReasonerConfig(), backend=None):
    """Train once per learning rate in ``cfg.lr_grid``; pick the lowest
    validation loss, ties to the smaller rate.  Returns ``(best_lr, {lr: report})``."""
    reports = {}
    for lr in cfg.lr_grid:
        reports[lr] = train(V, actions, traj_ids, graph, replace(cfg, learning_rate=lr), rcfg, backend=backend)
    best = min(reports, key=lambda lr: (reports[lr].best_val_loss, lr))
    return best, reports
