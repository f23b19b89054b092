"""SGD training loop with momentum and a warm-up/cosine learning-rate
schedule, deterministic for a fixed seed."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .autodiff import Var
from .data import Dataset
from .layers import Module, softmax_cross_entropy
from .rng import stream


class Schedule(Enum):
    COSINE = "cosine"
    CONSTANT = "constant"


class NumericalError(RuntimeError):
    """Raised when the loss leaves the representable range."""


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 16
    lr_init: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    warmup_epochs: int = 0
    schedule: Schedule = Schedule.COSINE
    seed: int = 0

    def __post_init__(self) -> None:
        if self.lr_init <= 0:
            raise ValueError("lr_init must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    test_err: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,test_err,lr"]
        for e, (tl, te, lr) in enumerate(zip(self.train_loss, self.test_err, self.lr)):
            lines.append(f"{e},{tl!r},{te!r},{lr!r}")
        return "\n".join(lines) + "\n"


def lr_at(cfg: TrainConfig, epoch: int) -> float:
    """Learning rate for a 0-based epoch index: linear warm-up, then a
    half-cosine decay toward zero (or constant)."""
    if epoch < cfg.warmup_epochs:
        return cfg.lr_init * (epoch + 1) / cfg.warmup_epochs
    if cfg.schedule is Schedule.CONSTANT:
        return cfg.lr_init
    span = max(1, cfg.epochs - cfg.warmup_epochs)
    progress = (epoch - cfg.warmup_epochs) / span
    return cfg.lr_init * 0.5 * (1.0 + math.cos(math.pi * progress))


class SGD:
    def __init__(self, params: list[Var], momentum: float, weight_decay: float):
        self.params = params
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = [np.zeros_like(p.data) for p in params]

    def step(self, lr: float) -> None:
        for p, v in zip(self.params, self.velocity):
            if p.grad is None:
                continue
            g = p.grad + self.weight_decay * p.data
            v *= self.momentum
            v += g
            p.data = p.data - (lr * v).astype(p.data.dtype)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


def evaluate(model: Module, ds: Dataset, batch_size: int = 64) -> float:
    """Classification error rate on a dataset."""
    wrong = 0
    for start in range(0, len(ds), batch_size):
        x = Var(ds.images[start:start + batch_size], requires_grad=False)
        logits = model(x)
        pred = logits.data.argmax(axis=1)
        wrong += int((pred != ds.labels[start:start + batch_size]).sum())
    return wrong / max(1, len(ds))


def train(model: Module, train_ds: Dataset, test_ds: Dataset,
          cfg: TrainConfig) -> TrainReport:
    """Train `model` in place; returns the per-epoch report.

    Integrated-kernel layers (anything exposing draw_for_iteration) get their
    branch re-drawn once per iteration before the forward pass.
    """
    report = TrainReport()
    params = model.params()
    opt = SGD(params, cfg.momentum, cfg.weight_decay)
    integrated = [m for m in _walk(model) if hasattr(m, "draw_for_iteration")]
    iteration = 0
    n = len(train_ds)
    for epoch in range(cfg.epochs):
        lr = lr_at(cfg, epoch)
        order = stream(cfg.seed, "data-order", epoch).permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            for layer in integrated:
                layer.draw_for_iteration(iteration)
            x = Var(train_ds.images[idx], requires_grad=False)
            loss = softmax_cross_entropy(model(x), train_ds.labels[idx])
            if not np.isfinite(loss.data):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}, batch {start // cfg.batch_size}")
            opt.zero_grad()
            loss.backward()
            opt.step(lr)
            losses.append(float(loss.data))
            iteration += 1
        report.train_loss.append(float(np.mean(losses)))
        for layer in integrated:
            layer.enter_eval()
        report.test_err.append(evaluate(model, test_ds))
        report.lr.append(lr)
    return report


def _walk(module):
    if isinstance(module, Module):
        yield module
        for v in vars(module).values():
            yield from _walk(v)
    elif isinstance(module, (list, tuple)):
        for item in module:
            yield from _walk(item)
