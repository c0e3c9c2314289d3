"""Desk-scale trainer: SGD with momentum and weight decay, plateau LR schedule."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError, TrainingDivergedError
from .model import forward_backward, update_running_stats
from .params import DEFAULT_DIMS, FamParams, init_params


@dataclass
class TrainConfig:
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0005
    batch_size: int = 32
    epochs: int = 30
    plateau_factor: float = 0.1
    plateau_patience: int = 4
    bn_momentum: float = 0.1
    seed: int = 42
    # a fixed permutation keeps batch composition constant across epochs
    reshuffle: bool = False

    def __post_init__(self):
        if self.lr < 0 or self.momentum < 0 or self.weight_decay < 0:
            raise ConfigError("learning rate, momentum and weight decay must be non-negative")
        if self.batch_size < 2 or self.epochs < 1 or self.plateau_patience < 1:
            raise ConfigError("batch size >= 2, epochs >= 1 and patience >= 1 are required")
        if not 0.0 < self.plateau_factor < 1.0:
            raise ConfigError(f"plateau factor must lie in (0, 1), got {self.plateau_factor}")

    def to_dict(self) -> dict:
        return asdict(self)


class SGD:
    """SGD with classical momentum and L2 weight decay added to the gradient."""

    def __init__(self, params: FamParams, lr: float, momentum: float = 0.0, weight_decay: float = 0.0):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = {n: np.zeros_like(getattr(params, n)) for n in params.trainable_names()}

    def step(self, grads: dict) -> None:
        for name, vel in self.velocity.items():
            p = getattr(self.params, name)
            g = grads[name] + self.weight_decay * p
            vel *= self.momentum
            vel += g
            p -= self.lr * vel


class ReduceLROnPlateau:
    """Multiply the optimizer's rate by ``factor`` once the monitored loss has not
    improved for ``patience`` consecutive epochs."""

    def __init__(self, optimizer: SGD, factor: float = 0.1, patience: int = 4):
        self.optimizer = optimizer
        self.factor = factor
        self.patience = patience
        self.best = np.inf
        self.bad_epochs = 0
        self.epoch = 0
        self.reductions: list[int] = []

    def step(self, loss: float) -> bool:
        """Record one epoch's loss; returns True when the rate was reduced."""
        self.epoch += 1
        if loss < self.best:
            self.best = loss
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        if self.bad_epochs >= self.patience:
            self.optimizer.lr *= self.factor
            self.bad_epochs = 0
            self.reductions.append(self.epoch)
            return True
        return False


@dataclass
class SyntheticDataset:
    x_body: np.ndarray
    x_face: np.ndarray
    frontal: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, idx) -> "SyntheticDataset":
        return SyntheticDataset(self.x_body[idx], self.x_face[idx], self.frontal[idx], self.labels[idx])


def make_separable_dataset(
    n: int = 200,
    dims=DEFAULT_DIMS,
    noise: float = 0.1,
    seed: int = 0,
    frontal_fraction: float = 1.0,
) -> SyntheticDataset:
    """Balanced two-class features: every entry is +1 (label 1) or -1 (label 0) plus
    Gaussian noise, for both body and face tensors."""
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % 2).astype(np.float64)
    sign = (2.0 * labels - 1.0)[:, None, None, None]
    shape = (n,) + tuple(dims)
    x_body = sign + noise * rng.standard_normal(shape)
    x_face = sign + noise * rng.standard_normal(shape)
    frontal = rng.random(n) < frontal_fraction
    return SyntheticDataset(x_body, x_face, frontal, labels)


@dataclass
class TrainResult:
    params: FamParams
    losses: list[float]
    lrs: list[float]
    reductions: list[int]
    accuracy: float
    config: TrainConfig = field(repr=False, default=None)


def _batches(order: np.ndarray, batch_size: int) -> list[np.ndarray]:
    batches = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    if len(batches) > 1 and len(batches[-1]) < 2:
        batches[-2] = np.concatenate([batches[-2], batches.pop()])
    return batches


def evaluate(params: FamParams, data: SyntheticDataset) -> float:
    """Eval-mode accuracy with a zero logit threshold."""
    res = forward_backward(
        params, data.x_body, data.x_face, data.frontal, data.labels, mode="eval", grads=False
    )
    return float(np.mean((res.logits > 0).astype(np.float64) == data.labels))


def toy_train(
    config: TrainConfig,
    data: SyntheticDataset,
    params: FamParams | None = None,
) -> TrainResult:
    """Train every parameter group on ``data``; returns per-epoch mean losses.

    Head groups of one sample inside a batch are normalized with running
    statistics instead of batch statistics.
    """
    if len(data) < 2 * config.batch_size:
        raise ConfigError(f"need at least {2 * config.batch_size} samples, got {len(data)}")
    if len(np.unique(data.labels)) < 2:
        raise ConfigError("training data must contain both classes")
    if params is None:
        params = init_params(data.x_body.shape[1:], seed=config.seed)
    else:
        params = params.copy()

    rng = np.random.default_rng(config.seed)
    opt = SGD(params, config.lr, config.momentum, config.weight_decay)
    sched = ReduceLROnPlateau(opt, config.plateau_factor, config.plateau_patience)
    order = rng.permutation(len(data))
    losses, lrs = [], []
    for epoch in range(config.epochs):
        if config.reshuffle and epoch > 0:
            order = rng.permutation(len(data))
        lrs.append(opt.lr)
        total = 0.0
        for idx in _batches(order, config.batch_size):
            b = data.subset(idx)
            res = forward_backward(
                params, b.x_body, b.x_face, b.frontal, b.labels, mode="train",
                singleton_fallback=True,
            )
            if not np.isfinite(res.loss):
                raise TrainingDivergedError(f"loss became {res.loss} in epoch {epoch + 1}")
            total += res.loss * len(idx)
            opt.step(res.grads)
            update_running_stats(params, res.batch_stats, config.bn_momentum)
        epoch_loss = total / len(data)
        if not all(np.all(np.isfinite(getattr(params, n))) for n in params.names()):
            raise TrainingDivergedError(f"parameters became non-finite in epoch {epoch + 1}")
        losses.append(epoch_loss)
        sched.step(epoch_loss)
    return TrainResult(params, losses, lrs, sched.reductions, evaluate(params, data), config)
