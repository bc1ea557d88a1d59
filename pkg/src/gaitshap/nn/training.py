"""Adam, early stopping and the mini-batch training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptyDataset, GaitShapError
from .model import ModelParams, ModelSpec, init_params, loss_and_gradients, predict_proba

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 150
    patience: int = 20
    batch_size: int = 32
    seed: int = 0
    bn_momentum: float = 0.9

    def __post_init__(self):
        if self.batch_size < 1:
            raise GaitShapError("batch_size must be >= 1")
        if not 0 < self.patience < self.max_epochs:
            raise GaitShapError("need 0 < patience < max_epochs")


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, lr: float,
              beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns new ``(params, state)``."""
    t = state.t + 1
    new_p, m, v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        m[k] = beta1 * state.m.get(k, 0.0) + (1 - beta1) * g
        v[k] = beta2 * state.v.get(k, 0.0) + (1 - beta2) * g * g
        m_hat = m[k] / (1 - beta1**t)
        v_hat = v[k] / (1 - beta2**t)
        new_p[k] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new_p, AdamState(m, v, t)


class EarlyStopping:
    """Tracks the best monitored score; signals a stop after ``patience``
    epochs without strict improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = -np.inf
        self.best_epoch = 0
        self.epoch = 0

    def update(self, score: float) -> tuple[bool, bool]:
        """Record one epoch. Returns ``(improved, should_stop)``."""
        self.epoch += 1
        improved = score > self.best
        if improved:
            self.best, self.best_epoch = score, self.epoch
        return improved, self.epoch - self.best_epoch >= self.patience


def accuracy(spec: ModelSpec, params: ModelParams, X, y) -> float:
    probs = predict_proba(spec, params, X)
    return float(np.mean(probs.argmax(axis=1) == np.asarray(y)))


def train_model(spec: ModelSpec, X_train, y_train, X_val, y_val,
                config: TrainConfig = TrainConfig(), params: ModelParams | None = None):
    """Mini-batch Adam with early stopping on validation accuracy.

    Parameters from the best validation epoch are returned together with a
    per-epoch history. Deterministic for a fixed ``config.seed``.
    """
    X_train, y_train = np.asarray(X_train, dtype=np.float64), np.asarray(y_train)
    X_val, y_val = np.asarray(X_val, dtype=np.float64), np.asarray(y_val)
    if len(X_train) == 0 or len(X_val) == 0:
        raise EmptyDataset("training and validation sets must be non-empty")
    ss_init, ss_shuffle, ss_drop = np.random.SeedSequence(config.seed).spawn(3)
    if params is None:
        params = init_params(spec, int(ss_init.generate_state(1)[0]))
    shuffle_rng = np.random.default_rng(ss_shuffle)
    drop_rng = np.random.default_rng(ss_drop)

    weights, state = params.weights, params.state
    opt = AdamState()
    stopper = EarlyStopping(config.patience)
    best = params.copy()
    history = []
    n = len(X_train)
    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads, state = loss_and_gradients(
                spec, ModelParams(weights, state), X_train[idx], y_train[idx],
                training=True, dropout_rng=drop_rng, bn_momentum=config.bn_momentum)
            weights, opt = adam_step(weights, grads, opt, spec.learning_rate)
            losses.append(loss * len(idx))
        current = ModelParams(weights, state)
        val_acc = accuracy(spec, current, X_val, y_val)
        improved, stop = stopper.update(val_acc)
        history.append({"epoch": epoch, "train_loss": float(sum(losses) / n),
                        "val_accuracy": val_acc})
        log.debug("epoch %d loss %.4f val_acc %.4f", epoch, history[-1]["train_loss"], val_acc)
        if improved:
            best = current.copy()
        if stop:
            break
    return best, history
