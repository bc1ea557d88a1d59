"""Layer-stack classifiers: Conv1D or GRU stacks, a per-time-step dense
head, flatten, dropout and a 2-way softmax output."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from ..errors import GaitShapError, ShapeMismatch
from . import layers as L


@dataclass(frozen=True)
class StackSpec:
    kind: str  # "conv" or "gru"
    units: int
    kernel_size: Optional[int] = None
    activation: Optional[str] = None
    batch_norm: bool = True
    pool: int = 2
    dropout: float = 0.0

    def __post_init__(self):
        if self.kind not in ("conv", "gru"):
            raise GaitShapError(f"unknown stack kind {self.kind!r}")
        if self.activation is None:
            object.__setattr__(self, "activation", "relu" if self.kind == "conv" else "tanh")
        if not 2 <= self.units <= 768:
            raise GaitShapError("units/filters must lie in [2, 768]")
        if self.kind == "conv":
            if self.kernel_size is None or not 1 <= self.kernel_size <= 15:
                raise GaitShapError("conv kernel_size must lie in [1, 15]")
        elif self.kernel_size is not None:
            raise GaitShapError("GRU stacks take no kernel_size")
        if self.pool < 1:
            raise GaitShapError("pool must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise GaitShapError("dropout rate must lie in [0, 1)")


@dataclass(frozen=True)
class ModelSpec:
    input_shape: tuple
    stacks: tuple
    dense_units: int
    head_dropout: float = 0.0
    learning_rate: float = 1e-3
    n_classes: int = 2
    dense_activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        object.__setattr__(self, "stacks", tuple(
            s if isinstance(s, StackSpec) else StackSpec(**s) for s in self.stacks))
        if len(self.input_shape) != 2 or min(self.input_shape) < 1:
            raise GaitShapError("input_shape must be (time, channels)")
        if not 1 <= len(self.stacks) <= 3:
            raise GaitShapError("a model has 1 to 3 stacks")
        kinds = {s.kind for s in self.stacks}
        if len(kinds) != 1:
            raise GaitShapError("stacks must all be conv or all be GRU")
        if not 2 <= self.dense_units <= 768:
            raise GaitShapError("dense_units must lie in [2, 768]")
        if not 0.0 <= self.head_dropout < 1.0:
            raise GaitShapError("head_dropout must lie in [0, 1)")
        if not 1e-5 <= self.learning_rate <= 1e-2:
            raise GaitShapError("learning_rate must lie in [1e-5, 1e-2]")
        if self.final_time_steps() < 1:
            raise GaitShapError("pooling reduces the time axis to zero")

    @property
    def kind(self) -> str:
        return self.stacks[0].kind

    def time_trace(self) -> list[int]:
        """Time-axis length at the input and after every stack."""
        t = [self.input_shape[0]]
        for s in self.stacks:
            t.append(t[-1] // s.pool)
        return t

    def final_time_steps(self) -> int:
        return self.time_trace()[-1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["input_shape"] = list(self.input_shape)
        d["stacks"] = [asdict(s) for s in self.stacks]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        d["stacks"] = tuple(StackSpec(**s) for s in d["stacks"])
        return cls(**d)


def full_cnn_spec() -> ModelSpec:
    """The tuned convolutional network reported for single-stride input."""
    return ModelSpec(
        input_shape=(128, 3),
        stacks=(StackSpec("conv", 88, 13, dropout=0.3),
                StackSpec("conv", 336, 5, dropout=0.6),
                StackSpec("conv", 2, 1, dropout=0.0)),
        dense_units=74, head_dropout=0.5, learning_rate=0.0015)


def full_gru_spec() -> ModelSpec:
    """The tuned recurrent network reported for eight-stride input."""
    return ModelSpec(
        input_shape=(1024, 3),
        stacks=(StackSpec("gru", 666, dropout=0.5),
                StackSpec("gru", 438, dropout=0.7),
                StackSpec("gru", 2, dropout=0.0)),
        dense_units=676, head_dropout=0.1, learning_rate=0.0003)


@dataclass
class ModelParams:
    """Trainable tensors plus batch-norm running statistics."""

    weights: dict = field(default_factory=dict)
    state: dict = field(default_factory=dict)

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.weights.items()},
                           {k: v.copy() for k, v in self.state.items()})

    def items(self):
        """All tensors in a fixed order (weights, then state)."""
        yield from self.weights.items()
        yield from self.state.items()


def _glorot(rng, fan_in, fan_out, shape):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, shape)


def _orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def init_params(spec: ModelSpec, seed: int = 0) -> ModelParams:
    rng = np.random.default_rng(seed)
    w, st = {}, {}
    ch = spec.input_shape[1]
    for i, s in enumerate(spec.stacks):
        p = f"stack{i}."
        if s.kind == "conv":
            K = s.kernel_size
            w[p + "kernel"] = _glorot(rng, K * ch, K * s.units, (K, ch, s.units))
            w[p + "bias"] = np.zeros(s.units)
        else:
            H = s.units
            w[p + "W"] = _glorot(rng, ch, 3 * H, (ch, 3 * H))
            w[p + "U"] = np.concatenate([_orthogonal(rng, H) for _ in range(3)], axis=1)
            w[p + "b"] = np.zeros(3 * H)
        if s.batch_norm:
            w[p + "gamma"] = np.ones(s.units)
            w[p + "beta"] = np.zeros(s.units)
            st[p + "running_mean"] = np.zeros(s.units)
            st[p + "running_var"] = np.ones(s.units)
        ch = s.units
    w["head.W"] = _glorot(rng, ch, spec.dense_units, (ch, spec.dense_units))
    w["head.b"] = np.zeros(spec.dense_units)
    flat = spec.final_time_steps() * spec.dense_units
    w["out.W"] = _glorot(rng, flat, spec.n_classes, (flat, spec.n_classes))
    w["out.b"] = np.zeros(spec.n_classes)
    return ModelParams(w, st)


def forward(spec: ModelSpec, params: ModelParams, X, training=False,
            dropout_rng=None, bn_momentum=0.9):
    """Full forward pass.

    Args:
        training: batch norm uses batch statistics and updates running ones.
        dropout_rng: a ``numpy.random.Generator``; dropout is only applied
            when one is given.

    Returns:
        ``(logits, caches, new_state)``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    if X.shape[1:] != spec.input_shape:
        raise ShapeMismatch(f"model expects input {spec.input_shape}, got {X.shape[1:]}")
    w = params.weights
    new_state = dict(params.state)
    caches = []
    h = X
    for i, s in enumerate(spec.stacks):
        p = f"stack{i}."
        c = {}
        if s.kind == "conv":
            h, c["core"] = L.conv1d_forward(h, w[p + "kernel"], w[p + "bias"], s.activation)
        else:
            h, c["core"] = L.gru_forward(h, w[p + "W"], w[p + "U"], w[p + "b"], True)
        if s.batch_norm:
            h, c["bn"], (rm, rv) = L.batch_norm_forward(
                h, w[p + "gamma"], w[p + "beta"], params.state[p + "running_mean"],
                params.state[p + "running_var"], training, bn_momentum)
            new_state[p + "running_mean"], new_state[p + "running_var"] = rm, rv
        if s.pool > 1:
            h, c["pool"] = L.max_pool1d_forward(h, s.pool)
        h, c["drop"] = L.dropout_forward(h, s.dropout, dropout_rng)
        caches.append(c)
    head = {}
    h, head["dense"] = L.dense_forward(h, w["head.W"], w["head.b"], spec.dense_activation)
    head["flat_shape"] = h.shape
    h = h.reshape(h.shape[0], -1)
    h, head["drop"] = L.dropout_forward(h, spec.head_dropout, dropout_rng)
    logits, head["out"] = L.dense_forward(h, w["out.W"], w["out.b"])
    caches.append(head)
    return logits, caches, new_state


def backward(spec: ModelSpec, dlogits, caches) -> dict:
    """Reverse pass from the logit gradient to every trainable tensor."""
    grads = {}
    head = caches[-1]
    dh, g = L.dense_backward(dlogits, head["out"])
    grads["out.W"], grads["out.b"] = g["W"], g["b"]
    dh = L.dropout_backward(dh, head["drop"]).reshape(head["flat_shape"])
    dh, g = L.dense_backward(dh, head["dense"])
    grads["head.W"], grads["head.b"] = g["W"], g["b"]
    for i in reversed(range(len(spec.stacks))):
        s, c, p = spec.stacks[i], caches[i], f"stack{i}."
        dh = L.dropout_backward(dh, c["drop"])
        if "pool" in c:
            dh, _ = L.max_pool1d_backward(dh, c["pool"])
        if "bn" in c:
            dh, g = L.batch_norm_backward(dh, c["bn"])
            grads[p + "gamma"], grads[p + "beta"] = g["gamma"], g["beta"]
        if s.kind == "conv":
            dh, g = L.conv1d_backward(dh, c["core"])
            grads[p + "kernel"], grads[p + "bias"] = g["kernel"], g["bias"]
        else:
            dh, g = L.gru_backward(dh, c["core"])
            grads[p + "W"], grads[p + "U"], grads[p + "b"] = g["W"], g["U"], g["b"]
    return grads


def model_forward(spec: ModelSpec, params: ModelParams, batch, training=False,
                  dropout_rng=None) -> np.ndarray:
    """Class probabilities, shape (batch, n_classes)."""
    logits, _, _ = forward(spec, params, batch, training, dropout_rng)
    return L.softmax(logits)


def predict_proba(spec: ModelSpec, params: ModelParams, X, batch_size=256) -> np.ndarray:
    """Inference-mode probabilities, evaluated in chunks."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    if len(X) == 0:
        return np.empty((0, spec.n_classes))
    return np.concatenate([model_forward(spec, params, X[i:i + batch_size])
                           for i in range(0, len(X), batch_size)])


def loss_and_gradients(spec: ModelSpec, params: ModelParams, X, y, training=True,
                       dropout_rng=None, bn_momentum=0.9):
    """Mean cross-entropy, its gradients and the updated batch-norm state."""
    logits, caches, new_state = forward(spec, params, X, training, dropout_rng, bn_momentum)
    _, loss, dlogits = L.softmax_cross_entropy(logits, y)
    return loss, backward(spec, dlogits, caches), new_state


def backward_and_gradients(spec: ModelSpec, params: ModelParams, batch, labels) -> dict:
    """Gradients of the mean cross-entropy in training mode, without dropout."""
    return loss_and_gradients(spec, params, batch, labels)[1]
