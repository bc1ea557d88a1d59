"""Central-difference verification of the analytic gradients."""

from __future__ import annotations

import numpy as np

from .model import ModelParams, ModelSpec, loss_and_gradients


def finite_diff_gradcheck(spec: ModelSpec, params: ModelParams, X, y, h=1e-4,
                          n_coords=200, seed=0, floor=1e-6):
    """Largest relative error between analytic and central-difference gradients.

    Coordinates are drawn uniformly without replacement from all trainable
    tensors (every coordinate is used when there are fewer than
    ``n_coords``). The loss is evaluated in training mode (batch statistics)
    with dropout off. Relative error is ``|a - n| / max(|a| + |n|, floor)``.
    On long inputs a step ``h`` can cross a ReLU or max-pool kink and make
    the central difference meaningless; shrink ``h`` in that case.

    Returns ``(max_rel_err, n_checked)``.
    """
    _, grads, _ = loss_and_gradients(spec, params, X, y)
    names = list(params.weights)
    sizes = np.array([params.weights[k].size for k in names])
    total = int(sizes.sum())
    rng = np.random.default_rng(seed)
    picks = np.arange(total) if total <= n_coords else rng.choice(total, n_coords, replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    worst = 0.0
    for flat in picks:
        t = int(np.searchsorted(offsets, flat, side="right") - 1)
        name, j = names[t], flat - offsets[t]
        w = {k: v.copy() for k, v in params.weights.items()}
        base = w[name].reshape(-1)[j]
        w[name].reshape(-1)[j] = base + h
        lp = loss_and_gradients(spec, ModelParams(w, params.state), X, y)[0]
        w[name].reshape(-1)[j] = base - h
        lm = loss_and_gradients(spec, ModelParams(w, params.state), X, y)[0]
        num = (lp - lm) / (2 * h)
        ana = grads[name].reshape(-1)[j]
        worst = max(worst, abs(ana - num) / max(abs(ana) + abs(num), floor))
    return worst, len(picks)
