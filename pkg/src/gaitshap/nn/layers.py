"""Layer primitives with hand-written backward passes.

Every ``*_forward`` returns ``(out, cache)``; the matching ``*_backward``
takes the upstream gradient and the cache and returns the input gradient
plus a dict of parameter gradients. Sequence tensors are laid out
(batch, time, channels).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeMismatch, ZeroBatch


def _act(z, activation):
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "tanh":
        return np.tanh(z)
    if activation in (None, "linear"):
        return z
    raise ValueError(f"unknown activation {activation!r}")


def _act_grad(z, out, dout, activation):
    if activation == "relu":
        return dout * (z > 0)
    if activation == "tanh":
        return dout * (1.0 - out**2)
    return dout


def sigmoid(x):
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _as_batch(x):
    x = np.asarray(x)
    return (x[None], True) if x.ndim == 2 else (x, False)


# --------------------------------------------------------------------------
# Conv1D
# --------------------------------------------------------------------------

def conv1d_forward(x, kernel, bias, activation="relu"):
    """Stride-1 cross-correlation with zero "same" padding.

    Args:
        x: (batch, time, channels) or (time, channels).
        kernel: (kernel_size, channels, filters).
        bias: (filters,).
        activation: ``"relu"``, ``"tanh"`` or ``"linear"``.

    For even kernel sizes the extra padding sample goes to the right.
    """
    xb, squeeze = _as_batch(x)
    K, C, F = kernel.shape
    B, T, Cx = xb.shape
    if Cx != C:
        raise ShapeMismatch(f"conv expects {C} input channels, got {Cx}")
    pad_l = (K - 1) // 2
    xp = np.pad(xb, ((0, 0), (pad_l, K - 1 - pad_l), (0, 0)))
    cols = sliding_window_view(xp, K, axis=1).reshape(B * T, C * K)
    w = kernel.transpose(1, 0, 2).reshape(C * K, F)
    z = cols @ w + bias
    out = _act(z, activation)
    cache = (cols, w, z, out, activation, (B, T, C, K, F, pad_l), squeeze)
    out = out.reshape(B, T, F)
    return (out[0] if squeeze else out), cache


def conv1d_backward(dout, cache):
    cols, w, z, out, activation, (B, T, C, K, F, pad_l), squeeze = cache
    dz = _act_grad(z, out, dout.reshape(B * T, F), activation)
    dw = cols.T @ dz
    grads = {"kernel": dw.reshape(C, K, F).transpose(1, 0, 2), "bias": dz.sum(axis=0)}
    dcols = (dz @ w.T).reshape(B, T, C, K)
    dxp = np.zeros((B, T + K - 1, C))
    for k in range(K):
        dxp[:, k:k + T, :] += dcols[..., k]
    dx = dxp[:, pad_l:pad_l + T, :]
    return (dx[0] if squeeze else dx), grads


# --------------------------------------------------------------------------
# GRU
# --------------------------------------------------------------------------

def gru_forward(x, W, U, b, return_sequences=True):
    """Gated recurrent unit over the time axis, starting from h = 0.

    Gate blocks in ``W`` (channels, 3*units), ``U`` (units, 3*units) and
    ``b`` (3*units,) are ordered update ``z``, reset ``r``, candidate ``n``::

        z = sigmoid(x Wz + h Uz + bz)
        r = sigmoid(x Wr + h Ur + br)
        n = tanh(x Wn + (r * h) Un + bn)
        h' = (1 - z) * h + z * n
    """
    xb, squeeze = _as_batch(x)
    B, T, C = xb.shape
    H = U.shape[0]
    if W.shape != (C, 3 * H) or U.shape != (H, 3 * H) or b.shape != (3 * H,):
        raise ShapeMismatch(
            f"GRU weights {W.shape}, {U.shape}, {b.shape} do not fit {C} channels / {H} units")
    xw = xb @ W + b
    Uzr, Un = U[:, :2 * H], U[:, 2 * H:]
    hs = np.zeros((B, T + 1, H))
    zs = np.empty((B, T, H))
    rs = np.empty((B, T, H))
    ns = np.empty((B, T, H))
    h = hs[:, 0]
    for t in range(T):
        zr = sigmoid(xw[:, t, :2 * H] + h @ Uzr)
        z, r = zr[:, :H], zr[:, H:]
        n = np.tanh(xw[:, t, 2 * H:] + (r * h) @ Un)
        h = (1.0 - z) * h + z * n
        zs[:, t], rs[:, t], ns[:, t], hs[:, t + 1] = z, r, n, h
    cache = (xb, W, U, hs, zs, rs, ns, return_sequences, squeeze)
    out = hs[:, 1:] if return_sequences else hs[:, -1]
    return (out[0] if squeeze else out), cache


def gru_backward(dout, cache):
    xb, W, U, hs, zs, rs, ns, return_sequences, squeeze = cache
    B, T, C = xb.shape
    H = U.shape[0]
    if squeeze:
        dout = dout[None]
    Uzr, Un = U[:, :2 * H], U[:, 2 * H:]
    dxw = np.empty((B, T, 3 * H))
    dU = np.zeros_like(U)
    dh = np.zeros((B, H))
    if not return_sequences:
        dh = dh + dout
    for t in reversed(range(T)):
        if return_sequences:
            dh = dh + dout[:, t]
        h_prev, z, r, n = hs[:, t], zs[:, t], rs[:, t], ns[:, t]
        dan = dh * z * (1.0 - n**2)
        daz = dh * (n - h_prev) * z * (1.0 - z)
        drh = dan @ Un.T
        dar = drh * h_prev * r * (1.0 - r)
        dazr = np.concatenate([daz, dar], axis=1)
        dU[:, 2 * H:] += (r * h_prev).T @ dan
        dU[:, :2 * H] += h_prev.T @ dazr
        dxw[:, t, :2 * H] = dazr
        dxw[:, t, 2 * H:] = dan
        dh = dh * (1.0 - z) + drh * r + dazr @ Uzr.T
    flat = dxw.reshape(B * T, 3 * H)
    grads = {"W": xb.reshape(B * T, C).T @ flat, "U": dU, "b": flat.sum(axis=0)}
    dx = dxw @ W.T
    return (dx[0] if squeeze else dx), grads


# --------------------------------------------------------------------------
# batch normalization, pooling, dense, dropout
# --------------------------------------------------------------------------

def batch_norm_forward(x, gamma, beta, running_mean, running_var, training,
                       momentum=0.9, eps=1e-5):
    """Per-channel normalization over all axes but the last.

    Returns ``(out, cache, (new_running_mean, new_running_var))``; the running
    statistics are only changed in training mode.
    """
    axes = tuple(range(x.ndim - 1))
    if training:
        if x.size == 0:
            raise ZeroBatch("batch norm needs a non-empty batch in training mode")
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        new_stats = (momentum * running_mean + (1 - momentum) * mean,
                     momentum * running_var + (1 - momentum) * var)
    else:
        mean, var = running_mean, running_var
        new_stats = (running_mean, running_var)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * inv
    out = gamma * xhat + beta
    return out, (xhat, gamma, inv, axes, training), new_stats


def batch_norm_backward(dout, cache):
    xhat, gamma, inv, axes, training = cache
    grads = {"gamma": (dout * xhat).sum(axis=axes), "beta": dout.sum(axis=axes)}
    dxhat = dout * gamma
    if not training:
        return dxhat * inv, grads
    m = xhat.size // xhat.shape[-1]
    dx = inv / m * (m * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))
    return dx, grads


def max_pool1d_forward(x, pool=2):
    """Non-overlapping max over ``pool`` time steps; a trailing remainder is dropped."""
    xb, squeeze = _as_batch(x)
    B, T, C = xb.shape
    To = T // pool
    win = xb[:, :To * pool].reshape(B, To, pool, C)
    idx = win.argmax(axis=2)
    out = np.take_along_axis(win, idx[:, :, None, :], axis=2)[:, :, 0, :]
    cache = (idx, (B, T, C, pool), squeeze)
    return (out[0] if squeeze else out), cache


def max_pool1d_backward(dout, cache):
    idx, (B, T, C, pool), squeeze = cache
    if squeeze:
        dout = dout[None]
    To = T // pool
    dwin = np.zeros((B, To, pool, C))
    np.put_along_axis(dwin, idx[:, :, None, :], dout[:, :, None, :], axis=2)
    dx = np.zeros((B, T, C))
    dx[:, :To * pool] = dwin.reshape(B, To * pool, C)
    return (dx[0] if squeeze else dx), {}


def max_pool1d(x, pool=2):
    return max_pool1d_forward(x, pool)[0]


def dense_forward(x, W, b, activation="linear"):
    """Affine map on the last axis (applied per time step for sequences)."""
    x = np.asarray(x)
    if x.shape[-1] != W.shape[0]:
        raise ShapeMismatch(f"dense expects {W.shape[0]} inputs, got {x.shape[-1]}")
    z = x @ W + b
    out = _act(z, activation)
    return out, (x, W, z, out, activation)


def dense_backward(dout, cache):
    x, W, z, out, activation = cache
    dz = _act_grad(z, out, dout, activation)
    x2 = x.reshape(-1, x.shape[-1])
    dz2 = dz.reshape(-1, dz.shape[-1])
    return dz @ W.T, {"W": x2.T @ dz2, "b": dz2.sum(axis=0)}


def dropout_forward(x, rate, rng):
    """Inverted dropout; identity when ``rng`` is None or ``rate`` is 0."""
    if rng is None or rate <= 0.0:
        return x, None
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(dout, mask):
    return dout if mask is None else dout * mask


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Numerically stable softmax and mean cross-entropy.

    Returns ``(probs, loss, dlogits)`` where ``dlogits`` is the gradient of the
    mean loss.
    """
    logits = np.atleast_2d(logits)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    z = logits - logits.max(axis=-1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    probs = np.exp(log_probs)
    n = logits.shape[0]
    loss = -log_probs[np.arange(n), labels].mean()
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    return probs, float(loss), dlogits / n
