import math

import numpy as np
import pytest

from gaitshap.errors import EmptyDataset, ShapeMismatch, ZeroBatch
from gaitshap.nn import layers as L
from gaitshap.nn.gradcheck import finite_diff_gradcheck
from gaitshap.nn.model import (
    ModelParams,
    ModelSpec,
    StackSpec,
    backward_and_gradients,
    init_params,
    loss_and_gradients,
    model_forward,
    full_cnn_spec,
    predict_proba,
)
from gaitshap.nn.training import AdamState, EarlyStopping, TrainConfig, adam_step, train_model


def tiny_cnn(T=16):
    return ModelSpec((T, 3), (StackSpec("conv", 2, 3),), dense_units=4)


def tiny_gru(T=8):
    return ModelSpec((T, 3), (StackSpec("gru", 3, pool=1),), dense_units=4)


def linear_spec(T=4):
    return ModelSpec((T, 3), (StackSpec("conv", 2, 1, activation="linear", batch_norm=False, pool=1),),
                     dense_units=3, dense_activation="linear")


# -- conv --------------------------------------------------------------------

def test_conv_identity_kernel():
    x = np.arange(12.0).reshape(4, 3)
    k = np.zeros((1, 3, 1))
    k[0, 1, 0] = 1.0
    out, _ = L.conv1d_forward(x, k, np.zeros(1), "linear")
    np.testing.assert_array_equal(out[:, 0], x[:, 1])


def test_conv_hand_example():
    x = np.array([[1.0], [2.0], [3.0], [4.0]])
    out, _ = L.conv1d_forward(x, np.ones((3, 1, 1)), np.zeros(1), "linear")
    np.testing.assert_array_equal(out[:, 0], [3, 6, 9, 7])


def _conv_ref(x, k, b):
    T, C = x.shape
    K, _, F = k.shape
    pl = (K - 1) // 2
    out = np.zeros((T, F))
    for t in range(T):
        for f in range(F):
            s = b[f]
            for j in range(K):
                src = t + j - pl
                if 0 <= src < T:
                    for c in range(C):
                        s += x[src, c] * k[j, c, f]
            out[t, f] = s
    return out


@pytest.mark.parametrize("K", [5, 4])
def test_conv_matches_loops(K):
    rng = np.random.default_rng(K)
    x, k, b = rng.normal(size=(16, 3)), rng.normal(size=(K, 3, 4)), rng.normal(size=4)
    out, _ = L.conv1d_forward(x, k, b, "linear")
    np.testing.assert_allclose(out, _conv_ref(x, k, b), atol=1e-12)


def test_conv_channel_mismatch():
    with pytest.raises(ShapeMismatch):
        L.conv1d_forward(np.zeros((4, 2)), np.zeros((3, 3, 1)), np.zeros(1))


# -- GRU ---------------------------------------------------------------------

def _sig(v):
    return 1 / (1 + math.exp(-v))


def test_gru_zero_weights():
    out, _ = L.gru_forward(np.ones((5, 3)), np.zeros((3, 6)), np.zeros((2, 6)), np.zeros(6))
    np.testing.assert_array_equal(out, 0.0)


def test_gru_single_step_by_hand():
    x = np.array([[0.5, -1.0]])
    W = np.array([[0.1, 0.2, 0.3, 0.4, 0.5, 0.6], [-0.1, -0.2, -0.3, -0.4, -0.5, -0.6]])
    U = np.full((2, 6), 0.7)
    b = np.array([0.0, 0.1, 0.0, 0.1, 0.0, 0.1])
    out, _ = L.gru_forward(x, W, U, b)
    want = []
    for j in range(2):
        a = lambda g: 0.5 * W[0, 2 * g + j] - W[1, 2 * g + j] + b[2 * g + j]  # noqa: E731
        z, n = _sig(a(0)), math.tanh(a(2))  # h0 = 0 removes the recurrent terms
        want.append(z * n)
    np.testing.assert_allclose(out[0], want, atol=1e-15)


def _gru_ref(x, W, U, b):
    T, C = x.shape
    H = U.shape[0]
    h = np.zeros(H)
    out = []
    for t in range(T):
        new = np.zeros(H)
        for j in range(H):
            az = b[j] + sum(x[t, c] * W[c, j] for c in range(C)) + sum(h[i] * U[i, j] for i in range(H))
            ar = [b[H + i] + sum(x[t, c] * W[c, H + i] for c in range(C))
                  + sum(h[m] * U[m, H + i] for m in range(H)) for i in range(H)]
            r = [_sig(v) for v in ar]
            an = b[2 * H + j] + sum(x[t, c] * W[c, 2 * H + j] for c in range(C)) \
                + sum(r[i] * h[i] * U[i, 2 * H + j] for i in range(H))
            z = _sig(az)
            new[j] = (1 - z) * h[j] + z * math.tanh(an)
        h = new
        out.append(h.copy())
    return np.array(out)


def test_gru_matches_scalar_reference():
    rng = np.random.default_rng(0)
    x, W, U, b = rng.normal(size=(8, 3)), rng.normal(size=(3, 12)), rng.normal(size=(4, 12)) * 0.5, rng.normal(size=12)
    seq, _ = L.gru_forward(x, W, U, b)
    np.testing.assert_allclose(seq, _gru_ref(x, W, U, b), atol=1e-12)
    last, _ = L.gru_forward(x, W, U, b, return_sequences=False)
    np.testing.assert_array_equal(last, seq[-1])


# -- batch norm, pooling, dense, softmax ---------------------------------------

def test_batch_norm_training_standardizes():
    rng = np.random.default_rng(0)
    x = rng.normal(3.0, 2.0, size=(8, 10, 4))
    out, _, (rm, rv) = L.batch_norm_forward(x, np.ones(4), np.zeros(4), np.zeros(4), np.ones(4), True)
    np.testing.assert_allclose(out.mean(axis=(0, 1)), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.var(axis=(0, 1)), 1.0, atol=1e-4)
    np.testing.assert_allclose(rm, 0.1 * x.mean(axis=(0, 1)))


def test_batch_norm_inference_and_hand_case():
    x = np.full((2, 3, 2), 5.0)
    out, _, _ = L.batch_norm_forward(x, np.ones(2), np.array([0.3, -0.2]), np.full(2, 5.0),
                                     np.ones(2), False)
    np.testing.assert_allclose(out, np.broadcast_to([0.3, -0.2], x.shape))
    toy = np.array([[[1.0, 2.0]], [[3.0, 6.0]]])  # batch 2, time 1, 2 channels
    out, _, _ = L.batch_norm_forward(toy, np.array([2.0, 1.0]), np.array([0.0, 1.0]),
                                     np.zeros(2), np.ones(2), True)
    # channel 0: mean 2 var 1; channel 1: mean 4 var 4
    e0, e1 = 1 / math.sqrt(1 + 1e-5), 2 / math.sqrt(4 + 1e-5)
    np.testing.assert_allclose(out[:, 0, 0], [-2 * e0, 2 * e0], atol=1e-12)
    np.testing.assert_allclose(out[:, 0, 1], [1 - e1, 1 + e1], atol=1e-12)
    with pytest.raises(ZeroBatch):
        L.batch_norm_forward(np.zeros((0, 3, 2)), np.ones(2), np.zeros(2), np.zeros(2), np.ones(2), True)


def test_max_pool():
    np.testing.assert_array_equal(L.max_pool1d(np.array([[1.0], [3.0], [2.0], [5.0]]))[:, 0], [3, 5])
    assert L.max_pool1d(np.zeros((7, 2))).shape == (3, 2)
    rng = np.random.default_rng(0)
    x = rng.normal(size=(10, 4))
    ref = np.array([[max(x[2 * t, c], x[2 * t + 1, c]) for c in range(4)] for t in range(5)])
    np.testing.assert_array_equal(L.max_pool1d(x), ref)


def test_dense():
    x = np.array([[1.0, 2.0]])
    out, _ = L.dense_forward(x, np.eye(2), np.zeros(2))
    np.testing.assert_array_equal(out, x)
    out, _ = L.dense_forward(x, np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]), np.zeros(3))
    np.testing.assert_array_equal(out, [[1, 2, 3]])
    rng = np.random.default_rng(0)
    x, W, b = rng.normal(size=(5, 4)), rng.normal(size=(4, 3)), rng.normal(size=3)
    ref = np.array([[b[j] + sum(x[i, k] * W[k, j] for k in range(4)) for j in range(3)] for i in range(5)])
    np.testing.assert_allclose(L.dense_forward(x, W, b)[0], ref, atol=1e-12)
    with pytest.raises(ShapeMismatch):
        L.dense_forward(x, np.zeros((3, 3)), np.zeros(3))


def test_softmax_cross_entropy():
    probs, loss, _ = L.softmax_cross_entropy(np.array([[0.0, 0.0]]), [1])
    np.testing.assert_allclose(probs, [[0.5, 0.5]])
    assert loss == pytest.approx(math.log(2))
    probs, _, _ = L.softmax_cross_entropy(np.array([[math.log(1), math.log(3)]]), [0])
    np.testing.assert_allclose(probs, [[0.25, 0.75]], atol=1e-15)
    a, b = L.softmax(np.array([0.3, -1.2])), L.softmax(np.array([1000.3, 998.8]))
    np.testing.assert_allclose(a, b, atol=1e-12)
    rng = np.random.default_rng(0)
    np.testing.assert_allclose(L.softmax(rng.normal(0, 50, (100, 2))).sum(axis=1), 1.0, atol=1e-12)


# -- full model --------------------------------------------------------------

def test_full_cnn_output_and_time_trace():
    spec = full_cnn_spec()
    assert spec.time_trace() == [128, 64, 32, 16]
    params = init_params(spec, 0)
    x = np.random.default_rng(0).uniform(-1, 1, (1, 128, 3))
    probs = model_forward(spec, params, x)
    assert probs.shape == (1, 2)
    assert probs.sum() == pytest.approx(1.0, abs=1e-6)


def test_dropout_free_train_and_inference_agree():
    spec = ModelSpec((16, 3), (StackSpec("conv", 4, 3, batch_norm=False),), dense_units=4)
    params = init_params(spec, 1)
    x = np.random.default_rng(0).normal(size=(3, 16, 3))
    a = model_forward(spec, params, x, training=True, dropout_rng=np.random.default_rng(0))
    np.testing.assert_array_equal(a, model_forward(spec, params, x))


def test_inference_batch_size_invariant():
    spec = tiny_cnn()
    params = init_params(spec, 2)
    x = np.random.default_rng(1).normal(size=(7, 16, 3))
    full = predict_proba(spec, params, x)
    for i in range(7):
        np.testing.assert_allclose(predict_proba(spec, params, x[i]), full[i:i + 1], atol=1e-12)
    np.testing.assert_allclose(predict_proba(spec, params, x, batch_size=3), full, atol=1e-12)


def test_wrong_input_shape():
    spec = tiny_cnn()
    with pytest.raises(ShapeMismatch):
        model_forward(spec, init_params(spec), np.zeros((1, 15, 3)))


def test_output_bias_gradient_on_zero_model():
    spec = tiny_cnn()
    params = init_params(spec, 0)
    params.weights.update({k: np.zeros_like(v) for k, v in params.weights.items()})
    g = backward_and_gradients(spec, params, np.zeros((4, 16, 3)), [0, 1, 0, 1])
    # probabilities are 0.5/0.5, so probs - mean one-hot = 0
    np.testing.assert_allclose(g["out.b"], [0.0, 0.0], atol=1e-15)
    g = backward_and_gradients(spec, params, np.zeros((3, 16, 3)), [0, 0, 1])
    np.testing.assert_allclose(g["out.b"], [0.5 - 2 / 3, 0.5 - 1 / 3], atol=1e-15)


def test_duplicated_sample_same_gradient():
    x = np.random.default_rng(0).normal(size=(1, 16, 3))
    # no batch norm so the single-sample batch has well-defined statistics
    spec = ModelSpec((16, 3), (StackSpec("conv", 2, 3, batch_norm=False),), dense_units=4)
    params = init_params(spec, 0)
    g1 = backward_and_gradients(spec, params, x, [1])
    g2 = backward_and_gradients(spec, params, np.concatenate([x, x]), [1, 1])
    for k in g1:
        np.testing.assert_allclose(g1[k], g2[k], atol=1e-14)


@pytest.mark.parametrize("make,X_shape,tol", [
    (tiny_cnn, (4, 16, 3), 1e-4),
    (tiny_gru, (4, 8, 3), 1e-4),
    (linear_spec, (4, 4, 3), 1e-7),
])
def test_gradcheck(make, X_shape, tol):
    spec = make()
    params = init_params(spec, 3)
    rng = np.random.default_rng(5)
    X = rng.normal(size=X_shape)
    err, n = finite_diff_gradcheck(spec, params, X, [0, 1, 1, 0])
    assert n >= min(200, sum(v.size for v in params.weights.values()))
    assert err < tol


def test_full_gru_layer_shapes():
    spec = ModelSpec((64, 3), (StackSpec("gru", 5), StackSpec("gru", 4), StackSpec("gru", 2)),
                     dense_units=6)
    params = init_params(spec, 0)
    x = np.random.default_rng(0).normal(size=(2, 64, 3))
    logits_grads = backward_and_gradients(spec, params, x, [0, 1])
    assert logits_grads["stack0.U"].shape == (5, 15)
    assert spec.time_trace() == [64, 32, 16, 8]


# -- optimizer and training --------------------------------------------------

def test_adam_zero_gradient():
    p = {"w": np.array([1.0, -2.0])}
    new, st = adam_step(p, {"w": np.zeros(2)}, AdamState(), 0.1)
    np.testing.assert_array_equal(new["w"], p["w"])
    assert st.t == 1


def test_adam_first_step_magnitude():
    g = np.array([3.0, -0.5, 1e-3])
    new, _ = adam_step({"w": np.zeros(3)}, {"w": g}, AdamState(), 0.01)
    # bias correction makes m_hat = g and v_hat = g**2 on the first step
    np.testing.assert_allclose(-new["w"], 0.01 * g / (np.abs(g) + 1e-8), rtol=1e-12)
    np.testing.assert_allclose(np.abs(new["w"]), 0.01, rtol=1e-4)


def test_adam_two_steps_on_quadratic():
    w, m, v = 1.0, 0.0, 0.0
    for t in (1, 2):
        g = 2 * w
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w = w - 0.1 * (m / (1 - 0.9**t)) / (math.sqrt(v / (1 - 0.999**t)) + 1e-8)
    p, st = {"w": np.array(1.0)}, AdamState()
    for _ in range(2):
        p, st = adam_step(p, {"w": 2 * p["w"]}, st, 0.1)
    assert float(p["w"]) == pytest.approx(w, abs=1e-12)


def test_early_stopping_flat_history():
    es = EarlyStopping(20)
    stops = [es.update(0.5)[1] for _ in range(30)]
    assert stops.index(True) + 1 == 21


def _separable(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, (n, 1, 2))
    y = (x[:, 0, 0] + x[:, 0, 1] > 0).astype(int)
    keep = np.abs(x[:, 0, 0] + x[:, 0, 1]) > 0.2
    return x[keep], y[keep]


def test_train_separable_stops_early_and_is_deterministic():
    spec = ModelSpec((1, 2), (StackSpec("conv", 4, 1, pool=1, batch_norm=False),),
                     dense_units=4, learning_rate=1e-2)
    Xtr, ytr = _separable(200, 0)
    Xva, yva = _separable(80, 1)
    cfg = TrainConfig(max_epochs=150, patience=20, seed=3)
    p1, hist = train_model(spec, Xtr, ytr, Xva, yva, cfg)
    assert max(h["val_accuracy"] for h in hist) == 1.0
    assert len(hist) < 150
    p2, _ = train_model(spec, Xtr, ytr, Xva, yva, cfg)
    for k in p1.weights:
        np.testing.assert_array_equal(p1.weights[k], p2.weights[k])


def test_train_loss_decreases_full_batch():
    spec = tiny_cnn()
    params = init_params(spec, 0)
    rng = np.random.default_rng(0)
    X, y = rng.normal(size=(8, 16, 3)), np.array([0, 1] * 4)
    w, st, opt = params.weights, params.state, AdamState()
    losses = []
    for _ in range(10):
        loss, g, st = loss_and_gradients(spec, ModelParams(w, st), X, y)
        losses.append(loss)
        w, opt = adam_step(w, g, opt, 1e-3)
    assert losses[-1] < losses[0]


def test_train_empty():
    with pytest.raises(EmptyDataset):
        train_model(tiny_cnn(), np.zeros((0, 16, 3)), [], np.zeros((1, 16, 3)), [0])


def test_spec_bounds():
    with pytest.raises(ValueError):
        StackSpec("conv", 1, 3)
    with pytest.raises(ValueError):
        StackSpec("conv", 4, 16)
    with pytest.raises(ValueError):
        ModelSpec((16, 3), (), dense_units=4)
    with pytest.raises(ValueError):
        ModelSpec((16, 3), (StackSpec("conv", 4, 3),), dense_units=4, learning_rate=0.1)
    spec = full_cnn_spec()
    assert ModelSpec.from_dict(spec.to_dict()) == spec
