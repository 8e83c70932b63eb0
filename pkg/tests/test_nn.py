import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from penabc import nn
from penabc.nn import (
    LINEAR,
    RELU,
    AdamState,
    Layer,
    MlpNetwork,
    MlpSpec,
    TrainConfig,
    TrainingDiverged,
    adam_step,
    backward,
    clip_by_global_norm,
    count_weights,
    forward,
    init_weights,
    leaves,
    mse_loss,
    predict,
    train,
)


def test_spec_chain_and_validation():
    spec = MlpSpec.from_dims([4, 3, 2])
    assert spec.in_dim == 4 and spec.out_dim == 2
    assert [l.activation for l in spec.layers] == [RELU, LINEAR]
    with pytest.raises(ValueError, match="chain"):
        MlpSpec((Layer(4, 3), Layer(2, 1, LINEAR)))
    with pytest.raises(ValueError):
        Layer(0, 3)
    with pytest.raises(ValueError, match="activation"):
        Layer(1, 3, "tanh")
    with pytest.raises(ValueError):
        MlpSpec(())


def test_layer_weight_count():
    assert count_weights(MlpSpec.from_dims([1, 100])) == 200
    assert count_weights(MlpSpec.from_dims([100, 55, 55, 25, 2])) == 10087


def test_init_bounds_and_determinism():
    spec = MlpSpec.from_dims([30, 20, 5])
    w1 = init_weights(spec, np.random.default_rng(3))
    w2 = init_weights(spec, np.random.default_rng(3))
    for (W, b), (W2, b2), l in zip(w1, w2, spec.layers):
        assert W.shape == (l.out_dim, l.in_dim) and b.shape == (l.out_dim,)
        assert np.all(np.abs(W) <= math.sqrt(6 / (l.in_dim + l.out_dim)))
        assert np.all(b == 0)
        assert np.array_equal(W, W2)


def test_zero_weights_give_zero_output():
    spec = MlpSpec.from_dims([5, 4, 3])
    w = [(np.zeros_like(W), np.zeros_like(b)) for W, b in init_weights(spec, np.random.default_rng(0))]
    assert np.all(forward(spec, w, np.arange(5.0))[0] == 0)


def test_identity_layer():
    spec = MlpSpec.from_dims([3, 3])
    x = np.array([1.5, -2.0, 0.25])
    assert np.array_equal(forward(spec, [(np.eye(3), np.zeros(3))], x)[0], x)


def test_forward_matches_hand_arithmetic():
    r = np.random.default_rng(1)
    spec = MlpSpec.from_dims([4, 6, 2])
    w = init_weights(spec, r)
    w = [(W, r.standard_normal(b.shape)) for W, b in w]
    x = r.standard_normal(4)
    (W1, b1), (W2, b2) = w
    hidden = [max(0.0, sum(W1[i, j] * x[j] for j in range(4)) + b1[i]) for i in range(6)]
    oracle = [sum(W2[i, j] * hidden[j] for j in range(6)) + b2[i] for i in range(2)]
    assert np.allclose(forward(spec, w, x)[0], oracle, rtol=1e-12, atol=1e-12)


def test_dimension_mismatch():
    spec = MlpSpec.from_dims([4, 2])
    w = init_weights(spec, np.random.default_rng(0))
    with pytest.raises(ValueError, match="features"):
        forward(spec, w, np.zeros(5))
    _, cache = forward(spec, w, np.zeros((3, 4)))
    with pytest.raises(ValueError):
        backward(spec, w, cache, np.zeros((3, 3)))
    with pytest.raises(ValueError):
        mse_loss(np.zeros((2, 2)), np.zeros((2, 3)))


def test_predict_chunking():
    spec = MlpSpec.from_dims([4, 7, 2])
    w = init_weights(spec, np.random.default_rng(0))
    x = np.random.default_rng(1).standard_normal((25, 4))
    assert np.allclose(predict(spec, w, x, chunk=6), forward(spec, w, x)[0], rtol=1e-14)


def test_perfect_prediction_has_zero_loss_and_gradients():
    spec = MlpSpec.from_dims([3, 4, 2])
    w = init_weights(spec, np.random.default_rng(0))
    x = np.random.default_rng(1).standard_normal((5, 3))
    pred, cache = forward(spec, w, x)
    loss, g = mse_loss(pred, pred.copy())
    assert loss == 0.0
    grads, gin = backward(spec, w, cache, g)
    assert all(np.all(a == 0) for a in leaves(grads)) and np.all(gin == 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_loss_nonnegative_zero_iff_equal(seed):
    r = np.random.default_rng(seed)
    a = r.standard_normal((4, 3))
    b = a.copy()
    b[r.integers(4), r.integers(3)] += r.uniform(1e-3, 1)
    assert mse_loss(a, b)[0] > 0
    assert mse_loss(a, a)[0] == 0


def _finite_difference_errors(spec, w, x, t, h=1e-5):
    pred, cache = forward(spec, w, x)
    _, g = mse_loss(pred, t)
    grads, gin = backward(spec, w, cache, g)
    f = lambda: mse_loss(forward(spec, w, x)[0], t)[0]
    worst = 0.0
    rel = lambda a, b: abs(a - b) / max(abs(a), abs(b), 1e-6)
    for p, gp in zip(leaves(w), leaves(grads)):
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = f()
            p[idx] = old - h
            dn = f()
            p[idx] = old
            worst = max(worst, rel((up - dn) / (2 * h), gp[idx]))
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = f()
        x[idx] = old - h
        dn = f()
        x[idx] = old
        worst = max(worst, rel((up - dn) / (2 * h), gin[idx]))
    return worst


@pytest.mark.parametrize("case", range(20))
def test_gradients_match_finite_differences(case):
    r = np.random.default_rng(100 + case)
    dims = [int(v) for v in r.integers(1, 6, size=int(r.integers(2, 5)))]
    spec = MlpSpec.from_dims(dims)
    w = init_weights(spec, r)
    w = [(W, 0.1 * r.standard_normal(b.shape)) for W, b in w]
    x = r.standard_normal((3, dims[0]))
    t = r.standard_normal((3, dims[-1]))
    assert _finite_difference_errors(spec, w, x, t) < 1e-4


def test_single_vector_input_gradient_shape():
    spec = MlpSpec.from_dims([3, 4, 2])
    w = init_weights(spec, np.random.default_rng(0))
    pred, cache = forward(spec, w, np.ones(3))
    _, gin = backward(spec, w, cache, np.ones(2))
    assert gin.shape == (3,)


# --------------------------------------------------------------------------
# Adam
# --------------------------------------------------------------------------


def test_adam_zero_gradient_is_a_no_op():
    p = [np.array([1.0, -2.0])]
    st_ = AdamState.zeros_like(p)
    adam_step(p, [np.zeros(2)], st_, 1e-3)
    assert np.array_equal(p[0], [1.0, -2.0])


def test_adam_first_step_is_signed_lr():
    g = np.array([3.0, -0.5, 1e-3])
    p = [np.zeros(3)]
    adam_step(p, [g], AdamState.zeros_like(p), 1e-3)
    assert np.allclose(p[0], -np.sign(g) * 1e-3, rtol=1e-4)
    assert np.all(np.abs(p[0]) < 1e-3)


def test_adam_minimises_a_quadratic():
    p = [np.ones(5)]
    st_ = AdamState.zeros_like(p)
    for _ in range(200):
        adam_step(p, [2 * p[0]], st_, 0.01)
    assert np.linalg.norm(p[0]) < 0.1


def test_adam_rejects_misaligned_state():
    with pytest.raises(ValueError):
        adam_step([np.ones(2)], [np.ones(2), np.ones(1)], AdamState.zeros_like([np.ones(2)]), 1e-3)


def test_clip_by_global_norm():
    g = [np.array([3.0]), np.array([[4.0]])]
    norm = clip_by_global_norm(g, 1.0)
    assert norm == 5.0
    assert np.allclose([g[0][0], g[1][0, 0]], [0.6, 0.8])
    h = [np.array([0.3, 0.4])]
    clip_by_global_norm(h, 1.0)
    assert np.array_equal(h[0], [0.3, 0.4])


# --------------------------------------------------------------------------
# training loop
# --------------------------------------------------------------------------


class _Scripted:
    """One parameter counting batches; the eval error follows a fixed script."""

    def __init__(self, script):
        self.script = script

    def init(self, rng):
        return [np.zeros(1)]

    def predict(self, params, inputs):
        e = int(round(params[0][0]))
        return np.full((len(inputs), 1), math.sqrt(self.script[e - 1]))

    def loss_and_grad(self, params, inputs, targets):
        params[0][0] += 1.0
        return 1.0, [np.zeros(1)]


def _run_script(script):
    x = np.zeros((4, 1))
    cfg = TrainConfig(epochs=len(script), batch_size=4)
    return train(_Scripted(script), x, np.zeros((4, 1)), x[:1], np.zeros((1, 1)), cfg)


def test_train_picks_final_epoch_when_decreasing():
    res = _run_script([5.0, 4.0, 3.0, 2.0, 1.0])
    assert res.best_epoch == 5 and res.weights[0][0] == 5.0


def test_train_picks_argmin_snapshot():
    res = _run_script([5.0, 4.0, 0.5, 2.0, 1.0, 3.0, 1.0, 0.9, 0.8, 0.7])
    assert res.best_epoch == 3
    assert res.weights[0][0] == 3.0
    assert res.best_eval == pytest.approx(0.5)
    assert res.best_eval <= res.history[0][2]


def test_train_learns_linear_map():
    r = np.random.default_rng(0)
    x = r.standard_normal((2000, 3))
    t = 2 * x[:, :2]
    spec = MlpSpec.from_dims([3, 2])
    res = train(MlpNetwork(spec), x[:1500], t[:1500], x[1500:], t[1500:],
                TrainConfig(epochs=40, batch_size=50, learning_rate=1e-2, seed=1))
    assert res.best_eval < 1e-3


def test_train_is_reproducible():
    r = np.random.default_rng(0)
    x = r.standard_normal((300, 4))
    t = np.sin(x[:, :2])
    spec = MlpSpec.from_dims([4, 8, 2])
    cfg = TrainConfig(epochs=5, batch_size=32, seed=9, clip_norm=1.0)
    a = train(MlpNetwork(spec), x, t, x[:50], t[:50], cfg)
    b = train(MlpNetwork(spec), x, t, x[:50], t[:50], cfg)
    assert a.history == b.history
    assert all(np.array_equal(p, q) for p, q in zip(leaves(a.weights), leaves(b.weights)))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_divergence_is_reported():
    spec = MlpSpec.from_dims([1, 1])
    x = np.array([[1e200], [1e200]])
    with pytest.raises(TrainingDiverged, match="epoch 1"):
        train(MlpNetwork(spec), x, x, x, x, TrainConfig(epochs=2))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainConfig(clip_norm=-1.0)
    with pytest.raises(ValueError, match="nonempty"):
        train(MlpNetwork(MlpSpec.from_dims([1, 1])), np.zeros((0, 1)), np.zeros((0, 1)),
              np.zeros((1, 1)), np.zeros((1, 1)), TrainConfig())
