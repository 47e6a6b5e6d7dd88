import numpy as np
import pytest

from conftest import central_diff
from leafcnn import layers as L
from leafcnn.errors import ShapeError
from leafcnn.tensor import SeededRng


def randn(seed, *shape):
    return np.random.default_rng(seed).standard_normal(shape)


# ---------------------------------------------------------------- init

def test_he_init_statistics():
    rng = SeededRng(0)
    conv = L.init_conv(rng, 64, 32, 3, "same")
    fan_in = 3 * 3 * 64
    std = float(conv.weights.std())
    assert abs(std - np.sqrt(2.0 / fan_in)) < 0.005
    assert abs(float(conv.weights.mean())) < 0.005
    assert np.all(conv.bias == 0)
    dense = L.init_dense(rng, 1000, 50)
    assert abs(float(dense.weights.std()) - np.sqrt(2.0 / 1000)) < 0.005


def test_init_is_seed_deterministic():
    a = L.init_conv(SeededRng(5), 3, 8, 3, "same").weights
    b = L.init_conv(SeededRng(5), 3, 8, 3, "same").weights
    assert np.array_equal(a, b)


def test_param_count():
    conv = L.init_conv(SeededRng(0), 3, 32, 3, "same")
    assert L.param_count(conv) == 32 * (9 * 3 + 1) == 896
    dense = L.init_dense(SeededRng(0), 12800, 1536)
    assert L.param_count(dense) == 12800 * 1536 + 1536 == 19662336
    assert L.param_count(L.MaxPool2D()) == 0
    assert L.param_count(L.Dropout(0.5)) == 0


# ---------------------------------------------------------------- conv

def test_conv_all_ones_kernel_sums_window():
    conv = L.Conv2D(1, 1, 2, "valid", np.ones((2, 2, 1, 1), np.float32), np.zeros(1, np.float32))
    out = L.conv_forward(conv, np.ones((3, 3, 1), np.float32))
    assert out.shape == (2, 2, 1)
    assert np.all(out == 4.0)


def test_conv_bias_added_per_channel():
    conv = L.Conv2D(1, 2, 1, "valid",
                    np.zeros((1, 1, 1, 2), np.float32), np.array([1.5, -2.0], np.float32))
    out = L.conv_forward(conv, np.zeros((4, 4, 1), np.float32))
    assert np.all(out[..., 0] == 1.5)
    assert np.all(out[..., 1] == -2.0)


def test_conv_same_padding_keeps_spatial_dims():
    conv = L.init_conv(SeededRng(1), 3, 4, 5, "same")
    out = L.conv_forward(conv, np.zeros((10, 12, 3), np.float32))
    assert out.shape == (10, 12, 4)


def test_conv_rejects_channel_mismatch():
    conv = L.init_conv(SeededRng(1), 3, 4, 3, "same")
    with pytest.raises(ShapeError):
        L.conv_forward(conv, np.zeros((8, 8, 2), np.float32))


def test_conv_batch_matches_per_image():
    conv = L.init_conv(SeededRng(2), 2, 3, 3, "valid")
    x = SeededRng(3).uniform((4, 7, 7, 2), -1.0, 1.0)
    batched = L.conv_forward(conv, x)
    for i in range(4):
        assert np.array_equal(batched[i], L.conv_forward(conv, x[i]))


@pytest.mark.parametrize("kernel,padding", [(3, "same"), (2, "valid"), (5, "same")])
def test_conv_gradients(kernel, padding):
    rng = np.random.default_rng(17)
    x = rng.standard_normal((2, 7, 7, 3))
    conv = L.Conv2D(3, 4, kernel, padding,
                    rng.standard_normal((kernel, kernel, 3, 4)) * 0.3,
                    rng.standard_normal(4) * 0.3)
    upstream = rng.standard_normal(L.conv_forward(conv, x).shape)

    def loss():
        return float((L.conv_forward(conv, x) * upstream).sum())

    gx, gw, gb = L.conv_backward(conv, x, upstream)
    central_diff(loss, x, gx, seed=1)
    central_diff(loss, conv.weights, gw, seed=2)
    central_diff(loss, conv.bias, gb, seed=3)


# ---------------------------------------------------------------- dense

def test_dense_identity_weights():
    dense = L.Dense(3, 3, np.eye(3, dtype=np.float32), np.zeros(3, np.float32))
    x = np.array([[1.0, 2.0, 3.0]], np.float32)
    assert np.array_equal(L.dense_forward(dense, x), x)


def test_dense_gradients():
    rng = np.random.default_rng(23)
    x = rng.standard_normal((5, 6))
    dense = L.Dense(6, 4, rng.standard_normal((6, 4)), rng.standard_normal(4))
    upstream = rng.standard_normal((5, 4))

    def loss():
        return float((L.dense_forward(dense, x) * upstream).sum())

    gx, gw, gb = L.dense_backward(dense, x, upstream)
    central_diff(loss, x, gx, seed=4)
    central_diff(loss, dense.weights, gw, seed=5)
    central_diff(loss, dense.bias, gb, seed=6)


# ---------------------------------------------------------------- relu

def test_relu_values_and_gradient():
    x = np.array([-2.0, -0.0, 0.0, 0.5, 3.0])
    assert L.relu(x).tolist() == [0.0, 0.0, 0.0, 0.5, 3.0]
    g = L.relu_backward(x, np.ones_like(x))
    # subgradient at exactly 0 is 0
    assert g.tolist() == [0.0, 0.0, 0.0, 1.0, 1.0]


def test_relu_gradient_check():
    x = np.random.default_rng(31).standard_normal((4, 5)) + 0.1  # keep away from the kink
    x = np.where(np.abs(x) < 0.05, 0.5, x)
    upstream = np.random.default_rng(32).standard_normal((4, 5))

    def loss():
        return float((L.relu(x) * upstream).sum())

    central_diff(loss, x, L.relu_backward(x, upstream), seed=7)


# ---------------------------------------------------------------- maxpool

def test_maxpool_window_max_and_floor():
    x = np.arange(5 * 5, dtype=np.float32).reshape(1, 5, 5, 1)
    out, mask = L.maxpool_forward(x)
    assert out.shape == (1, 2, 2, 1)  # trailing row/col dropped
    assert out[0, :, :, 0].tolist() == [[6.0, 8.0], [16.0, 18.0]]


def test_maxpool_tie_breaks_to_first():
    x = np.ones((1, 2, 2, 1), np.float32)
    out, mask = L.maxpool_forward(x)
    grad = L.maxpool_backward(mask, np.full((1, 1, 1, 1), 7.0, np.float32))
    assert grad[0, :, :, 0].tolist() == [[7.0, 0.0], [0.0, 0.0]]


def test_maxpool_backward_routes_to_argmax():
    x = np.zeros((1, 2, 4, 1), np.float32)
    x[0, 1, 1, 0] = 5.0  # window 0 max at (1,1)
    x[0, 0, 2, 0] = 3.0  # window 1 max at (0,2)
    out, mask = L.maxpool_forward(x)
    grad = L.maxpool_backward(mask, np.array([[[[2.0], [4.0]]]], np.float32))
    expected = np.zeros((1, 2, 4, 1), np.float32)
    expected[0, 1, 1, 0] = 2.0
    expected[0, 0, 2, 0] = 4.0
    assert np.array_equal(grad, expected)


def test_maxpool_gradient_check():
    rng = np.random.default_rng(41)
    x = rng.permutation(2 * 6 * 6 * 2).astype(np.float64).reshape(2, 6, 6, 2)  # all distinct
    upstream = rng.standard_normal((2, 3, 3, 2))

    def loss():
        out, _ = L.maxpool_forward(x)
        return float((out * upstream).sum())

    _, mask = L.maxpool_forward(x)
    central_diff(loss, x, L.maxpool_backward(mask, upstream), seed=8)


def test_maxpool_rejects_tiny_input():
    with pytest.raises(ShapeError):
        L.maxpool_forward(np.zeros((1, 1, 4, 1), np.float32))


# ---------------------------------------------------------------- dropout

def test_dropout_eval_is_identity():
    x = SeededRng(0).uniform((3, 4), 0.0, 1.0)
    out, mask = L.dropout_apply(L.Dropout(0.5), x, train=False)
    assert np.array_equal(out, x)
    assert np.all(mask == 1.0)


def test_dropout_zero_rate_is_identity():
    x = SeededRng(1).uniform((3, 4), 0.0, 1.0)
    out, _ = L.dropout_apply(L.Dropout(0.0), x, SeededRng(2), train=True)
    assert np.array_equal(out, x)


def test_dropout_inverted_scaling():
    rate = 0.25
    x = np.ones((200, 200), np.float32)
    out, mask = L.dropout_apply(L.Dropout(rate), x, SeededRng(3), train=True)
    kept = mask > 0
    assert np.allclose(out[kept], 1.0 / (1.0 - rate))
    assert np.all(out[~kept] == 0.0)
    # kept fraction close to 1 - rate
    assert abs(kept.mean() - (1.0 - rate)) < 0.01
    # scaling preserves expectation
    assert abs(out.mean() - 1.0) < 0.02


def test_dropout_deterministic_under_seed():
    x = np.ones((10, 10), np.float32)
    a, _ = L.dropout_apply(L.Dropout(0.5), x, SeededRng(9), train=True)
    b, _ = L.dropout_apply(L.Dropout(0.5), x, SeededRng(9), train=True)
    assert np.array_equal(a, b)


def test_dropout_requires_rng_in_train():
    with pytest.raises(ValueError):
        L.dropout_apply(L.Dropout(0.5), np.ones((2, 2), np.float32), None, train=True)


def test_dropout_rate_bounds():
    with pytest.raises(ValueError):
        L.Dropout(1.0)
    with pytest.raises(ValueError):
        L.Dropout(-0.1)


# ---------------------------------------------------------------- softmax + loss

def test_softmax_rows_sum_to_one():
    logits = SeededRng(4).uniform((6, 38), -5.0, 5.0)
    p = L.softmax(logits)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)
    assert np.all(p >= 0)


def test_softmax_is_shift_stable():
    logits = np.array([[1000.0, 1001.0]], np.float32)
    p = L.softmax(logits)
    assert np.all(np.isfinite(p))
    np.testing.assert_allclose(p, L.softmax(np.array([[0.0, 1.0]], np.float32)), atol=1e-6)


def test_uniform_logits_loss_is_log_class_count():
    res = L.softmax_cross_entropy(np.zeros((4, 38), np.float32), np.array([0, 5, 17, 37]))
    assert abs(res.loss - np.log(38.0)) < 1e-5


def test_confident_correct_prediction_has_small_loss():
    logits = np.zeros((1, 10), np.float32)
    logits[0, 3] = 30.0
    res = L.softmax_cross_entropy(logits, np.array([3]))
    assert res.loss < 1e-6


def test_cross_entropy_gradient_is_softmax_minus_onehot():
    rng = np.random.default_rng(51)
    logits = rng.standard_normal((6, 9))
    labels = rng.integers(0, 9, size=6)
    res = L.softmax_cross_entropy(logits, labels)
    p = L.softmax(logits)
    onehot = np.eye(9)[labels]
    np.testing.assert_allclose(res.grad_logits, (p - onehot) / 6.0, atol=1e-12)


def test_cross_entropy_gradient_check():
    rng = np.random.default_rng(52)
    logits = rng.standard_normal((4, 7))
    labels = rng.integers(0, 7, size=4)

    def loss():
        return L.softmax_cross_entropy(logits, labels).loss

    res = L.softmax_cross_entropy(logits, labels)
    central_diff(loss, logits, res.grad_logits, seed=9)


def test_cross_entropy_rejects_bad_labels():
    with pytest.raises(ValueError):
        L.softmax_cross_entropy(np.zeros((2, 3), np.float32), np.array([0, 3]))
    with pytest.raises(ValueError):
        L.softmax_cross_entropy(np.zeros((2, 3), np.float32), np.array([-1, 0]))
