import numpy as np
import pytest

from conftest import central_diff
from leafcnn import model as M
from leafcnn.data import load_class_table
from leafcnn.errors import FormatError, ShapeError
from leafcnn.layers import Conv2D, Dense, Dropout, softmax_cross_entropy
from leafcnn.tensor import SeededRng

# Reference architecture at 256x256x3 input, 38 classes.
REFERENCE_ROWS = [
    ("conv2d", (256, 256, 32), 896),
    ("conv2d_1", (254, 254, 32), 9248),
    ("max_pooling2d", (127, 127, 32), 0),
    ("conv2d_2", (127, 127, 64), 18496),
    ("conv2d_3", (125, 125, 64), 36928),
    ("max_pooling2d_1", (62, 62, 64), 0),
    ("conv2d_4", (62, 62, 128), 73856),
    ("conv2d_5", (60, 60, 128), 147584),
    ("max_pooling2d_2", (30, 30, 128), 0),
    ("conv2d_6", (30, 30, 256), 295168),
    ("conv2d_7", (28, 28, 256), 590080),
    ("max_pooling2d_3", (14, 14, 256), 0),
    ("conv2d_8", (14, 14, 512), 3277312),
    ("conv2d_9", (10, 10, 512), 6554112),
    ("max_pooling2d_4", (5, 5, 512), 0),
    ("dropout", (5, 5, 512), 0),
    ("flatten", (12800,), 0),
    ("dense", (1536,), 19662336),
    ("dropout_1", (1536,), 0),
    ("Dense_1", (38,), 58406),
]
TOTAL_PARAMS = 30_724_422


@pytest.fixture(scope="module")
def full_net():
    return M.build_network(SeededRng(0))


@pytest.fixture(scope="module")
def tiny_net():
    # 16x16 input, 3 classes, heavily narrowed: 2 conv blocks
    return M.build_network(SeededRng(1), input_size=16, class_count=3, width_divisor=16)


def test_summary_matches_reference(full_net):
    summary = M.summarize(full_net)
    rows = [(r.name, tuple(r.output_shape), r.params) for r in summary.rows]
    assert rows == REFERENCE_ROWS
    assert summary.total_params == TOTAL_PARAMS
    assert summary.trainable_params == TOTAL_PARAMS
    assert summary.non_trainable_params == 0


def test_conv_hyperparameters_recoverable_from_row_data(full_net):
    # each conv's parameter count and shape transition pin down its
    # kernel size and padding; re-derive them and compare to the layers
    convs = [l for l in full_net.layers if isinstance(l, Conv2D)]
    conv_rows = [(n, s, p) for n, s, p in REFERENCE_ROWS if n.startswith("conv2d")]
    shape = (256, 256, 3)
    for layer, (name, out_shape, params) in zip(convs, conv_rows):
        in_c = shape[2]
        out_c = out_shape[2]
        # params = out_c * (k^2 * in_c + 1)
        k2 = (params // out_c - 1) // in_c
        k = int(round(k2 ** 0.5))
        assert out_c * (k * k * in_c + 1) == params
        padding = "same" if out_shape[0] == shape[0] else "valid"
        if padding == "valid":
            assert out_shape[0] == shape[0] - k + 1
        assert layer.kernel == k, name
        assert layer.padding == padding, name
        assert layer.out_channels == out_c, name
        shape = out_shape
        if padding == "valid":  # pool follows each valid conv
            shape = (shape[0] // 2, shape[1] // 2, shape[2])


def test_build_is_seed_deterministic():
    a = M.build_network(SeededRng(3), input_size=32, class_count=4, width_divisor=8)
    b = M.build_network(SeededRng(3), input_size=32, class_count=4, width_divisor=8)
    for pa, pb in zip(M.parameters(a).values(), M.parameters(b).values()):
        assert np.array_equal(pa, pb)


def test_build_drops_blocks_that_do_not_fit():
    net = M.build_network(SeededRng(0), input_size=64, class_count=4, width_divisor=4)
    convs = [l for l in net.layers if isinstance(l, Conv2D)]
    assert len(convs) == 8  # four blocks; the 5-kernel block needs >= 6 px
    summary = M.summarize(net)
    assert summary.rows[-4].output_shape == (256,)  # flatten of 2*2*64
    assert summary.rows[-1].output_shape == (4,)
    assert M.validate_network(net) == (4,)


def test_build_rejects_hopeless_input_size():
    with pytest.raises(ShapeError):
        M.build_network(SeededRng(0), input_size=3, class_count=2)


def test_forward_shapes_and_probabilities(tiny_net):
    x = SeededRng(5).uniform((3, 16, 16, 3), 0.0, 1.0)
    probs, cache = M.forward(tiny_net, x, mode="eval")
    assert probs.shape == (3, 3)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)
    assert cache is None  # eval keeps no cache


def test_forward_single_image_promotion(tiny_net):
    x = SeededRng(6).uniform((16, 16, 3), 0.0, 1.0)
    probs, _ = M.forward(tiny_net, x, mode="eval")
    assert probs.shape == (3,)


def test_forward_rejects_wrong_shape(tiny_net):
    with pytest.raises(ShapeError):
        M.forward(tiny_net, np.zeros((2, 8, 16, 3), np.float32), mode="eval")
    with pytest.raises(ValueError):
        M.forward(tiny_net, np.zeros((2, 16, 16, 3), np.float32), mode="predict")


def test_train_mode_needs_rng(tiny_net):
    x = np.zeros((1, 16, 16, 3), np.float32)
    with pytest.raises(ValueError):
        M.forward(tiny_net, x, mode="train")


def test_whole_network_gradient_check():
    # float64 end to end so eps=1e-3 central differences are meaningful.
    # Zero-init biases put rectifier inputs exactly on the kink wherever a
    # receptive field is all zeros, so nudge biases off zero first.
    net = M.build_network(SeededRng(7), input_size=16, class_count=3,
                          width_divisor=16, dropout_conv=0.0, dropout_dense=0.0)
    bias_rng = np.random.default_rng(77)
    for layer in net.layers:
        if isinstance(layer, (Conv2D, Dense)):
            layer.weights = layer.weights.astype(np.float64)
            layer.bias = bias_rng.standard_normal(layer.bias.shape) * 0.05
    x = np.random.default_rng(8).random((2, 16, 16, 3))
    labels = np.array([0, 2])

    def loss():
        probs, cache = M.forward(net, x, mode="train", rng=SeededRng(0))
        return softmax_cross_entropy(M.logits_from_cache(net, cache), labels).loss

    probs, cache = M.forward(net, x, mode="train", rng=SeededRng(0))
    result = softmax_cross_entropy(M.logits_from_cache(net, cache), labels)
    grads = M.backward(net, cache, result.grad_logits)
    params = M.parameters(net)
    for key in params:
        central_diff(loss, params[key], grads[key], max_checks=12, seed=hash(key) % 2**31)


def test_backward_covers_every_parameter(tiny_net):
    x = SeededRng(9).uniform((2, 16, 16, 3), 0.0, 1.0)
    probs, cache = M.forward(tiny_net, x, mode="train", rng=SeededRng(1))
    res = softmax_cross_entropy(M.logits_from_cache(tiny_net, cache), np.array([0, 1]))
    grads = M.backward(tiny_net, cache, res.grad_logits)
    params = M.parameters(tiny_net)
    assert set(grads) == set(params)
    for key in params:
        assert grads[key].shape == params[key].shape


# ---------------------------------------------------------------- file formats

def test_checkpoint_round_trip_bit_exact(tiny_net, tmp_path):
    path = tmp_path / "net.pldc"
    M.save_checkpoint(tiny_net, path, load_class_table()[:3])
    loaded = M.load_checkpoint(path)
    a, b = M.parameters(tiny_net), M.parameters(loaded)
    assert set(a) == set(b)
    for key in a:
        assert np.array_equal(a[key], b[key])
    x = SeededRng(10).uniform((2, 16, 16, 3), 0.0, 1.0)
    pa, _ = M.forward(tiny_net, x, mode="eval")
    pb, _ = M.forward(loaded, x, mode="eval")
    assert np.array_equal(pa, pb)


def test_checkpoint_metadata_readable(tiny_net, tmp_path):
    path = tmp_path / "net.pldc"
    M.save_checkpoint(tiny_net, path, load_class_table()[:3])
    meta = M.read_metadata(path)
    assert meta["kind"] == "checkpoint"
    assert meta["input_shape"] == [16, 16, 3]
    assert meta["class_count"] == 3
    assert len(meta["classes"]) == 3


def test_frozen_bundle_drops_dropout_and_carries_classes(tiny_net, tmp_path):
    path = tmp_path / "net.pldm"
    M.export_frozen(tiny_net, load_class_table()[:3], path)
    frozen = M.load_frozen(path)
    assert not any(isinstance(l, Dropout) for l in frozen.network.layers)
    assert [c.class_index for c in frozen.classes] == [0, 1, 2]
    x = SeededRng(11).uniform((16, 16, 3), 0.0, 1.0)
    direct, _ = M.forward(tiny_net, x, mode="eval")
    assert np.array_equal(M.predict(frozen, x), direct)


def test_export_frozen_validates_class_count(tiny_net, tmp_path):
    with pytest.raises(ValueError):
        M.export_frozen(tiny_net, load_class_table()[:2], tmp_path / "x.pldm")


def test_kind_mismatch_rejected(tiny_net, tmp_path):
    ckpt = tmp_path / "net.pldc"
    M.save_checkpoint(tiny_net, ckpt, load_class_table()[:3])
    with pytest.raises(FormatError):
        M.load_frozen(ckpt)
    frozen = tmp_path / "net.pldm"
    M.export_frozen(tiny_net, load_class_table()[:3], frozen)
    with pytest.raises(FormatError):
        M.load_checkpoint(frozen)


def test_bad_magic_reports_offset_zero(tmp_path):
    path = tmp_path / "junk.pldc"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(FormatError) as err:
        M.load_checkpoint(path)
    assert err.value.offset == 0


def test_truncated_file_reports_offset(tiny_net, tmp_path):
    path = tmp_path / "net.pldc"
    M.save_checkpoint(tiny_net, path)
    blob = path.read_bytes()
    cut = len(blob) - 100
    (tmp_path / "cut.pldc").write_bytes(blob[:cut])
    with pytest.raises(FormatError) as err:
        M.load_checkpoint(tmp_path / "cut.pldc")
    assert err.value.offset is not None
    assert err.value.offset <= cut
    assert "truncated" in str(err.value)


def test_trailing_garbage_rejected(tiny_net, tmp_path):
    path = tmp_path / "net.pldc"
    M.save_checkpoint(tiny_net, path)
    (tmp_path / "fat.pldc").write_bytes(path.read_bytes() + b"extra")
    with pytest.raises(FormatError) as err:
        M.load_checkpoint(tmp_path / "fat.pldc")
    assert "trailing" in str(err.value)


def test_unsupported_version_rejected(tiny_net, tmp_path):
    path = tmp_path / "net.pldc"
    M.save_checkpoint(tiny_net, path)
    blob = bytearray(path.read_bytes())
    blob[4:8] = (99).to_bytes(4, "little")
    (tmp_path / "v99.pldc").write_bytes(bytes(blob))
    with pytest.raises(FormatError) as err:
        M.load_checkpoint(tmp_path / "v99.pldc")
    assert "version" in str(err.value)


def test_predict_batches(tiny_net, tmp_path):
    path = tmp_path / "net.pldm"
    M.export_frozen(tiny_net, load_class_table()[:3], path)
    frozen = M.load_frozen(path)
    x = SeededRng(12).uniform((5, 16, 16, 3), 0.0, 1.0)
    probs = M.predict(frozen, x)
    assert probs.shape == (5, 3)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)
