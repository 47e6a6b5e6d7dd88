"""Network assembly and lifecycle: the 38-class reference architecture,
batched forward/backward over the whole stack, summary tables, and the
two binary file formats (training checkpoint, frozen inference bundle).

File format (little-endian):

    magic  "PLDM" (4 bytes)
    u32    format version (currently 1)
    u32    metadata length
    bytes  metadata, UTF-8 JSON: kind ("checkpoint" | "frozen"),
           input_shape, class_count, layer descriptions, classes (frozen)
    then per parametric layer, in network order, two records
    (weights, bias), each:  u64 byte length + raw float32 data

A frozen bundle is a checkpoint with dropout layers removed and the
class metadata embedded, so inference needs no other files.
"""
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from leafcnn.data import ClassInfo
from leafcnn.errors import FormatError, ShapeError
from leafcnn.layers import (
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    MaxPool2D,
    ReLU,
    Softmax,
    conv_backward,
    conv_forward_cached,
    dense_backward,
    dense_forward,
    dropout_apply,
    init_conv,
    init_dense,
    maxpool_backward,
    maxpool_forward,
    param_count,
    relu,
    relu_backward,
    softmax,
)
from leafcnn.tensor import SeededRng, Tensor

MAGIC = b"PLDM"
FORMAT_VERSION = 1

# (out_channels, kernel) per conv block; each block is
# conv-same -> relu -> conv-valid -> relu -> pool
CONV_BLOCKS = ((32, 3), (64, 3), (128, 3), (256, 3), (512, 5))
HIDDEN_FEATURES = 1536


@dataclass
class Network:
    input_shape: tuple  # (H, W, C)
    class_count: int
    layers: list = field(default_factory=list)


@dataclass
class SummaryRow:
    name: str
    output_shape: tuple
    params: int


@dataclass
class Summary:
    rows: list
    total_params: int
    trainable_params: int
    non_trainable_params: int


@dataclass
class FrozenModel:
    network: Network
    classes: list  # ClassInfo records, one per output class
    version: int = FORMAT_VERSION


def build_network(
    rng: SeededRng,
    input_size: int = 256,
    class_count: int = 38,
    width_divisor: int = 1,
    dropout_conv: float = 0.25,
    dropout_dense: float = 0.5,
) -> Network:
    """Construct the classifier stack; defaults give the full-size
    38-class reference architecture (30,724,422 parameters).

    Smaller inputs keep the same block pattern but drop trailing conv
    blocks that no longer fit spatially; width_divisor shrinks channel
    and hidden widths for desk-scale runs.
    """
    layers = []
    size = input_size
    c_in = 3
    for out_channels, k in CONV_BLOCKS:
        if size < k + 1:  # valid conv then 2x2 pool must both fit
            break
        ch = max(1, out_channels // width_divisor)
        layers += [
            init_conv(rng, c_in, ch, k, "same"),
            ReLU(),
            init_conv(rng, ch, ch, k, "valid"),
            ReLU(),
            MaxPool2D(),
        ]
        size = (size - k + 1) // 2
        c_in = ch
    if not layers:
        raise ShapeError(f"input size {input_size} too small for any conv block")
    flat = size * size * c_in
    hidden = max(class_count, HIDDEN_FEATURES // width_divisor)
    layers += [
        Dropout(dropout_conv),
        Flatten(),
        init_dense(rng, flat, hidden),
        ReLU(),
        Dropout(dropout_dense),
        init_dense(rng, hidden, class_count),
        Softmax(),
    ]
    return Network((input_size, input_size, 3), class_count, layers)


def output_shape(layer, in_shape: tuple) -> tuple:
    """Shape produced by one layer from `in_shape` (no batch dimension)."""
    if isinstance(layer, Conv2D):
        h, w, c = in_shape
        if c != layer.in_channels:
            raise ShapeError(f"conv expects {layer.in_channels} channels, got shape {in_shape}")
        if layer.padding == "same":
            return (h, w, layer.out_channels)
        return (h - layer.kernel + 1, w - layer.kernel + 1, layer.out_channels)
    if isinstance(layer, MaxPool2D):
        h, w, c = in_shape
        return (h // 2, w // 2, c)
    if isinstance(layer, Flatten):
        return (int(np.prod(in_shape)),)
    if isinstance(layer, Dense):
        if in_shape != (layer.in_features,):
            raise ShapeError(f"dense expects ({layer.in_features},), got {in_shape}")
        return (layer.out_features,)
    return in_shape  # relu, dropout, softmax


def validate_network(net: Network) -> tuple:
    """Shape-check the whole stack; returns the final output shape."""
    shape = net.input_shape
    for layer in net.layers:
        shape = output_shape(layer, shape)
    if shape != (net.class_count,):
        raise ShapeError(f"network ends in shape {shape}, expected ({net.class_count},)")
    return shape


def forward(net: Network, batch: Tensor, mode: str = "eval", rng: SeededRng = None):
    """Run the stack on [N,H,W,C] (or one [H,W,C] image).

    Returns (probabilities, cache); the per-layer cache needed by
    backward() is only retained in train mode, eval returns None.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    single = batch.ndim == 3
    x = batch[None] if single else batch
    if x.ndim != 4 or tuple(x.shape[1:]) != tuple(net.input_shape):
        raise ShapeError(f"expected input [N,{','.join(map(str, net.input_shape))}], got {batch.shape}")
    train = mode == "train"
    cache = [] if train else None
    for layer in net.layers:
        entry = None
        if isinstance(layer, Conv2D):
            out, cols = conv_forward_cached(layer, x)
            entry = (x, cols if train else None)
            x = out
        elif isinstance(layer, ReLU):
            entry = x
            x = relu(x)
        elif isinstance(layer, MaxPool2D):
            x, mask = maxpool_forward(x)
            entry = mask
        elif isinstance(layer, Dropout):
            x, mask = dropout_apply(layer, x, rng, train=train)
            entry = mask
        elif isinstance(layer, Flatten):
            entry = x.shape
            x = x.reshape(x.shape[0], -1)
        elif isinstance(layer, Dense):
            entry = x
            x = dense_forward(layer, x)
        elif isinstance(layer, Softmax):
            entry = x  # logits
            x = softmax(x)
        else:
            raise TypeError(f"unknown layer {layer!r}")
        if train:
            cache.append(entry)
    return (x[0] if single else x), cache


def logits_from_cache(net: Network, cache) -> Tensor:
    for layer, entry in zip(reversed(net.layers), reversed(cache)):
        if isinstance(layer, Softmax):
            return entry
    raise ValueError("cache holds no softmax entry")


def backward(net: Network, cache, grad_logits: Tensor) -> dict:
    """Backpropagate d(loss)/d(logits) through the stack.

    Returns {param_key: gradient} matching parameters(); the softmax
    layer itself is skipped because grad_logits is already pre-softmax.
    """
    g = grad_logits
    grads = {}
    for i in range(len(net.layers) - 1, -1, -1):
        layer, entry = net.layers[i], cache[i]
        if isinstance(layer, Conv2D):
            x, cols = entry
            g, gw, gb = conv_backward(layer, x, g, cols)
            grads[f"L{i}.w"], grads[f"L{i}.b"] = gw, gb
        elif isinstance(layer, ReLU):
            g = relu_backward(entry, g)
        elif isinstance(layer, MaxPool2D):
            g = maxpool_backward(entry, g)
        elif isinstance(layer, Dropout):
            g = g * entry
        elif isinstance(layer, Flatten):
            g = g.reshape(entry)
        elif isinstance(layer, Dense):
            g, gw, gb = dense_backward(layer, entry, g)
            grads[f"L{i}.w"], grads[f"L{i}.b"] = gw, gb
        elif isinstance(layer, Softmax):
            continue
    return grads


def parameters(net: Network) -> dict:
    """Live weight arrays keyed like backward()'s gradients."""
    params = {}
    for i, layer in enumerate(net.layers):
        if isinstance(layer, (Conv2D, Dense)):
            params[f"L{i}.w"] = layer.weights
            params[f"L{i}.b"] = layer.bias
    return params


def summarize(net: Network) -> Summary:
    """Per-layer summary table: conv/pool/dropout/flatten/dense rows with
    output shapes and parameter counts, plus totals. Activation layers
    carry no parameters and are not listed.
    """
    counters = {}
    rows = []
    shape = net.input_shape
    total = 0
    for layer in net.layers:
        shape = output_shape(layer, shape)
        base = {
            Conv2D: "conv2d",
            MaxPool2D: "max_pooling2d",
            Dropout: "dropout",
            Flatten: "flatten",
            Dense: "dense",
        }.get(type(layer))
        if base is None:
            continue
        n = counters.get(base, 0)
        counters[base] = n + 1
        name = base if n == 0 else f"{base}_{n}"
        if base == "dense" and n > 0:
            name = name.capitalize()
        count = param_count(layer)
        total += count
        rows.append(SummaryRow(name, shape, count))
    return Summary(rows, total, total, 0)


def format_summary(summary: Summary) -> str:
    lines = [f"{'LAYER':<18} {'OUTPUT':<18} {'PARAMETER':>12}"]
    for row in summary.rows:
        shape = ", ".join(str(d) for d in row.output_shape)
        lines.append(f"{row.name:<18} ({shape}){'':<{max(0, 16 - len(shape))}} {row.params:>12,}")
    lines.append(f"Total Parameters         {summary.total_params:>12,}")
    lines.append(f"Trainable Parameters     {summary.trainable_params:>12,}")
    lines.append(f"Non-trainable Parameters {summary.non_trainable_params:>12,}")
    return "\n".join(lines)


def _layer_meta(layer) -> dict:
    if isinstance(layer, Conv2D):
        return {
            "kind": "conv",
            "in": layer.in_channels,
            "out": layer.out_channels,
            "kernel": layer.kernel,
            "padding": layer.padding,
        }
    if isinstance(layer, ReLU):
        return {"kind": "relu"}
    if isinstance(layer, MaxPool2D):
        return {"kind": "maxpool"}
    if isinstance(layer, Dropout):
        return {"kind": "dropout", "rate": layer.rate}
    if isinstance(layer, Flatten):
        return {"kind": "flatten"}
    if isinstance(layer, Dense):
        return {"kind": "dense", "in": layer.in_features, "out": layer.out_features}
    if isinstance(layer, Softmax):
        return {"kind": "softmax"}
    raise TypeError(f"unknown layer {layer!r}")


def _layer_from_meta(meta: dict):
    kind = meta["kind"]
    if kind == "conv":
        shape = (meta["kernel"], meta["kernel"], meta["in"], meta["out"])
        return Conv2D(meta["in"], meta["out"], meta["kernel"], meta["padding"],
                      np.zeros(shape, dtype=np.float32), np.zeros(meta["out"], dtype=np.float32))
    if kind == "relu":
        return ReLU()
    if kind == "maxpool":
        return MaxPool2D()
    if kind == "dropout":
        return Dropout(meta["rate"])
    if kind == "flatten":
        return Flatten()
    if kind == "dense":
        return Dense(meta["in"], meta["out"],
                     np.zeros((meta["in"], meta["out"]), dtype=np.float32),
                     np.zeros(meta["out"], dtype=np.float32))
    if kind == "softmax":
        return Softmax()
    raise FormatError(f"unknown layer kind {kind!r} in metadata")


class _Reader:
    """File reader that reports the byte offset of any truncation."""

    def __init__(self, f):
        self.f = f
        self.offset = 0

    def read(self, n: int, what: str) -> bytes:
        data = self.f.read(n)
        if len(data) != n:
            raise FormatError(f"truncated file while reading {what}", offset=self.offset)
        self.offset += n
        return data


def _write_model(path, net: Network, kind: str, classes=None):
    meta = {
        "kind": kind,
        "input_shape": list(net.input_shape),
        "class_count": net.class_count,
        "layers": [_layer_meta(layer) for layer in net.layers],
    }
    if classes is not None:
        meta["classes"] = [c.to_dict() for c in classes]
    blob = json.dumps(meta, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for layer in net.layers:
            if isinstance(layer, (Conv2D, Dense)):
                for arr in (layer.weights, layer.bias):
                    data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
                    f.write(struct.pack("<Q", len(data)))
                    f.write(data)


def read_metadata(path) -> dict:
    """Parse just the JSON metadata block of a model file."""
    with open(path, "rb") as f:
        r = _Reader(f)
        magic = r.read(4, "magic")
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
        (version,) = struct.unpack("<I", r.read(4, "format version"))
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported format version {version}", offset=4)
        (meta_len,) = struct.unpack("<I", r.read(4, "metadata length"))
        blob = r.read(meta_len, "metadata")
    try:
        return json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"unreadable metadata: {e}", offset=12) from e


def _read_model(path):
    with open(path, "rb") as f:
        r = _Reader(f)
        magic = r.read(4, "magic")
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
        (version,) = struct.unpack("<I", r.read(4, "format version"))
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported format version {version}", offset=4)
        (meta_len,) = struct.unpack("<I", r.read(4, "metadata length"))
        meta_off = r.offset
        blob = r.read(meta_len, "metadata")
        try:
            meta = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatError(f"unreadable metadata: {e}", offset=meta_off) from e
        layers = [_layer_from_meta(m) for m in meta["layers"]]
        for layer in layers:
            if isinstance(layer, (Conv2D, Dense)):
                for name in ("weights", "bias"):
                    expected = getattr(layer, name)
                    (length,) = struct.unpack("<Q", r.read(8, f"{name} record length"))
                    if length != expected.nbytes:
                        raise FormatError(
                            f"{name} record is {length} bytes, expected {expected.nbytes}",
                            offset=r.offset - 8,
                        )
                    data = r.read(length, f"{name} record")
                    arr = np.frombuffer(data, dtype="<f4").astype(np.float32).reshape(expected.shape)
                    setattr(layer, name, arr)
        if f.read(1):
            raise FormatError("trailing data after weight records", offset=r.offset)
    net = Network(tuple(meta["input_shape"]), meta["class_count"], layers)
    validate_network(net)
    return net, meta


def save_checkpoint(net: Network, path, classes=None):
    """Write a training checkpoint; classes ride along when known so the
    checkpoint can later be frozen without re-scanning the dataset."""
    _write_model(path, net, "checkpoint", classes)


def load_checkpoint(path) -> Network:
    net, meta = _read_model(path)
    if meta["kind"] != "checkpoint":
        raise FormatError(f"expected a checkpoint file, found kind {meta['kind']!r}")
    return net


def export_frozen(net: Network, class_metadata, path):
    """Write an inference bundle: dropout removed, weights shared with
    `net` (no copy in memory), class metadata embedded."""
    if len(class_metadata) != net.class_count:
        raise ValueError(f"{len(class_metadata)} class records for {net.class_count} outputs")
    frozen_layers = [layer for layer in net.layers if not isinstance(layer, Dropout)]
    frozen = Network(net.input_shape, net.class_count, frozen_layers)
    validate_network(frozen)
    _write_model(path, frozen, "frozen", class_metadata)


def load_frozen(path) -> FrozenModel:
    net, meta = _read_model(path)
    if meta["kind"] != "frozen":
        raise FormatError(f"expected a frozen bundle, found kind {meta['kind']!r}")
    if any(isinstance(layer, Dropout) for layer in net.layers):
        raise FormatError("frozen bundle contains dropout layers")
    classes = [ClassInfo.from_dict(c) for c in meta.get("classes", [])]
    if len(classes) != net.class_count:
        raise FormatError(f"{len(classes)} class records for {net.class_count} outputs")
    return FrozenModel(net, classes)


def predict(model, images: Tensor) -> Tensor:
    """Eval-mode class probabilities for a [H,W,C] image or [N,H,W,C] batch."""
    net = model.network if isinstance(model, FrozenModel) else model
    probs, _ = forward(net, images, mode="eval")
    return probs
