"""Layer primitives: convolution, ReLU, max pooling, dense, dropout,
softmax cross-entropy. Each parametric layer is a plain dataclass holding
its weights; forward/backward are free functions so the math stays
separate from the bookkeeping.

Convolution runs as im2col + matrix product. Weights are [k,k,in,out]
(channels-last, matching the patch flattening order), so the forward is
`cols @ weights.reshape(k*k*in, out) + bias` and both gradients fall out
of the same product.
"""
from dataclasses import dataclass

import numpy as np

from leafcnn import _kernels
from leafcnn.errors import ShapeError
from leafcnn.tensor import SeededRng, Tensor, _conv_geometry


@dataclass
class Conv2D:
    in_channels: int
    out_channels: int
    kernel: int
    padding: str  # "same" | "valid"
    weights: Tensor  # [k, k, in, out]
    bias: Tensor  # [out]


@dataclass
class MaxPool2D:
    window: int = 2
    stride: int = 2


@dataclass
class Dense:
    in_features: int
    out_features: int
    weights: Tensor  # [in, out]
    bias: Tensor  # [out]


@dataclass
class Dropout:
    rate: float

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ValueError(f"dropout rate must be in [0,1), got {self.rate}")


@dataclass
class ReLU:
    pass


@dataclass
class Flatten:
    pass


@dataclass
class Softmax:
    pass


@dataclass
class LossResult:
    loss: float
    grad_logits: Tensor


@dataclass
class PoolMask:
    """Winner positions of a 2x2 pooling pass, kept for the backward route."""

    idx: np.ndarray  # uint8 [N,Ho,Wo,C], row-major position within the window
    input_hw: tuple  # (H, W) of the pooled input, so dropped rows/cols restore as zero


def init_conv(rng: SeededRng, in_channels: int, out_channels: int, kernel: int, padding: str) -> Conv2D:
    """He-normal weights (std = sqrt(2/fan_in)), zero bias."""
    fan_in = kernel * kernel * in_channels
    w = rng.normal((kernel, kernel, in_channels, out_channels), std=float(np.sqrt(2.0 / fan_in)))
    return Conv2D(in_channels, out_channels, kernel, padding, w, np.zeros(out_channels, dtype=np.float32))


def init_dense(rng: SeededRng, in_features: int, out_features: int) -> Dense:
    w = rng.normal((in_features, out_features), std=float(np.sqrt(2.0 / in_features)))
    return Dense(in_features, out_features, w, np.zeros(out_features, dtype=np.float32))


def _as_batch(x: Tensor, rank: int):
    if x.ndim == rank:
        return x[None], True
    if x.ndim == rank + 1:
        return x, False
    raise ShapeError(f"expected rank {rank} or {rank + 1} input, got shape {x.shape}")


def _conv_cols(layer: Conv2D, x4: Tensor):
    n, h, w, c = x4.shape
    if c != layer.in_channels:
        raise ShapeError(f"conv expects {layer.in_channels} input channels, got {c} (input {x4.shape})")
    pad, ho, wo = _conv_geometry(h, w, layer.kernel, layer.padding)
    return _kernels.im2col_batch(x4, layer.kernel, pad), (n, ho, wo)


def conv_forward(layer: Conv2D, x: Tensor) -> Tensor:
    y, _ = conv_forward_cached(layer, x)
    return y


def conv_forward_cached(layer: Conv2D, x: Tensor):
    """Forward plus the patch matrix, which the backward pass reuses."""
    x4, single = _as_batch(x, 3)
    cols, (n, ho, wo) = _conv_cols(layer, x4)
    w2 = layer.weights.reshape(-1, layer.out_channels)
    out = (cols @ w2 + layer.bias).reshape(n, ho, wo, layer.out_channels)
    return out[0] if single else out, cols


def conv_backward(layer: Conv2D, x: Tensor, grad_out: Tensor, cols: Tensor = None):
    """Gradients w.r.t. (input, weights, bias); pass `cols` to skip re-extraction."""
    x4, single = _as_batch(x, 3)
    g4, _ = _as_batch(grad_out, 3)
    n, h, w, _ = x4.shape
    pad, ho, wo = _conv_geometry(h, w, layer.kernel, layer.padding)
    if g4.shape != (n, ho, wo, layer.out_channels):
        raise ShapeError(f"grad_out {g4.shape} does not match conv output {(n, ho, wo, layer.out_channels)}")
    if cols is None:
        cols, _ = _conv_cols(layer, x4)
    g_flat = g4.reshape(-1, layer.out_channels)
    w2 = layer.weights.reshape(-1, layer.out_channels)
    grad_w = (cols.T @ g_flat).reshape(layer.weights.shape)
    grad_b = g_flat.sum(axis=0)
    grad_cols = g_flat @ w2.T
    grad_x = _kernels.col2im_batch(grad_cols, n, h, w, layer.in_channels, layer.kernel, pad)
    return (grad_x[0] if single else grad_x), grad_w, grad_b


def maxpool_forward(x: Tensor):
    x4, single = _as_batch(x, 3)
    n, h, w, c = x4.shape
    if h < 2 or w < 2:
        raise ShapeError(f"maxpool needs spatial dims >= 2, got {x4.shape}")
    out, idx = _kernels.maxpool2_batch(x4)
    mask = PoolMask(idx, (h, w))
    return (out[0] if single else out), mask


def maxpool_backward(mask: PoolMask, grad_out: Tensor) -> Tensor:
    g4, single = _as_batch(grad_out, 3)
    h, w = mask.input_hw
    if g4.shape[:3] != (mask.idx.shape[0], h // 2, w // 2) or g4.shape[3] != mask.idx.shape[3]:
        raise ShapeError(f"grad_out {g4.shape} does not match pool mask {mask.idx.shape}")
    dx = _kernels.maxpool2_backward_batch(mask.idx, g4, h, w)
    return dx[0] if single else dx


def dense_forward(layer: Dense, x: Tensor) -> Tensor:
    x2, single = _as_batch(x, 1)
    if x2.shape[1] != layer.in_features:
        raise ShapeError(f"dense expects {layer.in_features} features, got {x2.shape[1]}")
    out = x2 @ layer.weights + layer.bias
    return out[0] if single else out


def dense_backward(layer: Dense, x: Tensor, grad_out: Tensor):
    x2, single = _as_batch(x, 1)
    g2, _ = _as_batch(grad_out, 1)
    if g2.shape != (x2.shape[0], layer.out_features):
        raise ShapeError(f"grad_out {g2.shape} does not match dense output ({x2.shape[0]}, {layer.out_features})")
    grad_w = x2.T @ g2
    grad_b = g2.sum(axis=0)
    grad_x = g2 @ layer.weights.T
    return (grad_x[0] if single else grad_x), grad_w, grad_b


def relu(x: Tensor) -> Tensor:
    return np.maximum(x, 0)


def relu_backward(x: Tensor, grad_out: Tensor) -> Tensor:
    # subgradient at exactly 0 is 0
    return grad_out * (x > 0)


def dropout_apply(layer: Dropout, x: Tensor, rng: SeededRng = None, train: bool = True):
    """Inverted dropout: (output, mask). Backward is grad_out * mask.

    Eval mode (train=False) is the identity; the mask is all ones.
    Train mode zeroes each element with probability `rate` and scales
    survivors by 1/(1-rate), so the expected output equals the input.
    """
    if not train or layer.rate == 0.0:
        return x, np.ones_like(x)
    if rng is None:
        raise ValueError("dropout in train mode needs an rng")
    keep = 1.0 - layer.rate
    mask = (rng.uniform(x.shape, 0.0, 1.0) >= layer.rate).astype(x.dtype) / np.asarray(keep, dtype=x.dtype)
    return x * mask, mask


def softmax(logits: Tensor) -> Tensor:
    """Row-wise softmax, max-subtracted for stability."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, labels) -> LossResult:
    """Mean negative log-likelihood over the batch and its logit gradient."""
    if logits.ndim != 2:
        raise ShapeError(f"expected [N,classes] logits, got {logits.shape}")
    n, k = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")
    z = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(logsumexp - z[np.arange(n), labels]))
    grad = softmax(logits)
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    return LossResult(loss, grad.astype(logits.dtype))


def param_count(layer) -> int:
    """Trainable parameters: conv = out*(k*k*in+1), dense = in*out+out, else 0."""
    if isinstance(layer, Conv2D):
        return layer.out_channels * (layer.kernel * layer.kernel * layer.in_channels + 1)
    if isinstance(layer, Dense):
        return layer.in_features * layer.out_features + layer.out_features
    return 0
