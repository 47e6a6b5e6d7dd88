"""Dense-array substrate: float32 row-major tensors, seeded randomness,
matrix multiply, and the im2col/col2im pair that turns convolution into
a matrix product.

A Tensor is simply a C-contiguous numpy array; `tensor()` normalizes
anything array-like into that form. All math here is pure: functions
never mutate their inputs.
"""
import zlib

import numpy as np

from leafcnn import _kernels
from leafcnn.errors import ShapeError

Tensor = np.ndarray


def tensor(data, dtype=np.float32) -> Tensor:
    """Materialize array-like data as a C-order tensor (float32 by default)."""
    return np.ascontiguousarray(np.asarray(data, dtype=dtype))


def zeros(shape, dtype=np.float32) -> Tensor:
    return np.zeros(shape, dtype=dtype)


def flat_index(shape, index) -> int:
    """Row-major flat offset of a multi-index: [i,j,k] of [A,B,C] -> i*B*C + j*C + k."""
    if len(index) != len(shape):
        raise ShapeError(f"index rank {len(index)} != shape rank {len(shape)}")
    off = 0
    for dim, i in zip(shape, index):
        if not 0 <= i < dim:
            raise ShapeError(f"index {index} out of bounds for shape {tuple(shape)}")
        off = off * dim + i
    return off


def unflat_index(shape, offset: int):
    """Inverse of flat_index."""
    size = 1
    for dim in shape:
        size *= dim
    if not 0 <= offset < size:
        raise ShapeError(f"offset {offset} out of bounds for shape {tuple(shape)}")
    idx = []
    for dim in reversed(shape):
        idx.append(offset % dim)
        offset //= dim
    return tuple(reversed(idx))


class SeededRng:
    """Deterministic random source: one seed, one reproducible stream.

    Children derived with `child(tag)` get independent streams that are
    themselves a pure function of (seed, tag), so any part of the pipeline
    can be re-run in isolation.
    """

    def __init__(self, seed: int, _key=()):
        self.seed = int(seed)
        self._key = tuple(_key)
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed, *self._key])))

    def child(self, tag: str, index: int = 0) -> "SeededRng":
        return SeededRng(self.seed, self._key + (zlib.crc32(tag.encode()), index))

    def uniform(self, shape, lo: float = 0.0, hi: float = 1.0) -> Tensor:
        if not lo < hi:
            raise ValueError(f"uniform bounds require lo < hi, got [{lo}, {hi})")
        return self._gen.uniform(lo, hi, size=shape).astype(np.float32)

    def normal(self, shape, std: float = 1.0) -> Tensor:
        return (self._gen.standard_normal(size=shape) * std).astype(np.float32)

    def random(self) -> float:
        return float(self._gen.random())

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, lo: int, hi: int) -> int:
        return int(self._gen.integers(lo, hi))


def rng_uniform(rng: SeededRng, shape, lo: float, hi: float) -> Tensor:
    """I.i.d. uniform [lo, hi) tensor; advances the rng state."""
    return rng.uniform(shape, lo, hi)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of rank-2 tensors; delegates to BLAS."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    return a @ b


def _conv_geometry(h: int, w: int, k: int, padding: str):
    """(pad, out_h, out_w) for a stride-1 square convolution."""
    if padding == "same":
        if k % 2 == 0:
            raise ShapeError(f"same padding requires an odd kernel, got {k}")
        return (k - 1) // 2, h, w
    if padding == "valid":
        if h < k or w < k:
            raise ShapeError(f"kernel {k}x{k} larger than {h}x{w} input in valid mode")
        return 0, h - k + 1, w - k + 1
    raise ValueError(f"padding must be 'same' or 'valid', got {padding!r}")


def im2col(x: Tensor, kernel: int, padding: str) -> Tensor:
    """Patch matrix of one image [H,W,C] -> [Ho*Wo, k*k*C].

    Row r is the receptive field of output position r (row-major),
    flattened in (ky, kx, c) order. Same mode zero-pads so Ho=H, Wo=W;
    valid mode gives Ho=H-k+1.
    """
    if x.ndim != 3:
        raise ShapeError(f"im2col expects [H,W,C], got {x.shape}")
    h, w, c = x.shape
    pad, _, _ = _conv_geometry(h, w, kernel, padding)
    return _kernels.im2col_batch(x[None], kernel, pad)


def col2im(cols: Tensor, input_shape, kernel: int, padding: str) -> Tensor:
    """Adjoint of im2col: sum overlapping patch entries back to [H,W,C]."""
    h, w, c = input_shape
    pad, ho, wo = _conv_geometry(h, w, kernel, padding)
    expected = (ho * wo, kernel * kernel * c)
    if cols.shape != expected:
        raise ShapeError(
            f"col2im got {cols.shape}, expected {expected} for input {tuple(input_shape)}, "
            f"kernel {kernel}, padding {padding}"
        )
    return _kernels.col2im_batch(cols, 1, h, w, c, kernel, pad)[0]
