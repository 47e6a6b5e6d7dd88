"""Kernel backend selection.

The compiled extension (`_fast`, Cython) is used for float32 work when it
was built; everything else runs on the numpy fallback (`_slow`). Set
LEAFCNN_FORCE_FALLBACK=1 to disable the extension. `BACKEND` reports the
choice; `benchmarks/bench_kernels.py` compares the two.
"""
import os

import numpy as np

from leafcnn._kernels import _slow

try:
    from leafcnn._kernels import _fast
except ImportError:  # pragma: no cover - depends on build env
    _fast = None

if os.environ.get("LEAFCNN_FORCE_FALLBACK"):
    _fast = None

BACKEND = "compiled" if _fast is not None else "fallback"


def _impl(x):
    if _fast is not None and x.dtype == np.float32:
        return _fast
    return _slow


def im2col_batch(x, k, pad):
    """[N,H,W,C] -> patch matrix [N*Ho*Wo, k*k*C]; zero-pads by `pad` first."""
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    x = np.ascontiguousarray(x)
    return _impl(x).im2col(x, k)


def col2im_batch(cols, n, h, w, c, k, pad):
    """Adjoint scatter back to [N,H,W,C]; drops the `pad` border."""
    cols = np.ascontiguousarray(cols)
    xp = _impl(cols).col2im(cols, n, h + 2 * pad, w + 2 * pad, c, k)
    if pad:
        xp = np.ascontiguousarray(xp[:, pad:pad + h, pad:pad + w, :])
    return xp


def maxpool2_batch(x):
    x = np.ascontiguousarray(x)
    return _impl(x).maxpool2(x)


def maxpool2_backward_batch(idx, grad_out, h, w):
    grad_out = np.ascontiguousarray(grad_out)
    if _fast is not None and grad_out.dtype == np.float32:
        return _fast.maxpool2_backward(np.ascontiguousarray(idx), grad_out, h, w)
    return _slow.maxpool2_backward(idx, grad_out, h, w)
