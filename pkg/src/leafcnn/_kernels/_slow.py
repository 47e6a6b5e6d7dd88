"""Numpy fallback implementations of the hot kernels.

Same contracts as the compiled module (`_fast`): batched channels-last
arrays, stride-1 patch extraction, 2x2/stride-2 pooling. Inputs arrive
already zero-padded; the dispatch wrapper owns padding and cropping.
"""
import numpy as np


def im2col(xp, k):
    """Patch matrix of a padded batch [N,Hp,Wp,C] -> [N*Ho*Wo, k*k*C].

    Row (n, oy, ox) holds the k x k receptive field at that output
    position, flattened in (ky, kx, c) order.
    """
    n, hp, wp, c = xp.shape
    ho, wo = hp - k + 1, wp - k + 1
    cols = np.empty((n, ho, wo, k, k, c), dtype=xp.dtype)
    for ky in range(k):
        for kx in range(k):
            cols[:, :, :, ky, kx, :] = xp[:, ky:ky + ho, kx:kx + wo, :]
    return cols.reshape(n * ho * wo, k * k * c)


def col2im(cols, n, hp, wp, c, k):
    """Adjoint of im2col: scatter-add patch rows back to [N,Hp,Wp,C]."""
    ho, wo = hp - k + 1, wp - k + 1
    cols6 = cols.reshape(n, ho, wo, k, k, c)
    xp = np.zeros((n, hp, wp, c), dtype=cols.dtype)
    for ky in range(k):
        for kx in range(k):
            xp[:, ky:ky + ho, kx:kx + wo, :] += cols6[:, :, :, ky, kx, :]
    return xp


def maxpool2(x):
    """2x2/stride-2 max pooling of [N,H,W,C].

    Returns (out [N,H//2,W//2,C], idx uint8 [N,H//2,W//2,C]) where idx is
    the winner's row-major position within its window (first max wins).
    Trailing odd row/column is dropped.
    """
    n, h, w, c = x.shape
    ho, wo = h // 2, w // 2
    win = (
        x[:, : ho * 2, : wo * 2, :]
        .reshape(n, ho, 2, wo, 2, c)
        .transpose(0, 1, 3, 2, 4, 5)
        .reshape(n, ho, wo, 4, c)
    )
    idx = win.argmax(axis=3).astype(np.uint8)
    out = np.take_along_axis(win, idx[:, :, :, None, :].astype(np.intp), axis=3)[:, :, :, 0, :]
    return np.ascontiguousarray(out), idx


def maxpool2_backward(idx, grad_out, h, w):
    """Route pooled gradients back to winner positions of a [N,h,w,C] input."""
    n, ho, wo, c = grad_out.shape
    dwin = np.zeros((n, ho, wo, 4, c), dtype=grad_out.dtype)
    np.put_along_axis(dwin, idx[:, :, :, None, :].astype(np.intp), grad_out[:, :, :, None, :], axis=3)
    dx = np.zeros((n, h, w, c), dtype=grad_out.dtype)
    dx[:, : ho * 2, : wo * 2, :] = (
        dwin.reshape(n, ho, wo, 2, 2, c)
        .transpose(0, 1, 3, 2, 4, 5)
        .reshape(n, ho * 2, wo * 2, c)
    )
    return dx
