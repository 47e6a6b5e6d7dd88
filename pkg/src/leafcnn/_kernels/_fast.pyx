#cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled float32 kernels: patch gather/scatter and 2x2 max pooling.

Contracts mirror `_slow`; inputs are already padded, channels-last,
C-contiguous float32.
"""
import numpy as np

cimport numpy as cnp
from libc.string cimport memcpy

cnp.import_array()


def im2col(cnp.float32_t[:, :, :, ::1] xp, int k):
    cdef int n = xp.shape[0], hp = xp.shape[1], wp = xp.shape[2], c = xp.shape[3]
    cdef int ho = hp - k + 1, wo = wp - k + 1
    cdef int row_bytes = k * c * sizeof(cnp.float32_t)
    out = np.empty((n * ho * wo, k * k * c), dtype=np.float32)
    cdef cnp.float32_t[:, ::1] cols = out
    cdef int i, oy, ox, ky
    cdef long r0
    with nogil:
        for i in range(n):
            for oy in range(ho):
                r0 = (<long>i * ho + oy) * wo
                for ky in range(k):
                    for ox in range(wo):
                        memcpy(&cols[r0 + ox, ky * k * c], &xp[i, oy + ky, ox, 0], row_bytes)
    return out


def col2im(cnp.float32_t[:, ::1] cols, int n, int hp, int wp, int c, int k):
    cdef int ho = hp - k + 1, wo = wp - k + 1
    out = np.zeros((n, hp, wp, c), dtype=np.float32)
    cdef cnp.float32_t[:, :, :, ::1] xp = out
    cdef int i, oy, ox, ky, j, kc = k * c
    cdef long r0
    cdef cnp.float32_t* dst
    cdef const cnp.float32_t* src
    with nogil:
        for i in range(n):
            for oy in range(ho):
                r0 = (<long>i * ho + oy) * wo
                for ky in range(k):
                    for ox in range(wo):
                        dst = &xp[i, oy + ky, ox, 0]
                        src = &cols[r0 + ox, ky * kc]
                        for j in range(kc):
                            dst[j] += src[j]
    return out


def maxpool2(cnp.float32_t[:, :, :, ::1] x):
    cdef int n = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3]
    cdef int ho = h // 2, wo = w // 2
    out_arr = np.empty((n, ho, wo, c), dtype=np.float32)
    idx_arr = np.empty((n, ho, wo, c), dtype=np.uint8)
    cdef cnp.float32_t[:, :, :, ::1] out = out_arr
    cdef cnp.uint8_t[:, :, :, ::1] idx = idx_arr
    cdef int i, oy, ox, ch, wy, wx, best
    cdef cnp.float32_t v, m
    with nogil:
        for i in range(n):
            for oy in range(ho):
                for ox in range(wo):
                    for ch in range(c):
                        m = x[i, 2 * oy, 2 * ox, ch]
                        best = 0
                        for wy in range(2):
                            for wx in range(2):
                                v = x[i, 2 * oy + wy, 2 * ox + wx, ch]
                                if v > m:
                                    m = v
                                    best = wy * 2 + wx
                        out[i, oy, ox, ch] = m
                        idx[i, oy, ox, ch] = <cnp.uint8_t>best
    return out_arr, idx_arr


def maxpool2_backward(cnp.uint8_t[:, :, :, ::1] idx, cnp.float32_t[:, :, :, ::1] grad_out, int h, int w):
    cdef int n = grad_out.shape[0], ho = grad_out.shape[1], wo = grad_out.shape[2], c = grad_out.shape[3]
    dx_arr = np.zeros((n, h, w, c), dtype=np.float32)
    cdef cnp.float32_t[:, :, :, ::1] dx = dx_arr
    cdef int i, oy, ox, ch, p
    with nogil:
        for i in range(n):
            for oy in range(ho):
                for ox in range(wo):
                    for ch in range(c):
                        p = idx[i, oy, ox, ch]
                        dx[i, 2 * oy + (p >> 1), 2 * ox + (p & 1), ch] += grad_out[i, oy, ox, ch]
    return dx_arr
