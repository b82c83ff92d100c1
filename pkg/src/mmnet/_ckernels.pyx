# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; same contracts and summation order as ``_pykernels``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def im2col(const double[:, :, ::1] x, Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad):
    cdef Py_ssize_t c = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef Py_ssize_t ho = (h + 2 * pad - k) // stride + 1
    cdef Py_ssize_t wo = (w + 2 * pad - k) // stride + 1
    out_arr = np.empty((c * k * k, ho * wo))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t ci, ki, kj, oy, ox, iy, row, base, lo, hi, off
    with nogil:
        for ci in range(c):
            for ki in range(k):
                for kj in range(k):
                    row = (ci * k + ki) * k + kj
                    off = kj - pad
                    # columns whose source pixel lies inside the image: lo <= ox < hi
                    lo = 0
                    while lo < wo and lo * stride + off < 0:
                        lo += 1
                    hi = wo
                    while hi > lo and (hi - 1) * stride + off >= w:
                        hi -= 1
                    for oy in range(ho):
                        iy = oy * stride + ki - pad
                        base = oy * wo
                        if iy < 0 or iy >= h:
                            for ox in range(wo):
                                out[row, base + ox] = 0.0
                            continue
                        for ox in range(lo):
                            out[row, base + ox] = 0.0
                        for ox in range(lo, hi):
                            out[row, base + ox] = x[ci, iy, ox * stride + off]
                        for ox in range(hi, wo):
                            out[row, base + ox] = 0.0
    return out_arr


def col2im(const double[:, ::1] cols, tuple shape, Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad):
    cdef Py_ssize_t c = shape[0], h = shape[1], w = shape[2]
    cdef Py_ssize_t ho = (h + 2 * pad - k) // stride + 1
    cdef Py_ssize_t wo = (w + 2 * pad - k) // stride + 1
    cdef Py_ssize_t hp = h + 2 * pad, wp = w + 2 * pad
    padded_arr = np.zeros((c, hp, wp))
    cdef double[:, :, ::1] padded = padded_arr
    cdef Py_ssize_t ci, ki, kj, oy, ox, row
    with nogil:
        for ci in range(c):
            for ki in range(k):
                for kj in range(k):
                    row = (ci * k + ki) * k + kj
                    for oy in range(ho):
                        for ox in range(wo):
                            padded[ci, oy * stride + ki, ox * stride + kj] += cols[row, oy * wo + ox]
    if pad:
        return np.ascontiguousarray(padded_arr[:, pad:hp - pad, pad:wp - pad])
    return padded_arr


def conv2d_direct(const double[:, :, ::1] x, const double[:, :, :, ::1] weight,
                  const double[::1] bias, Py_ssize_t stride, Py_ssize_t pad):
    cdef Py_ssize_t c_out = weight.shape[0], c_in = weight.shape[1], k = weight.shape[2]
    cdef Py_ssize_t h = x.shape[1], w = x.shape[2]
    cdef Py_ssize_t ho = (h + 2 * pad - k) // stride + 1
    cdef Py_ssize_t wo = (w + 2 * pad - k) // stride + 1
    out_arr = np.empty((c_out, ho, wo))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t co, ci, ki, kj, oy, ox, iy, ix
    cdef double acc
    with nogil:
        for co in range(c_out):
            for oy in range(ho):
                for ox in range(wo):
                    acc = bias[co]
                    for ci in range(c_in):
                        for ki in range(k):
                            iy = oy * stride + ki - pad
                            if iy < 0 or iy >= h:
                                continue
                            for kj in range(k):
                                ix = ox * stride + kj - pad
                                if ix >= 0 and ix < w:
                                    acc = acc + weight[co, ci, ki, kj] * x[ci, iy, ix]
                    out[co, oy, ox] = acc
    return out_arr


def maxpool2_forward(const double[:, :, ::1] x):
    cdef Py_ssize_t c = x.shape[0], ho = x.shape[1] // 2, wo = x.shape[2] // 2
    out_arr = np.empty((c, ho, wo))
    idx_arr = np.empty((c, ho, wo), dtype=np.uint8)
    cdef double[:, :, ::1] out = out_arr
    cdef unsigned char[:, :, ::1] idx = idx_arr
    cdef Py_ssize_t ci, oy, ox, q
    cdef unsigned char best
    cdef double v, bv
    with nogil:
        for ci in range(c):
            for oy in range(ho):
                for ox in range(wo):
                    best = 0
                    bv = x[ci, 2 * oy, 2 * ox]
                    for q in range(1, 4):
                        v = x[ci, 2 * oy + q // 2, 2 * ox + q % 2]
                        if v > bv:
                            bv = v
                            best = <unsigned char>q
                    out[ci, oy, ox] = bv
                    idx[ci, oy, ox] = best
    return out_arr, idx_arr


def maxpool2_backward(const double[:, :, ::1] grad, const unsigned char[:, :, ::1] idx,
                      Py_ssize_t h, Py_ssize_t w):
    cdef Py_ssize_t c = grad.shape[0], ho = grad.shape[1], wo = grad.shape[2]
    out_arr = np.zeros((c, h, w))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t ci, oy, ox, q
    with nogil:
        for ci in range(c):
            for oy in range(ho):
                for ox in range(wo):
                    q = idx[ci, oy, ox]
                    out[ci, 2 * oy + q // 2, 2 * ox + q % 2] = grad[ci, oy, ox]
    return out_arr


def channel_max_forward(const double[:, :, ::1] x):
    cdef Py_ssize_t c = x.shape[0], h = x.shape[1], w = x.shape[2]
    out_arr = np.empty((1, h, w))
    idx_arr = np.zeros((h, w), dtype=np.intp)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t[:, ::1] idx = idx_arr
    cdef Py_ssize_t ci, y, xx
    with nogil:
        out[0, :, :] = x[0, :, :]
        for ci in range(1, c):
            for y in range(h):
                for xx in range(w):
                    if x[ci, y, xx] > out[0, y, xx]:
                        out[0, y, xx] = x[ci, y, xx]
                        idx[y, xx] = ci
    return out_arr, idx_arr


def channel_max_backward(const double[:, :, ::1] grad, const Py_ssize_t[:, ::1] idx, Py_ssize_t c):
    cdef Py_ssize_t h = grad.shape[1], w = grad.shape[2]
    out_arr = np.zeros((c, h, w))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t y, xx
    with nogil:
        for y in range(h):
            for xx in range(w):
                out[idx[y, xx], y, xx] = grad[0, y, xx]
    return out_arr
