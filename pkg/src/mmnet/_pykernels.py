"""Pure-numpy kernels; the fallback when the compiled ``_ckernels`` is absent.

Every function here has a twin in ``_ckernels.pyx`` with the same signature
and the same per-element summation order, so both backends return
bit-identical arrays (direct convolution excepted, see ``conv2d_direct``).
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided


def im2col(x, k, stride, pad):
    """Unfold ``x[C,H,W]`` into ``cols[C*k*k, Ho*Wo]`` (row = c*k*k + ki*k + kj)."""
    c, h, w = x.shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else np.ascontiguousarray(x)
    s0, s1, s2 = xp.strides
    view = as_strided(
        xp,
        shape=(c, k, k, ho, wo),
        strides=(s0, s1, s2, s1 * stride, s2 * stride),
        writeable=False,
    )
    return view.reshape(c * k * k, ho * wo)


def col2im(cols, shape, k, stride, pad):
    """Adjoint of :func:`im2col`: scatter-add columns back into a ``[C,H,W]`` image."""
    c, h, w = shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    out = np.zeros((c, h + 2 * pad, w + 2 * pad))
    cols = cols.reshape(c, k, k, ho, wo)
    for ki in range(k):
        for kj in range(k):
            out[:, ki : ki + stride * ho : stride, kj : kj + stride * wo : stride] += cols[:, ki, kj]
    if pad:
        out = out[:, pad:-pad, pad:-pad]
    return np.ascontiguousarray(out)


def conv2d_direct(x, weight, bias, stride, pad):
    """Convolution by accumulating one kernel tap at a time (no im2col buffer)."""
    c_out, c_in, k, _ = weight.shape
    _, h, w = x.shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else x
    out = np.empty((c_out, ho, wo))
    out[...] = bias[:, None, None]
    for ki in range(k):
        for kj in range(k):
            patch = xp[:, ki : ki + stride * ho : stride, kj : kj + stride * wo : stride]
            out += np.tensordot(weight[:, :, ki, kj], patch, axes=(1, 0))
    return out


def maxpool2_forward(x):
    c, h, w = x.shape
    win = x.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h // 2, w // 2, 4)
    idx = np.argmax(win, axis=-1).astype(np.uint8)
    out = np.take_along_axis(win, idx[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(out), idx


def maxpool2_backward(grad, idx, h, w):
    c, ho, wo = grad.shape
    win = np.zeros((c, ho, wo, 4))
    np.put_along_axis(win, idx[..., None].astype(np.intp), grad[..., None], axis=-1)
    return np.ascontiguousarray(win.reshape(c, ho, wo, 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h, w))


def channel_max_forward(x):
    idx = np.argmax(x, axis=0)
    out = np.take_along_axis(x, idx[None], axis=0)
    return np.ascontiguousarray(out), idx.astype(np.intp)


def channel_max_backward(grad, idx, c):
    _, h, w = grad.shape
    out = np.zeros((c, h, w))
    np.put_along_axis(out, idx[None].astype(np.intp), grad, axis=0)
    return out
