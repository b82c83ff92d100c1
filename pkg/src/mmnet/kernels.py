"""Backend selection for the hot kernels.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy twins in ``_pykernels`` are used. Setting ``MMNET_PURE_PYTHON=1``
forces the fallback. Both backends produce identical arrays for every kernel
except ``conv2d_direct`` (different accumulation order, agreement ~1e-13).
"""

import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels
if not os.environ.get("MMNET_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def im2col(x, k, stride, pad):
    return _impl.im2col(_c(x), k, stride, pad)


def col2im(cols, shape, k, stride, pad):
    return _impl.col2im(_c(cols), tuple(shape), k, stride, pad)


def conv2d_direct(x, weight, bias, stride, pad):
    return _impl.conv2d_direct(_c(x), _c(weight), _c(bias), stride, pad)


def maxpool2_forward(x):
    return _impl.maxpool2_forward(_c(x))


def maxpool2_backward(grad, idx, h, w):
    return _impl.maxpool2_backward(_c(grad), np.ascontiguousarray(idx, dtype=np.uint8), h, w)


def channel_max_forward(x):
    return _impl.channel_max_forward(_c(x))


def channel_max_backward(grad, idx, c):
    return _impl.channel_max_backward(_c(grad), np.ascontiguousarray(idx, dtype=np.intp), c)


def backends():
    """Map backend name to module for every backend importable in this process."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
