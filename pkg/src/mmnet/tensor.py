"""Float64 tensors with reverse-mode automatic differentiation.

A :class:`Tensor` wraps a contiguous ``float64`` numpy array. Every
differentiable primitive is a :class:`Function` subclass; calling
``SomeOp.apply(...)`` runs the forward pass and, when any input requires a
gradient, records the op so that :func:`backward` can replay it in reverse.

Graphs are single use: ``backward`` consumes the graph (saved activations are
released) and refuses to run twice, and it refuses to overwrite a leaf
gradient that has not been cleared with :meth:`Tensor.zero_grad`.
"""

from __future__ import annotations

import hashlib
import threading
from contextlib import contextmanager
from typing import Sequence

import numpy as np
from scipy.special import erf, expit

from . import kernels
from .errors import DimensionError, DoubleBackwardError, GeometryError, LabelError, NonFiniteError

_state = threading.local()

_SIGMOID_LO = np.finfo(np.float64).tiny
_SIGMOID_HI = 1.0 - 2.0**-53
_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Run ops without recording a graph (per thread)."""
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


@contextmanager
def record_branches():
    """Collect a digest of every piecewise choice (relu masks, max indices) made inside the block.

    Two evaluations with equal lists took the same smooth piece of the
    function, so a finite difference between them is meaningful.
    """
    log: list = []
    prev = getattr(_state, "branches", None)
    _state.branches = log
    try:
        yield log
    finally:
        _state.branches = prev


def _note_branch(choice: np.ndarray) -> None:
    log = getattr(_state, "branches", None)
    if log is not None:
        log.append(hashlib.sha1(np.ascontiguousarray(choice).tobytes()).digest())


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_node", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._node: Function | None = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar; python scalars become constant ops
    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return add_scalar(self, float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return sub(self, other)
        return add_scalar(self, -float(other))

    def __rsub__(self, other):
        return add_scalar(neg(self), float(other))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return mul_scalar(self, float(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("only division by a scalar constant is supported")
        return mul_scalar(self, 1.0 / float(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def sum(self):
        return tsum(self)

    def mean(self):
        return mean(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Function:
    """One recorded op: forward on arrays, backward from output grad to input grads."""

    kind = "op"

    def __init__(self):
        self.inputs: tuple = ()
        self.consumed = False

    def forward(self, *arrays, **kwargs) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> tuple:
        raise NotImplementedError

    def release(self) -> None:
        """Drop saved activations and input links once backward has run."""
        keep = {"consumed"}
        for attr in list(vars(self)):
            if attr not in keep:
                setattr(self, attr, None)
        self.inputs = ()
        self.consumed = True

    @classmethod
    def apply(cls, *inputs: Tensor, **kwargs) -> Tensor:
        fn = cls()
        out = fn.forward(*(t.data for t in inputs), **kwargs)
        if not np.all(np.isfinite(out)):
            raise NonFiniteError(f"{cls.kind}: forward produced a non-finite value")
        requires = grad_enabled() and any(t.requires_grad for t in inputs)
        result = Tensor(out, requires_grad=requires)
        if requires:
            fn.inputs = inputs
            result._node = fn
        return result


class Graph:
    """Topologically ordered view of the ops that produced ``output``.

    ``nodes`` lists ``(kind, input_ids, output)`` records, inputs before users;
    ids are positions in :attr:`tensors`.
    """

    def __init__(self, output: Tensor):
        self.output = output
        self.tensors = _topo_order(output)
        index = {id(t): i for i, t in enumerate(self.tensors)}
        self.nodes = []
        for t in self.tensors:
            if t._node is not None:
                ids = tuple(index[id(i)] for i in t._node.inputs if id(i) in index)
                self.nodes.append((t._node.kind, ids, t))

    @property
    def leaves(self) -> list:
        return [t for t in self.tensors if t._node is None and t.requires_grad]


def _topo_order(root: Tensor) -> list:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        if t._node is not None:
            for inp in reversed(t._node.inputs):
                if inp.requires_grad and id(inp) not in seen:
                    stack.append((inp, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every leaf that requires it; consumes the graph."""
    if loss.size != 1:
        raise DimensionError(f"backward needs a single-element loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise DimensionError("loss does not depend on any tensor that requires grad")
    if loss._node is not None and loss._node.consumed:
        raise DoubleBackwardError("graph already consumed by a previous backward")
    order = _topo_order(loss)
    for t in order:
        if t._node is None and t.grad is not None:
            raise DoubleBackwardError(
                f"leaf {t.name or t.shape} still holds a gradient; call zero_grad() first"
            )
        if t._node is not None and t._node.consumed:
            raise DoubleBackwardError("graph already consumed by a previous backward")
    grads = {id(loss): np.ones_like(loss.data)}
    for t in reversed(order):
        g = grads.pop(id(t), None)
        node = t._node
        if node is None:
            if g is not None:
                t.grad = g
            continue
        if g is not None:
            for inp, gi in zip(node.inputs, node.backward(g)):
                if gi is None or not inp.requires_grad:
                    continue
                prev = grads.get(id(inp))
                grads[id(inp)] = gi if prev is None else prev + gi
        node.release()
    if loss.is_leaf and loss.grad is None:
        loss.grad = np.ones_like(loss.data)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    lead = grad.ndim - len(shape)
    if lead:
        grad = grad.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(a: tuple, b: tuple, kind: str) -> tuple:
    try:
        return np.broadcast_shapes(a, b)
    except ValueError:
        raise DimensionError(f"{kind}: shapes {a} and {b} do not broadcast") from None


# ---------------------------------------------------------------- elementwise


class Add(Function):
    kind = "add"

    def forward(self, a, b):
        _broadcast_shape(a.shape, b.shape, self.kind)
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, g):
        return _unbroadcast(g, self.shapes[0]), _unbroadcast(g, self.shapes[1])


class Sub(Function):
    kind = "sub"

    def forward(self, a, b):
        _broadcast_shape(a.shape, b.shape, self.kind)
        self.shapes = (a.shape, b.shape)
        return a - b

    def backward(self, g):
        return _unbroadcast(g, self.shapes[0]), _unbroadcast(-g, self.shapes[1])


class Mul(Function):
    kind = "mul"

    def forward(self, a, b):
        _broadcast_shape(a.shape, b.shape, self.kind)
        self.a, self.b = a, b
        return a * b

    def backward(self, g):
        return _unbroadcast(g * self.b, self.a.shape), _unbroadcast(g * self.a, self.b.shape)


class Neg(Function):
    kind = "neg"

    def forward(self, a):
        return -a

    def backward(self, g):
        return (-g,)


class AddScalar(Function):
    kind = "add_scalar"

    def forward(self, a, value):
        return a + value

    def backward(self, g):
        return (g,)


class MulScalar(Function):
    kind = "mul_scalar"

    def forward(self, a, value):
        self.value = value
        return a * value

    def backward(self, g):
        return (g * self.value,)


class Sigmoid(Function):
    """Logistic function, clipped to the open interval (0, 1) at float64 saturation."""

    kind = "sigmoid"

    def forward(self, a):
        self.out = np.clip(expit(a), _SIGMOID_LO, _SIGMOID_HI)
        return self.out

    def backward(self, g):
        return (g * self.out * (1.0 - self.out),)


class ReLU(Function):
    kind = "relu"

    def forward(self, a):
        self.mask = a > 0
        _note_branch(self.mask)
        return np.where(self.mask, a, 0.0)

    def backward(self, g):
        return (g * self.mask,)


class GELU(Function):
    """Exact (erf-based) GELU."""

    kind = "gelu"

    def forward(self, a):
        self.a = a
        self.cdf = 0.5 * (1.0 + erf(a * _INV_SQRT2))
        return a * self.cdf

    def backward(self, g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * self.a * self.a)
        return (g * (self.cdf + self.a * pdf),)


# ------------------------------------------------------------------- algebra


class MatMul(Function):
    kind = "matmul"

    def forward(self, a, b):
        if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2] or a.shape[:-2] != b.shape[:-2]:
            raise DimensionError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
        self.a, self.b = a, b
        return a @ b

    def backward(self, g):
        return g @ np.swapaxes(self.b, -1, -2), np.swapaxes(self.a, -1, -2) @ g


class Linear(Function):
    """``x @ weight.T + bias`` for ``x`` of shape ``[..., in]``."""

    kind = "linear"

    def forward(self, x, weight, bias):
        if weight.ndim != 2 or x.shape[-1] != weight.shape[1] or bias.shape != (weight.shape[0],):
            raise DimensionError(f"linear: x {x.shape}, weight {weight.shape}, bias {bias.shape}")
        self.x, self.weight = x, weight
        return x @ weight.T + bias

    def backward(self, g):
        x2 = self.x.reshape(-1, self.x.shape[-1])
        g2 = g.reshape(-1, g.shape[-1])
        return g @ self.weight, g2.T @ x2, g2.sum(axis=0)


class LayerNorm(Function):
    """Normalize along ``axis`` then scale/shift by per-feature ``gamma``/``beta``."""

    kind = "layer_norm"

    def forward(self, x, gamma, beta, axis=-1, eps=1e-5):
        axis = axis % x.ndim
        n = x.shape[axis]
        if gamma.shape != (n,) or beta.shape != (n,):
            raise DimensionError(f"layer_norm: gamma/beta must be ({n},), got {gamma.shape}/{beta.shape}")
        bshape = [1] * x.ndim
        bshape[axis] = n
        self.axis, self.bshape = axis, tuple(bshape)
        mu = x.mean(axis=axis, keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(axis=axis, keepdims=True)
        self.inv = 1.0 / np.sqrt(var + eps)
        self.xhat = xc * self.inv
        self.gamma = gamma
        return self.xhat * gamma.reshape(self.bshape) + beta.reshape(self.bshape)

    def backward(self, g):
        ax = self.axis
        others = tuple(i for i in range(g.ndim) if i != ax)
        dgamma = (g * self.xhat).sum(axis=others)
        dbeta = g.sum(axis=others)
        dxhat = g * self.gamma.reshape(self.bshape)
        n = g.shape[ax]
        s1 = dxhat.sum(axis=ax, keepdims=True)
        s2 = (dxhat * self.xhat).sum(axis=ax, keepdims=True)
        dx = self.inv * (dxhat - s1 / n - self.xhat * (s2 / n))
        return dx, dgamma, dbeta


class MapLayerNorm(Function):
    """Normalize a ``[C,H,W]`` map by its own mean/variance over every entry,
    then scale/shift each channel by ``gamma``/``beta``."""

    kind = "map_layer_norm"

    def forward(self, x, gamma, beta, eps=1e-5):
        c = x.shape[0]
        if x.ndim != 3:
            raise DimensionError(f"map_layer_norm expects [C,H,W], got {x.shape}")
        if gamma.shape != (c,) or beta.shape != (c,):
            raise DimensionError(f"map_layer_norm: gamma/beta must be ({c},), got {gamma.shape}/{beta.shape}")
        xc = x - x.mean()
        self.inv = 1.0 / np.sqrt((xc * xc).mean() + eps)
        self.xhat = xc * self.inv
        self.gamma = gamma
        return self.xhat * gamma[:, None, None] + beta[:, None, None]

    def backward(self, g):
        dgamma = (g * self.xhat).sum(axis=(1, 2))
        dbeta = g.sum(axis=(1, 2))
        dxhat = g * self.gamma[:, None, None]
        n = g.size
        dx = self.inv * (dxhat - dxhat.sum() / n - self.xhat * ((dxhat * self.xhat).sum() / n))
        return dx, dgamma, dbeta


class RMSNormalize(Function):
    """Divide a whole tensor by its root-mean-square: ``x / sqrt(mean(x**2) + eps)``."""

    kind = "rms_normalize"

    def forward(self, x, eps=1e-12):
        self.inv = 1.0 / np.sqrt((x * x).mean() + eps)
        self.y = x * self.inv
        return self.y

    def backward(self, g):
        return (self.inv * (g - self.y * ((g * self.y).sum() / g.size)),)


class Softmax(Function):
    kind = "softmax"

    def forward(self, x):
        z = x - x.max(axis=-1, keepdims=True)
        e = np.exp(z)
        self.out = e / e.sum(axis=-1, keepdims=True)
        return self.out

    def backward(self, g):
        s = self.out
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)


class CrossEntropy(Function):
    """``-log softmax(logits)[label]`` for a single logit vector."""

    kind = "cross_entropy"

    def forward(self, logits, label):
        if logits.ndim != 1:
            raise DimensionError(f"cross_entropy expects logits [K], got {logits.shape}")
        k = logits.shape[0]
        if not (isinstance(label, (int, np.integer)) and 0 <= label < k):
            raise LabelError(f"label {label!r} outside [0, {k})")
        m = logits.max()
        e = np.exp(logits - m)
        s = e.sum()
        self.p = e / s
        self.label = int(label)
        return np.asarray(m + np.log(s) - logits[self.label])

    def backward(self, g):
        d = self.p.copy()
        d[self.label] -= 1.0
        return (g * d,)


# --------------------------------------------------------------------- shape


class Reshape(Function):
    kind = "reshape"

    def forward(self, a, shape):
        self.in_shape = a.shape
        try:
            return a.reshape(shape)
        except ValueError:
            raise DimensionError(f"reshape: cannot view {a.shape} as {shape}") from None

    def backward(self, g):
        return (g.reshape(self.in_shape),)


class Transpose(Function):
    kind = "transpose"

    def forward(self, a, axes=None):
        axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
        if sorted(axes) != list(range(a.ndim)):
            raise DimensionError(f"transpose: {axes} is not a permutation of {a.ndim} axes")
        self.inverse = tuple(np.argsort(axes))
        return np.ascontiguousarray(a.transpose(axes))

    def backward(self, g):
        return (np.ascontiguousarray(g.transpose(self.inverse)),)


class Concat(Function):
    kind = "concat"

    def forward(self, *arrays, axis=0):
        self.axis = axis
        self.sizes = [a.shape[axis] for a in arrays]
        try:
            return np.concatenate(arrays, axis=axis)
        except ValueError:
            raise DimensionError(f"concat: shapes {[a.shape for a in arrays]} along axis {axis}") from None

    def backward(self, g):
        cuts = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(g, cuts, axis=self.axis))


class Sum(Function):
    kind = "sum"

    def forward(self, a):
        self.shape = a.shape
        return np.asarray(a.sum())

    def backward(self, g):
        return (np.broadcast_to(g, self.shape).copy(),)


class Mean(Function):
    kind = "mean"

    def forward(self, a):
        self.shape = a.shape
        return np.asarray(a.mean())

    def backward(self, g):
        return (np.full(self.shape, np.asarray(g).item() / int(np.prod(self.shape))),)


class GlobalAvgPool(Function):
    kind = "global_avg_pool"

    def forward(self, x):
        if x.ndim != 3:
            raise DimensionError(f"global_avg_pool expects [C,H,W], got {x.shape}")
        self.shape = x.shape
        return x.mean(axis=(1, 2))

    def backward(self, g):
        _, h, w = self.shape
        return (np.broadcast_to(g[:, None, None] / (h * w), self.shape).copy(),)


# ---------------------------------------------------------------- spatial ops


class Conv2d(Function):
    """Cross-correlation of ``[C_in,H,W]`` with ``[C_out,C_in,k,k]`` weights.

    ``algorithm="gemm"`` lowers to im2col + BLAS (1x1 kernels skip the unfold);
    ``algorithm="direct"`` accumulates taps without building columns.
    """

    kind = "conv2d"

    def forward(self, x, weight, bias, stride=1, padding=0, algorithm="gemm"):
        if x.ndim != 3 or weight.ndim != 4:
            raise DimensionError(f"conv2d expects x [C,H,W] and weight [Co,Ci,k,k], got {x.shape}, {weight.shape}")
        c_out, c_in, k, k2 = weight.shape
        if k != k2:
            raise DimensionError("conv2d: only square kernels are supported")
        if x.shape[0] != c_in:
            raise DimensionError(f"conv2d: input has {x.shape[0]} channels, weight expects {c_in}")
        if bias.shape != (c_out,):
            raise DimensionError(f"conv2d: bias must be ({c_out},), got {bias.shape}")
        if stride < 1 or padding < 0:
            raise GeometryError("conv2d: stride must be >= 1 and padding >= 0")
        _, h, w = x.shape
        ho = (h + 2 * padding - k) // stride + 1
        wo = (w + 2 * padding - k) // stride + 1
        if h + 2 * padding < k or w + 2 * padding < k or ho < 1 or wo < 1:
            raise GeometryError(f"conv2d: empty output for input {h}x{w}, k={k}, stride={stride}, pad={padding}")
        self.x_shape, self.weight = x.shape, weight
        self.k, self.stride, self.padding = k, stride, padding
        self.out_hw = (ho, wo)
        wmat = weight.reshape(c_out, -1)
        if algorithm == "direct":
            self.x = x
            self.cols = None
            return kernels.conv2d_direct(x, weight, bias, stride, padding)
        if algorithm != "gemm":
            raise ValueError(f"unknown conv2d algorithm {algorithm!r}")
        self.cols = self._columns(x)
        out = wmat @ self.cols
        out += bias[:, None]
        return out.reshape(c_out, ho, wo)

    def _columns(self, x):
        k, s, p = self.k, self.stride, self.padding
        if k == 1 and p == 0:
            return np.ascontiguousarray(x[:, ::s, ::s]).reshape(x.shape[0], -1)
        return kernels.im2col(x, k, s, p)

    def backward(self, g):
        c_out = self.weight.shape[0]
        cols = self.cols if self.cols is not None else self._columns(self.x)
        g2 = g.reshape(c_out, -1)
        dw = (g2 @ cols.T).reshape(self.weight.shape)
        db = g2.sum(axis=1)
        dcols = self.weight.reshape(c_out, -1).T @ g2
        k, s, p = self.k, self.stride, self.padding
        if k == 1 and p == 0:
            c, h, w = self.x_shape
            dx = np.zeros(self.x_shape)
            dx[:, ::s, ::s] = dcols.reshape(c, *self.out_hw)
        else:
            dx = kernels.col2im(dcols, self.x_shape, k, s, p)
        return dx, dw, db


class ChannelMax(Function):
    """Per-pixel max over channels; ties route the gradient to the first channel."""

    kind = "channel_max"

    def forward(self, x):
        _check_chw(x, self.kind)
        self.c = x.shape[0]
        out, self.idx = kernels.channel_max_forward(x)
        _note_branch(self.idx)
        return out

    def backward(self, g):
        return (kernels.channel_max_backward(g, self.idx, self.c),)


class ChannelAvg(Function):
    kind = "channel_avg"

    def forward(self, x):
        _check_chw(x, self.kind)
        self.shape = x.shape
        return x.mean(axis=0, keepdims=True)

    def backward(self, g):
        return (np.broadcast_to(g / self.shape[0], self.shape).copy(),)


class MaxPool2(Function):
    """2x2 / stride-2 max pool; ties go to the first element in row-major window order."""

    kind = "spatial_maxpool2"

    def forward(self, x):
        _check_chw(x, self.kind)
        _, h, w = x.shape
        if h % 2 or w % 2:
            raise GeometryError(f"spatial_maxpool2 needs even H and W, got {h}x{w}")
        self.hw = (h, w)
        out, self.idx = kernels.maxpool2_forward(x)
        _note_branch(self.idx)
        return out

    def backward(self, g):
        return (kernels.maxpool2_backward(g, self.idx, *self.hw),)


def _check_chw(x, kind):
    if x.ndim != 3 or x.shape[0] < 1:
        raise DimensionError(f"{kind} expects [C,H,W] with C >= 1, got {x.shape}")


# ------------------------------------------------------------ functional API


def add(a, b):
    return Add.apply(as_tensor(a), as_tensor(b))


def sub(a, b):
    return Sub.apply(as_tensor(a), as_tensor(b))


def mul(a, b):
    return Mul.apply(as_tensor(a), as_tensor(b))


def neg(a):
    return Neg.apply(a)


def add_scalar(a, value: float):
    return AddScalar.apply(a, value=float(value))


def mul_scalar(a, value: float):
    return MulScalar.apply(a, value=float(value))


def broadcast_mul(x: Tensor, m: Tensor) -> Tensor:
    """Scale every channel of ``x[C,H,W]`` by the spatial map ``m[1,H,W]``."""
    if x.ndim != 3 or m.ndim != 3 or m.shape[0] != 1 or m.shape[1:] != x.shape[1:]:
        raise DimensionError(f"broadcast_mul expects [C,H,W] and [1,H,W], got {x.shape}, {m.shape}")
    return Mul.apply(x, m)


def sigmoid(a):
    return Sigmoid.apply(a)


def relu(a):
    return ReLU.apply(a)


def gelu(a):
    return GELU.apply(a)


def matmul(a, b):
    return MatMul.apply(a, b)


def linear(x, weight, bias):
    return Linear.apply(x, weight, bias)


def layer_norm(x, gamma, beta, axis: int = -1, eps: float = 1e-5):
    return LayerNorm.apply(x, gamma, beta, axis=axis, eps=eps)


def map_layer_norm(x, gamma, beta, eps: float = 1e-5):
    return MapLayerNorm.apply(x, gamma, beta, eps=eps)


def rms_normalize(x, eps: float = 1e-12):
    return RMSNormalize.apply(x, eps=eps)


def softmax(x):
    return Softmax.apply(x)


def cross_entropy(logits, label: int):
    return CrossEntropy.apply(logits, label=label)


def reshape(a, shape: Sequence[int]):
    return Reshape.apply(a, shape=tuple(shape))


def transpose(a, axes=None):
    return Transpose.apply(a, axes=axes)


def concat(tensors: Sequence[Tensor], axis: int = 0):
    return Concat.apply(*tensors, axis=axis)


def tsum(a):
    return Sum.apply(a)


def mean(a):
    return Mean.apply(a)


def global_avg_pool(x):
    return GlobalAvgPool.apply(x)


def conv2d(x, weight, bias, stride: int = 1, padding: int = 0, algorithm: str = "gemm"):
    return Conv2d.apply(x, weight, bias, stride=stride, padding=padding, algorithm=algorithm)


def channel_max(x):
    return ChannelMax.apply(x)


def channel_avg(x):
    return ChannelAvg.apply(x)


def spatial_maxpool2(x):
    return MaxPool2.apply(x)
