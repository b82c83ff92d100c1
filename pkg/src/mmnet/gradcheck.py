"""Central finite-difference checks for every differentiable primitive.

The error measure for one gradient entry is

    |analytic - numeric| / max(|analytic|, |numeric|, floor)

with ``floor = 1e-6`` so that entries whose true gradient is exactly zero
(masked ReLU inputs, unselected pooling inputs) are judged by absolute error.
A check reports the worst entry over all inputs and instances.

Inputs for piecewise-linear ops (relu, max pools) are drawn away from their
kinks so that a step of ``eps`` never crosses one. The whole-model check
cannot place inputs that way (tens of thousands of relus sit between a
parameter and the loss), so it records every branch choice during the two
perturbed passes and redraws any entry whose stencil changes one; there the
function is not differentiable on the stencil and a difference quotient says
nothing about the gradient. The number of redraws is reported.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tensor as T
from .rng import Rng

EPS = 1e-4
TOLERANCE = 1e-4
FLOOR = 1e-6


@dataclass
class CheckResult:
    name: str
    worst: float
    instances: int
    seconds: float = 0.0
    tolerance: float = TOLERANCE
    rejected: int = 0

    @property
    def passed(self) -> bool:
        return self.worst < self.tolerance


def rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = FLOOR) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def numerical_grads(fn: Callable, arrays: list, eps: float = EPS) -> list:
    """Central differences of ``fn(list[Tensor]) -> scalar Tensor`` w.r.t. each array."""
    arrays = [np.array(a, dtype=np.float64) for a in arrays]

    def f():
        with T.no_grad():
            return fn([T.Tensor(a) for a in arrays]).item()

    out = []
    for a in arrays:
        g = np.zeros_like(a)
        flat, gflat = a.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = f()
            flat[i] = orig - eps
            lo = f()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * eps)
        out.append(g)
    return out


def analytic_grads(fn: Callable, arrays: list) -> list:
    ts = [T.Tensor(a, requires_grad=True) for a in arrays]
    loss = fn(ts)
    T.backward(loss)
    return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in ts]


def check_function(fn: Callable, arrays: list, eps: float = EPS) -> float:
    analytic = analytic_grads(fn, arrays)
    numeric = numerical_grads(fn, arrays, eps)
    return max(rel_error(a, n) for a, n in zip(analytic, numeric))


def _projected(op: Callable, weights: np.ndarray) -> Callable:
    """Reduce an op output to a scalar with fixed random weights."""
    w = T.Tensor(weights)
    return lambda ts: T.tsum(T.mul(op(ts), w))


def _away_from_zero(rng: Rng, shape, margin=0.05):
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-300) * (margin + np.abs(x)), x)


def _distinct(rng: Rng, shape, gap=0.01):
    """Values with pairwise separation >= gap (so max/argmax is stable under eps)."""
    n = int(np.prod(shape))
    vals = (rng.permutation(n) - n / 2) * gap + rng.uniform(0, gap / 4)
    return vals.reshape(shape)


def _case_builders():
    """name -> builder(rng) -> (op over list[Tensor], list of input arrays)."""

    def small(rng):
        return tuple(int(v) for v in rng.integers(1, 5, size=3))

    def binary(opf):
        def build(rng):
            s = small(rng)
            return (lambda ts: opf(ts[0], ts[1])), [rng.normal(size=s), rng.normal(size=s)]

        return build

    def bcast(rng):
        c, h, w = small(rng)
        return (lambda ts: T.broadcast_mul(ts[0], ts[1])), [rng.normal(size=(c, h, w)), rng.normal(size=(1, h, w))]

    def unary(opf, gen=None):
        def build(rng):
            s = small(rng)
            x = gen(rng, s) if gen else rng.normal(size=s)
            return (lambda ts: opf(ts[0])), [x]

        return build

    def matmul2(rng):
        m, k, n = (int(v) for v in rng.integers(1, 6, size=3))
        return (lambda ts: T.matmul(ts[0], ts[1])), [rng.normal(size=(m, k)), rng.normal(size=(k, n))]

    def matmul3(rng):
        b, m, k, n = (int(v) for v in rng.integers(1, 5, size=4))
        return (lambda ts: T.matmul(ts[0], ts[1])), [rng.normal(size=(b, m, k)), rng.normal(size=(b, k, n))]

    def linear(rng):
        n, di, do = (int(v) for v in rng.integers(1, 6, size=3))
        return (lambda ts: T.linear(*ts)), [rng.normal(size=(n, di)), rng.normal(size=(do, di)), rng.normal(size=do)]

    # widths start at 3: over two features the normalized output is ~constant and the
    # true input gradient (~1e-6) drowns in finite-difference truncation error
    def layer_norm_last(rng):
        n, d = int(rng.integers(1, 5)), int(rng.integers(3, 7))
        return (lambda ts: T.layer_norm(*ts)), [rng.normal(size=(n, d)), rng.normal(size=d), rng.normal(size=d)]

    def layer_norm_chan(rng):
        c, h, w = int(rng.integers(3, 6)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
        return (lambda ts: T.layer_norm(*ts, axis=0)), [rng.normal(size=(c, h, w)), rng.normal(size=c), rng.normal(size=c)]

    def map_norm(rng):
        c, h, w = int(rng.integers(1, 4)), int(rng.integers(2, 4)), int(rng.integers(2, 4))
        return (lambda ts: T.map_layer_norm(*ts)), [rng.normal(size=(c, h, w)), rng.normal(size=c), rng.normal(size=c)]

    def rms(rng):
        # at least 4 entries, for the same reason as the layer-norm widths
        c, h, w = int(rng.integers(1, 4)), int(rng.integers(2, 4)), int(rng.integers(2, 4))
        return (lambda ts: T.rms_normalize(ts[0])), [rng.normal(size=(c, h, w))]

    def softmax(rng):
        n, d = int(rng.integers(1, 5)), int(rng.integers(2, 7))
        return (lambda ts: T.softmax(ts[0])), [rng.normal(size=(n, d))]

    def reshape(rng):
        a, b = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        return (lambda ts: T.reshape(ts[0], (b, a))), [rng.normal(size=(a, b))]

    def transpose(rng):
        s = small(rng)
        axes = tuple(int(v) for v in rng.permutation(3))
        return (lambda ts: T.transpose(ts[0], axes)), [rng.normal(size=s)]

    def gap(rng):
        return (lambda ts: T.global_avg_pool(ts[0])), [rng.normal(size=small(rng))]

    def concat(rng):
        c1, c2, h, w = (int(v) for v in rng.integers(1, 4, size=4))
        return (lambda ts: T.concat(ts, axis=0)), [rng.normal(size=(c1, h, w)), rng.normal(size=(c2, h, w))]

    def conv(rng):
        k = int(rng.choice([1, 3]))
        stride = int(rng.integers(1, 3))
        pad = int(rng.integers(0, 2)) if k == 3 else 0
        ci, co = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        h, w = int(rng.integers(k, 7)), int(rng.integers(k, 7))
        fn = lambda ts: T.conv2d(ts[0], ts[1], ts[2], stride, pad)  # noqa: E731
        return fn, [rng.normal(size=(ci, h, w)), rng.normal(size=(co, ci, k, k)), rng.normal(size=co)]

    def pool(rng):
        c, h, w = int(rng.integers(1, 4)), 2 * int(rng.integers(1, 4)), 2 * int(rng.integers(1, 4))
        return (lambda ts: T.spatial_maxpool2(ts[0])), [_distinct(rng, (c, h, w))]

    def cmax(rng):
        return (lambda ts: T.channel_max(ts[0])), [_distinct(rng, small(rng))]

    def xent(rng):
        k = int(rng.integers(2, 7))
        label = int(rng.integers(0, k))
        return (lambda ts: T.cross_entropy(ts[0], label)), [rng.normal(size=k) * 2]

    def composite(rng):
        # bias-free conv -> map layer-norm -> relu -> channel pools -> 1x1 conv -> sigmoid -> scale
        c, h = int(rng.integers(3, 5)), 2 * int(rng.integers(1, 3))

        def fn(ts):
            x, w3, g, b, w1, b1 = ts
            f = T.conv2d(x, w3, T.Tensor(np.zeros(c)), 1, 1)
            f = T.relu(T.map_layer_norm(f, g, b))
            a = T.sigmoid(T.conv2d(T.concat([T.channel_max(f), T.channel_avg(f)]), w1, b1))
            out = T.broadcast_mul(f, a)
            return T.spatial_maxpool2(out)

        arrays = [rng.normal(size=(c, h, h)), rng.normal(size=(c, c, 3, 3)), rng.normal(size=c),
                  rng.normal(size=c), rng.normal(size=(1, 2, 1, 1)), rng.normal(size=1)]
        return fn, arrays

    return {
        "add": binary(T.add),
        "sub": binary(T.sub),
        "mul": binary(T.mul),
        "broadcast_mul": bcast,
        "neg": unary(T.neg),
        "add_scalar": unary(lambda t: T.add_scalar(t, 0.7)),
        "mul_scalar": unary(lambda t: T.mul_scalar(t, -1.3)),
        "sigmoid": unary(T.sigmoid),
        "relu": unary(T.relu, _away_from_zero),
        "gelu": unary(T.gelu),
        "matmul": matmul2,
        "matmul_batched": matmul3,
        "linear": linear,
        "layer_norm": layer_norm_last,
        "layer_norm_channels": layer_norm_chan,
        "map_layer_norm": map_norm,
        "rms_normalize": rms,
        "softmax": softmax,
        "reshape": reshape,
        "transpose": transpose,
        "global_avg_pool": gap,
        "concat": concat,
        "sum": unary(T.tsum),
        "mean": unary(T.mean),
        "conv2d": conv,
        "channel_max": cmax,
        "channel_avg": unary(T.channel_avg),
        "spatial_maxpool2": pool,
        "cross_entropy": xent,
        "composite": composite,
    }


OP_NAMES = tuple(_case_builders())


def check_op(name: str, instances: int = 20, seed: int = 0, eps: float = EPS) -> CheckResult:
    builder = _case_builders()[name]
    rng = Rng(seed, ("gradcheck", name))
    worst = 0.0
    start = time.perf_counter()
    for i in range(instances):
        r = rng.child(i)
        op, arrays = builder(r)
        with T.no_grad():
            out_shape = op([T.Tensor(a) for a in arrays]).shape
        scalar = out_shape == () or name in ("cross_entropy", "sum", "mean")
        fn = op if scalar else _projected(op, r.normal(size=out_shape))
        worst = max(worst, check_function(fn, arrays, eps))
    return CheckResult(name, worst, instances, time.perf_counter() - start)


def run_op_suite(instances: int = 20, seed: int = 0, names=None) -> list:
    return [check_op(n, instances, seed) for n in (names or OP_NAMES)]


def check_model_loss(model, onset: np.ndarray, apex: np.ndarray, label: int,
                     n_entries: int = 20, seed: int = 0, eps: float = EPS,
                     max_draws: int | None = None) -> CheckResult:
    """Finite-difference check of the end-to-end loss on random parameter entries.

    Entries whose +/-eps stencil flips a relu mask or a max index are redrawn
    (counted in ``rejected``). Fails if fewer than ``n_entries`` smooth entries
    are found within ``max_draws`` draws.
    """
    start = time.perf_counter()
    rng = Rng(seed, ("gradcheck", "model"))
    named = list(model.named_parameters())
    onset_t, apex_t = T.Tensor(onset), T.Tensor(apex)

    def evaluate():
        with T.no_grad(), T.record_branches() as log:
            value = model.loss(model.forward(onset_t, apex_t), label).item()
        return value, log

    model.zero_grad()
    with T.record_branches() as base:
        loss = model.loss(model.forward(onset_t, apex_t), label)
    T.backward(loss)
    analytic, numeric = [], []
    rejected = 0
    max_draws = max_draws or 50 * n_entries
    for _ in range(max_draws):
        if len(analytic) == n_entries:
            break
        name, p = named[int(rng.integers(0, len(named)))]
        j = int(rng.integers(0, p.size))
        flat = p.data.reshape(-1)
        orig = flat[j]
        flat[j] = orig + eps
        plus, log_plus = evaluate()
        flat[j] = orig - eps
        minus, log_minus = evaluate()
        flat[j] = orig
        if log_plus != base or log_minus != base:
            rejected += 1
            continue
        analytic.append(p.grad.reshape(-1)[j])
        numeric.append((plus - minus) / (2 * eps))
    model.zero_grad()
    worst = rel_error(np.array(analytic), np.array(numeric))
    if len(analytic) < n_entries:
        worst = np.inf
    return CheckResult("model_loss", worst, len(analytic), time.perf_counter() - start, rejected=rejected)
