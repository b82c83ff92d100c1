"""Time every hot kernel on each available backend.

    python3 benchmarks/bench_kernels.py [--repeat N]

Shapes follow the full-width model: the 112x112 / 56x56 stages for the pools
and im2col, 3x3 convolution at block 1 for the direct kernel.
"""

import argparse
import timeit

import numpy as np

from mmnet import _pykernels
from mmnet.kernels import backends


def cases(rng):
    x = rng.standard_normal((64, 112, 112))
    small = rng.standard_normal((16, 56, 56))
    w = rng.standard_normal((16, 16, 3, 3))
    b = rng.standard_normal(16)
    cols = rng.standard_normal((64 * 9, 56 * 56))
    g_pool = rng.standard_normal((64, 56, 56))
    g_cm = rng.standard_normal((1, 112, 112))
    pool_idx = _pykernels.maxpool2_forward(x)[1]
    cm_idx = _pykernels.channel_max_forward(x)[1]
    return {
        "im2col 64x112x112 k3 s2": lambda m: m.im2col(x, 3, 2, 1),
        "col2im 64x112x112 k3 s2": lambda m: m.col2im(cols, x.shape, 3, 2, 1),
        "conv2d_direct 16x56x56 k3": lambda m: m.conv2d_direct(small, w, b, 1, 1),
        "maxpool2 fwd 64x112x112": lambda m: m.maxpool2_forward(x),
        "maxpool2 bwd 64x112x112": lambda m: m.maxpool2_backward(g_pool, pool_idx, 112, 112),
        "channel_max fwd 64x112x112": lambda m: m.channel_max_forward(x),
        "channel_max bwd 64x112x112": lambda m: m.channel_max_backward(g_cm, cm_idx, 64),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    mods = backends()
    names = sorted(mods)
    print(f"{'kernel':30s}" + "".join(f"{n:>12s}" for n in names) + (f"{'speedup':>10s}" if len(names) > 1 else ""))
    for label, fn in cases(np.random.default_rng(0)).items():
        times = {}
        for n in names:
            fn(mods[n])  # warm up
            times[n] = min(timeit.repeat(lambda: fn(mods[n]), number=1, repeat=args.repeat))
        row = f"{label:30s}" + "".join(f"{times[n] * 1e3:10.2f}ms" for n in names)
        if "cython" in times:
            row += f"{times['python'] / times['cython']:9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
