"""Main branch: four continuous-attention (CA) blocks over the apex-minus-onset image.

Each block computes

    F_conv = relu(norm(conv1_main(conv3(F)) + conv1_skip(F)))
    attn   = sigmoid(attn_conv([chan_max(F_conv); chan_avg(F_conv)])) * maxpool2(attn_prev)
    out    = F_conv * attn            (the map scales every channel)

``conv3`` and ``conv1_skip`` carry the stride-2 downsampling. The three convs
have no bias and ``norm`` is a layer norm over the whole ``[C,H,W]`` map with a
per-channel affine (no batch statistics), so regions where the frames agree
stay at a common level instead of being blown up pixel by pixel. The
first block has no previous map, so its attention is the sigmoid term alone.
In ``independent`` mode every block drops the prior (CBAM-style spatial
attention with a 1x1 kernel).
"""

from __future__ import annotations

from . import tensor as T
from .errors import ConfigError, DimensionError, GeometryError
from .nn import Conv2d, MapLayerNorm, Module, ModuleList
from .rng import Rng

IMAGE_SIZE = 224
MODES = ("continuous", "independent")


def channel_schedule(width: int = 64) -> list:
    """``[3, w, 2w, 4w, 8w]``; the full-size network uses ``w = 64``."""
    return [3, width, 2 * width, 4 * width, 8 * width]


class CAModule(Module):
    def __init__(self, rng: Rng, mode: str = "continuous"):
        super().__init__()
        if mode not in MODES:
            raise ConfigError(f"attention mode must be one of {MODES}, got {mode!r}")
        self.mode = mode
        self.attn_conv = Conv2d(rng, 2, 1, 1)

    def sigmoid_term(self, f_conv: T.Tensor) -> T.Tensor:
        pooled = T.concat([T.channel_max(f_conv), T.channel_avg(f_conv)], axis=0)
        return T.sigmoid(self.attn_conv(pooled))

    def forward(self, f_conv: T.Tensor, prev_attn: T.Tensor | None = None) -> T.Tensor:
        attn = self.sigmoid_term(f_conv)
        if prev_attn is None or self.mode == "independent":
            return attn
        _, h, w = f_conv.shape
        if prev_attn.shape != (1, 2 * h, 2 * w):
            raise GeometryError(f"previous attention must be (1, {2 * h}, {2 * w}), got {prev_attn.shape}")
        return T.mul(attn, T.spatial_maxpool2(prev_attn))


class ResidualBlock(Module):
    """The convolutional part of a CA block; on its own it is the baseline block."""

    def __init__(self, rng: Rng, c_in: int, c_out: int):
        super().__init__()
        self.c_in, self.c_out = c_in, c_out
        self.conv3 = Conv2d(rng, c_in, c_out, 3, stride=2, padding=1, bias=False)
        self.conv1_main = Conv2d(rng, c_out, c_out, 1, bias=False)
        self.conv1_skip = Conv2d(rng, c_in, c_out, 1, stride=2, bias=False)
        self.norm = MapLayerNorm(c_out)

    def _check(self, x: T.Tensor) -> None:
        if x.ndim != 3 or x.shape[0] != self.c_in or x.shape[1] % 2 or x.shape[2] % 2:
            raise DimensionError(f"block expects [{self.c_in}, 2H, 2W], got {x.shape}")

    def conv_features(self, x: T.Tensor) -> T.Tensor:
        self._check(x)
        main = self.conv1_main(self.conv3(x))
        return T.relu(self.norm(T.add(main, self.conv1_skip(x))))

    def forward(self, x, prev_attn=None):
        return self.conv_features(x), None


class CABlock(ResidualBlock):
    def __init__(self, rng: Rng, c_in: int, c_out: int, mode: str = "continuous"):
        super().__init__(rng, c_in, c_out)
        self.ca = CAModule(rng, mode)
        # test hook: when set, replaces the computed attention map
        self.attn_override: T.Tensor | None = None

    def forward(self, x: T.Tensor, prev_attn: T.Tensor | None = None):
        f_conv = self.conv_features(x)
        attn = self.attn_override if self.attn_override is not None else self.ca(f_conv, prev_attn)
        return T.broadcast_mul(f_conv, attn), attn


class MainBranch(Module):
    """Maps ``diff[3,224,224]`` to ``F_M[8w,14,14]`` plus one attention map per block."""

    def __init__(self, rng: Rng, width: int = 64, use_ca: bool = True, mode: str = "continuous"):
        super().__init__()
        if mode not in MODES:
            raise ConfigError(f"attention mode must be one of {MODES}, got {mode!r}")
        self.use_ca, self.mode = use_ca, mode
        ch = channel_schedule(width)
        self.out_channels = ch[-1]
        self.blocks = ModuleList(
            CABlock(rng.child("block", i), ch[i], ch[i + 1], mode) if use_ca
            else ResidualBlock(rng.child("block", i), ch[i], ch[i + 1])
            for i in range(4)
        )

    def forward(self, diff: T.Tensor):
        if diff.shape != (3, IMAGE_SIZE, IMAGE_SIZE):
            raise DimensionError(f"main branch expects (3, {IMAGE_SIZE}, {IMAGE_SIZE}), got {diff.shape}")
        x, prev, maps = diff, None, []
        for block in self.blocks:
            x, attn = block(x, prev if self.mode == "continuous" else None)
            if attn is not None:
                maps.append(attn)
            prev = attn
        return x, maps
