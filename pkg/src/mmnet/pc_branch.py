"""Position-calibration subbranch: a shallow self-attention encoder over the onset frame.

The onset frame is box-averaged down to 14x14, each pixel becomes one
3-value token (196 tokens, row-major), tokens are linearly projected to the
main branch's channel width, learnable position embeddings are added, and
``n_layers`` pre-norm encoder layers mix them. The 196 output tokens are
reshaped back into a ``[D,14,14]`` map so they can be added to ``F_M``.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError
from .nn import LayerNorm, Linear, Module, ModuleList, parameter
from .rng import Rng

GRID = 14
TOKENS = GRID * GRID
MLP_RATIO = 4
LAYER_SCALE_INIT = 1e-4


def downscale_onset(onset: np.ndarray, grid: int = GRID) -> np.ndarray:
    """Box-average a ``[3,H,W]`` frame to ``[3,grid,grid]`` (H, W multiples of grid)."""
    c, h, w = onset.shape
    if h % grid or w % grid:
        raise DimensionError(f"frame {h}x{w} is not a multiple of the {grid}x{grid} grid")
    return onset.reshape(c, grid, h // grid, grid, w // grid).mean(axis=(2, 4))


def patchify(image: T.Tensor) -> T.Tensor:
    """``[3,14,14]`` -> ``[196,3]``; token ``row*14 + col`` holds the pixel at (row, col)."""
    if image.shape != (3, GRID, GRID):
        raise DimensionError(f"patchify expects (3, {GRID}, {GRID}), got {image.shape}")
    return T.reshape(T.transpose(image, (1, 2, 0)), (TOKENS, 3))


def unpatchify(tokens: T.Tensor) -> T.Tensor:
    """``[196,D]`` -> ``[D,14,14]``, the inverse layout of :func:`patchify`."""
    if tokens.ndim != 2 or tokens.shape[0] != TOKENS:
        raise DimensionError(f"unpatchify expects ({TOKENS}, D), got {tokens.shape}")
    return T.reshape(T.transpose(tokens, (1, 0)), (tokens.shape[1], GRID, GRID))


class MultiHeadSelfAttention(Module):
    def __init__(self, rng: Rng, dim: int, heads: int):
        super().__init__()
        if heads < 1 or dim % heads:
            raise ConfigError(f"width {dim} is not divisible into {heads} heads")
        self.dim, self.heads = dim, heads
        self.head_dim = dim // heads
        self.query = Linear(rng, dim, dim)
        self.key = Linear(rng, dim, dim)
        self.value = Linear(rng, dim, dim)
        self.out = Linear(rng, dim, dim)
        self.last_attention: np.ndarray | None = None

    def _split(self, x: T.Tensor, n: int, axes: tuple) -> T.Tensor:
        return T.transpose(T.reshape(x, (n, self.heads, self.head_dim)), axes)

    def forward(self, x: T.Tensor) -> T.Tensor:
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise DimensionError(f"attention expects (N, {self.dim}), got {x.shape}")
        n = x.shape[0]
        q = self._split(self.query(x), n, (1, 0, 2))   # [H,N,d]
        kt = self._split(self.key(x), n, (1, 2, 0))    # [H,d,N]
        v = self._split(self.value(x), n, (1, 0, 2))   # [H,N,d]
        weights = T.softmax(T.mul_scalar(T.matmul(q, kt), 1.0 / np.sqrt(self.head_dim)))
        self.last_attention = weights.data
        mixed = T.transpose(T.matmul(weights, v), (1, 0, 2))
        return self.out(T.reshape(mixed, (n, self.dim)))


class EncoderLayer(Module):
    """Pre-norm transformer layer: ``x + s1 * MSA(LN(x))`` then ``x + s2 * MLP(LN(x))``.

    ``s1``/``s2`` are learnable per-channel residual scales (layer scale).
    """

    def __init__(self, rng: Rng, dim: int, heads: int, mlp_ratio: int = MLP_RATIO,
                 scale_init: float | None = None):
        super().__init__()
        scale_init = LAYER_SCALE_INIT if scale_init is None else scale_init
        self.norm1 = LayerNorm(dim)
        self.msa = MultiHeadSelfAttention(rng, dim, heads)
        self.scale1 = parameter(np.full(dim, scale_init))
        self.norm2 = LayerNorm(dim)
        self.fc1 = Linear(rng, dim, mlp_ratio * dim)
        self.fc2 = Linear(rng, mlp_ratio * dim, dim)
        self.scale2 = parameter(np.full(dim, scale_init))

    def forward(self, x: T.Tensor) -> T.Tensor:
        x = T.add(x, T.mul(self.msa(self.norm1(x)), self.scale1))
        return T.add(x, T.mul(self.fc2(T.gelu(self.fc1(self.norm2(x)))), self.scale2))


class PatchEmbedder(Module):
    def __init__(self, rng: Rng, dim: int):
        super().__init__()
        self.proj = Linear(rng, 3, dim)
        self.pos_embed = parameter(rng.normal(size=(TOKENS, dim)) * 0.02)

    def forward(self, image: T.Tensor) -> T.Tensor:
        return T.add(self.proj(patchify(image)), self.pos_embed)


class PCModule(Module):
    def __init__(self, rng: Rng, dim: int = 512, n_layers: int = 2, n_heads: int = 4):
        super().__init__()
        if n_layers < 1:
            raise ConfigError(f"need at least one encoder layer, got {n_layers}")
        if n_heads < 1 or dim % n_heads:
            raise ConfigError(f"width {dim} is not divisible into {n_heads} heads")
        self.dim = dim
        self.embedder = PatchEmbedder(rng.child("embed"), dim)
        self.layers = ModuleList(EncoderLayer(rng.child("layer", i), dim, n_heads) for i in range(n_layers))

    def forward(self, onset_small: T.Tensor) -> T.Tensor:
        x = self.embedder(onset_small)
        for layer in self.layers:
            x = layer(x)
        return unpatchify(x)

    def attention_maps(self) -> list:
        return [layer.msa.last_attention for layer in self.layers]
