"""Attention-map export: 8-bit PGM maps and PPM overlays on the apex frame.

Each map is min-max normalized to 0..255 (rounded to nearest). A constant map
has no range and is written as all zeros; the caller gets a flag so it can
warn. The overlay upsamples the map (nearest neighbour) to 224x224, puts it in
the red channel and blends it 50/50 with the eval-mode apex frame.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import tensor as T
from .ca_branch import IMAGE_SIZE
from .data import SamplePair, augment, pnm_bytes, region_in_crop
from .model import MMNet

ALPHA = 0.5


def normalize_map(a: np.ndarray) -> tuple:
    """Return ``(uint8 map, degenerate)``; degenerate means max == min."""
    a = np.asarray(a, dtype=np.float64)
    lo, hi = a.min(), a.max()
    if hi == lo:
        return np.zeros(a.shape, dtype=np.uint8), True
    return np.rint((a - lo) / (hi - lo) * 255.0).astype(np.uint8), False


def upsample_nearest(a: np.ndarray, size: int = IMAGE_SIZE) -> np.ndarray:
    h, w = a.shape
    if size % h or size % w:
        raise ValueError(f"{h}x{w} does not divide {size}")
    return np.repeat(np.repeat(a, size // h, axis=0), size // w, axis=1)


def overlay(apex: np.ndarray, map_u8: np.ndarray, alpha: float = ALPHA) -> np.ndarray:
    """Blend the red-channel heat map over a ``[3,224,224]`` apex frame -> ``HxWx3`` uint8."""
    heat = np.zeros((IMAGE_SIZE, IMAGE_SIZE, 3))
    heat[..., 0] = upsample_nearest(map_u8) / 255.0
    base = np.asarray(apex).transpose(1, 2, 0)
    return np.clip(np.rint(((1 - alpha) * base + alpha * heat) * 255.0), 0, 255).astype(np.uint8)


def attention_maps(model: MMNet, pair: SamplePair) -> tuple:
    """Eval-mode forward; returns ``(list of [H,W] arrays, apex frame [3,224,224])``."""
    onset, apex = augment(pair, None, training=False)
    with T.no_grad():
        pred = model.forward(onset, apex)
    return [m.data[0] for m in pred.attn_maps], apex.data


def export_attention(model: MMNet, pair: SamplePair, out_dir, digest: str = "") -> tuple:
    """Write ``attn_block{i}.pgm`` and ``overlay_block{i}.ppm`` for i = 1..4.

    Returns ``(paths, degenerate_blocks)``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    maps, apex = attention_maps(model, pair)
    if not maps:
        raise ValueError("model has no attention maps (use_ca is off)")
    comment = f"mmnet config_digest={digest}" if digest else None
    paths, degenerate = [], []
    for i, m in enumerate(maps, 1):
        u8, flat = normalize_map(m)
        if flat:
            degenerate.append(i)
        for name, img in ((f"attn_block{i}.pgm", u8), (f"overlay_block{i}.ppm", overlay(apex, u8))):
            path = out_dir / name
            path.write_bytes(pnm_bytes(img, comment))
            paths.append(path)
    return paths, degenerate


def top_decile(a: np.ndarray) -> np.ndarray:
    """Boolean mask of the ``ceil(n/10)`` largest pixels; ties resolve to the earlier row-major pixel."""
    flat = np.asarray(a).reshape(-1)
    k = int(np.ceil(flat.size / 10))
    order = np.argsort(-flat, kind="stable")[:k]
    mask = np.zeros(flat.size, dtype=bool)
    mask[order] = True
    return mask.reshape(np.shape(a))


def region_mask(region: tuple, source_hw: tuple, grid: int) -> np.ndarray:
    """Cells of a ``grid x grid`` map (over the 224 eval frame) that overlap the frame-space box."""
    y0, x0, y1, x1 = region_in_crop(region, source_hw)
    cell = IMAGE_SIZE / grid
    mask = np.zeros((grid, grid), dtype=bool)
    r0, r1 = int(np.floor(y0 / cell)), int(np.ceil(y1 / cell))
    c0, c1 = int(np.floor(x0 / cell)), int(np.ceil(x1 / cell))
    mask[r0:r1, c0:c1] = True
    return mask


def localization_hit(attn: np.ndarray, region: tuple, source_hw: tuple) -> bool:
    """True when the map's top-decile pixels intersect the deformation box."""
    return bool(np.any(top_decile(attn) & region_mask(region, source_hw, attn.shape[0])))
