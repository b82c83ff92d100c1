"""Procedural onset/apex face pairs for desk-scale experiments.

Faces are flat-shaded drawings (head ellipse, eyes, brows, nostrils, mouth).
The subject fixes skin tone, background and facial geometry; the class fixes
which feature moves between onset and apex:

=========== ===============================================
class       apex deformation
=========== ===============================================
happiness   mouth corners pulled up
surprise    both brows raised
disgust     nostrils raised and spread
repression  lips pressed narrower and thinner
others      left brow lowered
=========== ===============================================

Each sample has four onset and four apex candidates rendered at small and
near-full deformation intensity. ``region`` is the bounding box (plus a
2-pixel margin) of every pixel where any candidate differs from the
canonical onset, so canonical onset and apex differ only inside it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, ImageStore, SamplePair
from .rng import Rng

SIZE = 224
CLASS_NAMES = ("happiness", "surprise", "disgust", "repression", "others")
ONSET_LEVELS = (0.0, 0.05, 0.1, 0.15)
APEX_LEVELS = (1.0, 0.95, 0.9, 0.85)
MARGIN = 2


@dataclass(frozen=True)
class SynthSpec:
    subjects: int
    classes: int
    samples_per: int


@dataclass(frozen=True)
class Face:
    background: tuple
    skin: tuple
    lip: tuple
    cy: float
    cx: float
    ry: float
    rx: float
    eye_y: float
    eye_dx: float
    eye_ry: float
    eye_rx: float
    brow_gap: float
    brow_half: float
    nose_y: float
    mouth_y: float
    mouth_hw: float
    lip_thick: float


def random_face(rng: Rng) -> Face:
    # geometry jitter stays below the deformation scale so a class looks alike across subjects
    u = rng.uniform
    tone = u(0, 1)
    skin = (1 - tone) * np.array([236, 204, 176]) + tone * np.array([118, 80, 56])
    bg = u(30, 90) + np.array([u(-10, 10), u(-10, 10), u(-10, 10)])
    cy, cx = SIZE / 2 + 4 + u(-3, 3), SIZE / 2 + u(-3, 3)
    return Face(
        background=tuple(bg), skin=tuple(skin), lip=tuple(0.55 * skin + np.array([80, 10, 15])),
        cy=cy, cx=cx, ry=u(92, 100), rx=u(72, 80),
        eye_y=cy - u(24, 28), eye_dx=u(28, 32), eye_ry=u(5, 7), eye_rx=u(9, 12),
        brow_gap=u(14, 16), brow_half=u(14, 17), nose_y=cy + u(10, 13),
        mouth_y=cy + u(42, 47), mouth_hw=u(20, 24), lip_thick=u(5, 6.5),
    )


def _deformation(label: int, level: float) -> dict:
    d = dict(corner_lift=0.0, brow_l=0.0, brow_r=0.0, nostril_lift=0.0, nostril_spread=0.0,
             mouth_narrow=0.0, lip_thin=0.0)
    if label == 0:
        d["corner_lift"] = 12.0 * level
    elif label == 1:
        d["brow_l"] = d["brow_r"] = 9.0 * level
    elif label == 2:
        d["nostril_lift"], d["nostril_spread"] = 6.0 * level, 3.0 * level
    elif label == 3:
        d["mouth_narrow"], d["lip_thin"] = 8.0 * level, 2.5 * level
    elif label == 4:
        d["brow_l"] = -7.0 * level
    return d


def render(face: Face, deform: dict) -> np.ndarray:
    """Draw one ``SIZE x SIZE x 3`` uint8 frame."""
    y, x = np.mgrid[0:SIZE, 0:SIZE].astype(np.float64)
    img = np.empty((SIZE, SIZE, 3))
    img[...] = face.background
    img[((y - face.cy) / face.ry) ** 2 + ((x - face.cx) / face.rx) ** 2 <= 1] = face.skin
    dark = (25, 20, 20)
    for side in (-1, 1):
        ex = face.cx + side * face.eye_dx
        img[((y - face.eye_y) / face.eye_ry) ** 2 + ((x - ex) / face.eye_rx) ** 2 <= 1] = (240, 240, 235)
        img[(y - face.eye_y) ** 2 + (x - ex) ** 2 <= (0.8 * face.eye_ry) ** 2] = dark
        # brow: a 6px-thick bar, outer end slightly lower
        lift = deform["brow_l"] if side < 0 else deform["brow_r"]
        by = face.eye_y - face.brow_gap - lift
        t = (x - ex) * side / face.brow_half
        on = (np.abs(t) <= 1) & (np.abs(y - (by + 2.0 * t)) <= 3.0)
        img[on] = dark
        nx = face.cx + side * (6.0 + deform["nostril_spread"])
        ny = face.nose_y - deform["nostril_lift"]
        img[((y - ny) / 3.0) ** 2 + ((x - nx) / 4.5) ** 2 <= 1] = dark
    hw = face.mouth_hw - deform["mouth_narrow"]
    u = (x - face.cx) / hw
    curve = face.mouth_y - deform["corner_lift"] * u**2
    half = (face.lip_thick - deform["lip_thin"]) / 2
    img[(np.abs(u) <= 1) & (np.abs(y - curve) <= half)] = face.lip
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def _bbox(mask: np.ndarray) -> tuple:
    ys, xs = np.nonzero(mask)
    return (max(int(ys.min()) - MARGIN, 0), max(int(xs.min()) - MARGIN, 0),
            min(int(ys.max()) + 1 + MARGIN, SIZE), min(int(xs.max()) + 1 + MARGIN, SIZE))


def synth_dataset(spec: SynthSpec, rng: Rng) -> Dataset:
    """``subjects x classes x samples_per`` labelled pairs; same ``rng`` seed gives identical bytes."""
    if not 1 <= spec.classes <= len(CLASS_NAMES):
        raise ValueError(f"classes must be in 1..{len(CLASS_NAMES)}")
    store = ImageStore()
    samples = []
    for s in range(spec.subjects):
        subject = f"s{s + 1:02d}"
        face = random_face(rng.child("subject", s))
        for label in range(spec.classes):
            for j in range(spec.samples_per):
                strength = float(rng.child("sample", s, label, j).uniform(0.85, 1.15))
                base = f"{subject}/{CLASS_NAMES[label]}_{j:02d}"
                frames = {}
                for kind, levels in (("onset", ONSET_LEVELS), ("apex", APEX_LEVELS)):
                    for i, level in enumerate(levels):
                        frames[f"{base}_{kind}{i}.ppm"] = render(face, _deformation(label, level * strength))
                refs = list(frames)
                onset_refs, apex_refs = refs[:4], refs[4:]
                canon = frames[onset_refs[0]]
                moved = np.zeros((SIZE, SIZE), dtype=bool)
                for ref in refs[1:]:
                    moved |= np.any(frames[ref] != canon, axis=2)
                store.images.update(frames)
                samples.append(SamplePair(subject, label, onset_refs, apex_refs, onset_refs[0],
                                          apex_refs[0], _bbox(moved), store))
    return Dataset(samples, list(CLASS_NAMES[: spec.classes]))
