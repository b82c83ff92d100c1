"""Datasets of onset/apex pairs, LOSO folds, augmentation and PNM image IO.

On-disk layout (``root/`` is the dataset directory)::

    root/dataset.txt          index, see below
    root/<subject>/*.ppm      8-bit binary PPM (P6) frames

``dataset.txt``::

    mmnet-dataset 1
    classes happiness surprise
    sample <subject> <label> <onset,cands> <apex,cands> <canon_onset> <canon_apex> <region|->

Candidate lists are comma-separated paths relative to ``root``; ``region`` is
``y0,x0,y1,x1`` (half-open, frame pixel coordinates) marking where the two
frames may differ, or ``-`` when unknown.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .ca_branch import IMAGE_SIZE
from .errors import DimensionError, GeometryError, ProtocolError
from .rng import Rng

RESIZE_TO = 236
INDEX_NAME = "dataset.txt"
INDEX_HEADER = "mmnet-dataset 1"
BRIGHTNESS = (0.8, 1.2)
CONTRAST = (0.8, 1.2)


# ----------------------------------------------------------------- PNM IO


def _read_token(buf: bytes, pos: int) -> tuple:
    while True:
        while buf[pos : pos + 1].isspace():
            pos += 1
        if buf[pos : pos + 1] == b"#":
            while buf[pos : pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        break
    start = pos
    while pos < len(buf) and not buf[pos : pos + 1].isspace():
        pos += 1
    return buf[start:pos], pos


def read_pnm(path) -> np.ndarray:
    """Read an 8-bit P6 (``HxWx3``) or P5 (``HxW``) file."""
    buf = Path(path).read_bytes()
    magic, pos = _read_token(buf, 0)
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"{path}: unsupported PNM magic {magic!r}")
    w, pos = _read_token(buf, pos)
    h, pos = _read_token(buf, pos)
    maxval, pos = _read_token(buf, pos)
    if int(maxval) != 255:
        raise ValueError(f"{path}: only maxval 255 is supported")
    w, h = int(w), int(h)
    channels = 3 if magic == b"P6" else 1
    data = np.frombuffer(buf, dtype=np.uint8, count=w * h * channels, offset=pos + 1)
    return data.reshape((h, w, 3) if channels == 3 else (h, w)).copy()


def pnm_bytes(image: np.ndarray, comment: str | None = None) -> bytes:
    image = np.asarray(image)
    if image.dtype != np.uint8:
        raise ValueError("PNM images must be uint8")
    if image.ndim == 3 and image.shape[2] == 3:
        magic = b"P6"
    elif image.ndim == 2:
        magic = b"P5"
    else:
        raise DimensionError(f"cannot write image of shape {image.shape} as PNM")
    h, w = image.shape[:2]
    head = magic + b"\n"
    if comment:
        head += b"# " + comment.encode("ascii") + b"\n"
    head += f"{w} {h}\n255\n".encode("ascii")
    return head + np.ascontiguousarray(image).tobytes()


def write_pnm(path, image: np.ndarray, comment: str | None = None) -> None:
    Path(path).write_bytes(pnm_bytes(image, comment))


# ------------------------------------------------------------- image ops


def to_chw(image: np.ndarray) -> np.ndarray:
    """uint8 ``HxWx3`` -> float64 ``[3,H,W]`` in ``[0, 1]``."""
    return np.ascontiguousarray(image.transpose(2, 0, 1), dtype=np.float64) / 255.0


def to_uint8(chw: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(chw.transpose(1, 2, 0) * 255.0), 0, 255).astype(np.uint8)


def resize_bilinear(img: np.ndarray, size: int) -> np.ndarray:
    """Bilinear resize of ``[C,H,W]`` to ``[C,size,size]`` (pixel-center aligned, edge clamped)."""
    _, h, w = img.shape

    def axis(n_in):
        pos = (np.arange(size) + 0.5) * (n_in / size) - 0.5
        pos = np.clip(pos, 0, n_in - 1)
        lo = np.floor(pos).astype(np.intp)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    y0, y1, fy = axis(h)
    x0, x1, fx = axis(w)
    rows = img[:, y0] * (1 - fy)[None, :, None] + img[:, y1] * fy[None, :, None]
    return rows[:, :, x0] * (1 - fx) + rows[:, :, x1] * fx


# ------------------------------------------------------------- datasets


class ImageStore:
    """Resolves image refs to uint8 arrays: in-memory entries first, then files under ``root``."""

    def __init__(self, root=None, images: dict | None = None):
        self.root = Path(root) if root is not None else None
        self.images = dict(images or {})

    def get(self, ref: str) -> np.ndarray:
        img = self.images.get(ref)
        if img is None:
            if self.root is None:
                raise FileNotFoundError(f"image {ref!r} is not in memory and the store has no root")
            img = read_pnm(self.root / ref)
            self.images[ref] = img
        return img


@dataclass
class SamplePair:
    subject_id: str
    label: int
    onset_candidates: list
    apex_candidates: list
    canonical_onset: str
    canonical_apex: str
    region: tuple | None = None
    store: ImageStore | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.onset_candidates or not self.apex_candidates:
            raise ProtocolError(f"sample of subject {self.subject_id}: empty candidate list")

    def image(self, ref: str) -> np.ndarray:
        if self.store is None:
            raise ProtocolError("sample is not attached to an image store")
        return self.store.get(ref)


@dataclass
class Dataset:
    samples: list
    class_names: list

    def __post_init__(self):
        k = len(self.class_names)
        for s in self.samples:
            if not 0 <= s.label < k:
                raise ProtocolError(f"label {s.label} outside {k} classes")

    @property
    def subjects(self) -> list:
        return sorted({s.subject_id for s in self.samples})

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def __len__(self) -> int:
        return len(self.samples)

    def subset(self, keep) -> "Dataset":
        return Dataset([self.samples[i] for i in keep], list(self.class_names))

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.intp)


def loso_folds(ds: Dataset) -> list:
    """One ``(train, test)`` pair per subject (sorted ids); test holds exactly that subject."""
    subjects = ds.subjects
    if len(subjects) < 2:
        raise ProtocolError(f"leave-one-subject-out needs >= 2 subjects, got {len(subjects)}")
    folds = []
    for subj in subjects:
        test = [i for i, s in enumerate(ds.samples) if s.subject_id == subj]
        train = [i for i, s in enumerate(ds.samples) if s.subject_id != subj]
        folds.append((ds.subset(train), ds.subset(test)))
    return folds


def save_dataset(ds: Dataset, root) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    lines = [INDEX_HEADER, "classes " + " ".join(ds.class_names)]
    written = set()
    for s in ds.samples:
        for ref in {*s.onset_candidates, *s.apex_candidates, s.canonical_onset, s.canonical_apex}:
            if ref in written:
                continue
            path = root / ref
            path.parent.mkdir(parents=True, exist_ok=True)
            write_pnm(path, s.image(ref))
            written.add(ref)
        region = ",".join(str(v) for v in s.region) if s.region else "-"
        lines.append(" ".join([
            "sample", s.subject_id, str(s.label), ",".join(s.onset_candidates),
            ",".join(s.apex_candidates), s.canonical_onset, s.canonical_apex, region,
        ]))
    (root / INDEX_NAME).write_text("\n".join(lines) + "\n", encoding="ascii")


def load_dataset(root) -> Dataset:
    root = Path(root)
    lines = (root / INDEX_NAME).read_text(encoding="ascii").splitlines()
    if not lines or lines[0].strip() != INDEX_HEADER:
        raise ProtocolError(f"{root / INDEX_NAME}: expected header {INDEX_HEADER!r}")
    store = ImageStore(root)
    classes, samples = None, []
    for lineno, line in enumerate(lines[1:], 2):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "classes":
            classes = parts[1:]
        elif parts[0] == "sample" and len(parts) == 8:
            _, subj, label, onsets, apexes, c_on, c_ap, region = parts
            reg = None if region == "-" else tuple(int(v) for v in region.split(","))
            samples.append(SamplePair(subj, int(label), onsets.split(","), apexes.split(","),
                                      c_on, c_ap, reg, store))
        else:
            raise ProtocolError(f"{root / INDEX_NAME}:{lineno}: malformed line")
    if classes is None:
        raise ProtocolError(f"{root / INDEX_NAME}: missing 'classes' line")
    return Dataset(samples, classes)


# ------------------------------------------------------------ augmentation


@dataclass(frozen=True)
class AugmentParams:
    onset_index: int | None = None   # None: canonical frame
    apex_index: int | None = None
    flip: bool = False
    crop: tuple = ((RESIZE_TO - IMAGE_SIZE) // 2, (RESIZE_TO - IMAGE_SIZE) // 2)
    brightness: float = 1.0
    contrast: float = 1.0


EVAL_PARAMS = AugmentParams()


def sample_augment_params(pair: SamplePair, rng: Rng) -> AugmentParams:
    slack = RESIZE_TO - IMAGE_SIZE
    return AugmentParams(
        onset_index=int(rng.integers(0, len(pair.onset_candidates))),
        apex_index=int(rng.integers(0, len(pair.apex_candidates))),
        flip=bool(rng.random() < 0.5),
        crop=(int(rng.integers(0, slack + 1)), int(rng.integers(0, slack + 1))),
        brightness=float(rng.uniform(*BRIGHTNESS)),
        contrast=float(rng.uniform(*CONTRAST)),
    )


def apply_augment(pair: SamplePair, params: AugmentParams) -> tuple:
    """candidate pick -> resize -> flip -> crop -> jitter, identical geometry for both frames."""
    on_ref = pair.canonical_onset if params.onset_index is None else pair.onset_candidates[params.onset_index]
    ap_ref = pair.canonical_apex if params.apex_index is None else pair.apex_candidates[params.apex_index]
    out = []
    for ref in (on_ref, ap_ref):
        raw = pair.image(ref)
        if raw.ndim != 3 or min(raw.shape[:2]) < IMAGE_SIZE:
            raise GeometryError(f"image {ref!r} of shape {raw.shape} is smaller than {IMAGE_SIZE}x{IMAGE_SIZE}")
        img = resize_bilinear(to_chw(raw), RESIZE_TO)
        if params.flip:
            img = img[:, :, ::-1]
        y, x = params.crop
        img = img[:, y : y + IMAGE_SIZE, x : x + IMAGE_SIZE]
        if params.brightness != 1.0 or params.contrast != 1.0:
            img = np.clip((img * params.brightness - 0.5) * params.contrast + 0.5, 0.0, 1.0)
        out.append(np.ascontiguousarray(img))
    return out[0], out[1]


def augment(pair: SamplePair, rng: Rng | None, training: bool) -> tuple:
    """Return ``(onset, apex)`` tensors ``[3,224,224]`` in ``[0, 1]``.

    Eval mode ignores ``rng`` and uses the canonical frames with a centre crop.
    """
    params = sample_augment_params(pair, rng) if training else EVAL_PARAMS
    onset, apex = apply_augment(pair, params)
    return T.Tensor(onset), T.Tensor(apex)


def region_in_crop(region: tuple, source_hw: tuple, params: AugmentParams = EVAL_PARAMS) -> tuple:
    """Map a frame-space box through resize, flip and crop into the 224x224 model frame."""
    y0, x0, y1, x1 = region
    sy, sx = RESIZE_TO / source_hw[0], RESIZE_TO / source_hw[1]
    y0, y1, x0, x1 = y0 * sy, y1 * sy, x0 * sx, x1 * sx
    if params.flip:
        x0, x1 = RESIZE_TO - x1, RESIZE_TO - x0
    cy, cx = params.crop
    box = (y0 - cy, x0 - cx, y1 - cy, x1 - cx)
    return tuple(float(np.clip(v, 0, IMAGE_SIZE)) for v in box)
