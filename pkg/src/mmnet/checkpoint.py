"""Binary checkpoint format (all integers and floats little-endian).

========  ===========================================================
bytes     content
========  ===========================================================
8         magic ``b"MMNETCKP"``
4         uint32 format version (1)
64        ASCII hex SHA-256 digest of the run config
4         uint32 number of tensors
per       uint16 name length, UTF-8 name, uint8 ndim, ndim x uint32
tensor    dims, then ``prod(dims)`` float64 values in row-major order
========  ===========================================================

Tensors appear in parameter-manifest order. Writing then reading a
checkpoint reproduces every value bit for bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import CheckpointError

MAGIC = b"MMNETCKP"
VERSION = 1


@dataclass
class Checkpoint:
    config: RunConfig
    state: dict
    log: list = field(default_factory=list)

    def to_bytes(self) -> bytes:
        return encode(self.state, self.config.digest)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path, config: RunConfig) -> "Checkpoint":
        digest, state = decode(Path(path).read_bytes())
        if digest != config.digest:
            raise CheckpointError(f"{path}: checkpoint digest {digest[:12]} does not match config {config.digest[:12]}")
        return cls(config, state)


def encode(state: dict, digest: str) -> bytes:
    if len(digest) != 64:
        raise CheckpointError("digest must be 64 hex characters")
    parts = [MAGIC, struct.pack("<I", VERSION), digest.encode("ascii"), struct.pack("<I", len(state))]
    for name, arr in state.items():
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f8")
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def decode(blob: bytes) -> tuple:
    """Return ``(digest, state)`` from checkpoint bytes."""
    if blob[:8] != MAGIC:
        raise CheckpointError("not an mmnet checkpoint (bad magic)")
    try:
        (version,) = struct.unpack_from("<I", blob, 8)
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        digest = blob[12:76].decode("ascii")
        (count,) = struct.unpack_from("<I", blob, 76)
        pos, state = 80, {}
        for _ in range(count):
            (n,) = struct.unpack_from("<H", blob, pos)
            name = blob[pos + 2 : pos + 2 + n].decode("utf-8")
            pos += 2 + n
            (ndim,) = struct.unpack_from("<B", blob, pos)
            shape = struct.unpack_from(f"<{ndim}I", blob, pos + 1)
            pos += 1 + 4 * ndim
            size = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(blob, dtype="<f8", count=size, offset=pos)
            state[name] = data.astype(np.float64).reshape(shape)
            pos += 8 * size
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"truncated or corrupt checkpoint: {exc}") from None
    if pos != len(blob):
        raise CheckpointError(f"{len(blob) - pos} trailing bytes after last tensor")
    return digest, state
