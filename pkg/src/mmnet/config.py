"""Run configuration and its versioned ``key = value`` text format.

Example file::

    # mmnet run config
    format = 1
    num_classes = 5
    use_ca = true
    gamma = auto
    ...

Unknown keys are rejected. ``gamma = auto`` resolves to the decay that takes
the learning rate from ``lr0`` to ``lr0 / 100`` over the last epoch,
``0.01 ** (1 / (epochs - 1))``. The digest is a SHA-256 over the canonical
text of every field except ``out_dir``, so moving a run directory does not
invalidate its checkpoints.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError

FORMAT_VERSION = 1
HEADER = "# mmnet run config"
ATTN_MODES = ("continuous", "independent")


@dataclass(frozen=True)
class RunConfig:
    dataset: str = ""
    synth_subjects: int = 0
    synth_classes: int = 0
    synth_samples_per: int = 0
    num_classes: int = 5
    use_ca: bool = True
    use_pc: bool = True
    attn_mode: str = "continuous"
    n_layers: int = 2
    n_heads: int = 4
    width: int = 64
    lr0: float = 0.0008
    gamma: float | None = None
    epochs: int = 70
    batch_size: int = 32
    weight_decay: float = 0.01
    augment: bool = True
    stop_loss: float = 0.0
    seed: int = 0
    out_dir: str = "runs/default"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.attn_mode not in ATTN_MODES:
            raise ConfigError(f"attn_mode must be one of {ATTN_MODES}, got {self.attn_mode!r}")
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if self.width < 1:
            raise ConfigError("width must be >= 1")
        if self.n_layers < 1:
            raise ConfigError("n_layers must be >= 1")
        if self.n_heads < 1 or (8 * self.width) % self.n_heads:
            raise ConfigError(f"token width {8 * self.width} is not divisible into {self.n_heads} heads")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if not self.lr0 > 0:
            raise ConfigError("lr0 must be positive")
        if self.gamma is not None and not 0 < self.gamma < 1:
            raise ConfigError("gamma must lie in (0, 1)")
        if self.weight_decay < 0 or self.stop_loss < 0:
            raise ConfigError("weight_decay and stop_loss must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        synth = (self.synth_subjects, self.synth_classes, self.synth_samples_per)
        if any(synth) and (self.synth_subjects < 1 or not 1 <= self.synth_classes <= 5 or self.synth_samples_per < 1):
            raise ConfigError("synth spec needs subjects >= 1, 1 <= classes <= 5, samples_per >= 1")

    @property
    def embed_dim(self) -> int:
        return 8 * self.width

    @property
    def resolved_gamma(self) -> float:
        if self.gamma is not None:
            return self.gamma
        if self.epochs <= 1:
            return 0.01
        return 0.01 ** (1.0 / (self.epochs - 1))

    @property
    def uses_synth(self) -> bool:
        return self.synth_subjects > 0

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self, include_out_dir: bool = True) -> str:
        lines = [HEADER, f"format = {FORMAT_VERSION}"]
        for f in fields(self):
            if f.name == "out_dir" and not include_out_dir:
                continue
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.to_text(include_out_dir=False).encode("utf-8")).hexdigest()

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        values, version = {}, None
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key == "format":
                version = value
                continue
            values[key] = value
        if version != str(FORMAT_VERSION):
            raise ConfigError(f"unsupported config format {version!r} (expected {FORMAT_VERSION})")
        return cls.from_strings(values)

    @classmethod
    def from_strings(cls, values: dict, base: "RunConfig | None" = None) -> "RunConfig":
        types = {f.name: f.type for f in fields(cls)}
        parsed = {}
        for key, value in values.items():
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            parsed[key] = _parse(key, str(value), types[key])
        if base is not None:
            return base.replace(**parsed)
        return cls(**parsed)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


def _format(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(key: str, value: str, typ: str):
    try:
        if typ == "bool":
            if value.lower() not in ("true", "false"):
                raise ValueError(value)
            return value.lower() == "true"
        if typ == "int":
            return int(value)
        if typ == "float":
            return float(value)
        if typ == "float | None":
            return None if value == "auto" else float(value)
        return value
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r} as {typ}") from None
