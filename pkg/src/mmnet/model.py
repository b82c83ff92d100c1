"""MMNet: main branch on ``apex - onset``, position calibration on the onset, fused by addition."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .ca_branch import IMAGE_SIZE, MainBranch
from .config import RunConfig
from .errors import DimensionError, LabelError
from .nn import Linear, Module
from .pc_branch import PCModule, downscale_onset
from .rng import Rng


@dataclass
class Prediction:
    logits: T.Tensor
    probabilities: np.ndarray
    predicted_class: int
    attn_maps: list = field(default_factory=list)
    motion_features: T.Tensor | None = None
    position_embeddings: T.Tensor | None = None


def stable_softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


class MMNet(Module):
    def __init__(self, config: RunConfig, rng: Rng):
        super().__init__()
        self.config = config
        self.num_classes = config.num_classes
        self.use_pc = config.use_pc
        self.main = MainBranch(rng.child("main"), config.width, config.use_ca, config.attn_mode)
        if config.use_pc:
            self.pc = PCModule(rng.child("pc"), config.embed_dim, config.n_layers, config.n_heads)
        self.head = Linear(rng.child("head"), config.embed_dim, config.num_classes)

    def forward(self, onset, apex) -> Prediction:
        """Frames are ``[3,224,224]`` arrays or tensors with values in ``[0, 1]``."""
        onset, apex = T.as_tensor(onset), T.as_tensor(apex)
        expected = (3, IMAGE_SIZE, IMAGE_SIZE)
        if onset.shape != expected or apex.shape != expected:
            raise DimensionError(f"frames must both be {expected}, got {onset.shape} and {apex.shape}")
        motion, maps = self.main(T.sub(apex, onset))
        # F_M is sparse (zero wherever the frames agree) and shrunk by the chained
        # attention; rescaling it to unit RMS keeps the head's input O(1)
        fused, position = T.rms_normalize(motion), None
        if self.use_pc:
            position = self.pc(T.Tensor(downscale_onset(onset.data)))
            if position.shape != motion.shape:
                raise DimensionError(f"cannot fuse F_M {motion.shape} with E_pos {position.shape}")
            fused = T.add(fused, position)
        logits = self.head(T.global_avg_pool(fused))
        probs = stable_softmax(logits.data)
        return Prediction(logits, probs, int(np.argmax(logits.data)), maps, motion, position)

    def loss(self, pred: Prediction, label: int) -> T.Tensor:
        if not (isinstance(label, (int, np.integer)) and 0 <= label < self.num_classes):
            raise LabelError(f"label {label!r} outside [0, {self.num_classes})")
        return T.cross_entropy(pred.logits, int(label))

    def state_dict(self) -> dict:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict) -> None:
        own = dict(self.named_parameters())
        if list(own) != list(state):
            missing = sorted(set(own) ^ set(state))
            raise DimensionError(f"state does not match model parameters: {missing[:5]}")
        for name, p in own.items():
            if state[name].shape != p.shape:
                raise DimensionError(f"{name}: expected {p.shape}, got {state[name].shape}")
            p.data[...] = state[name]


def parameter_manifest(model: Module) -> list:
    """``[(name, shape, count), ...]`` in registration order (the checkpoint order)."""
    return [(name, tuple(p.shape), int(p.size)) for name, p in model.named_parameters()]


def build_model(config: RunConfig, seed: int | None = None) -> MMNet:
    return MMNet(config, Rng(config.seed if seed is None else seed, ("init",)))
