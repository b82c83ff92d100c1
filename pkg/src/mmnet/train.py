"""AdamW, the exponential learning-rate schedule, per-fold training and LOSO evaluation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .checkpoint import Checkpoint
from .config import RunConfig
from .data import Dataset, augment, loso_folds
from .errors import ConfigError, NonFiniteError, ProtocolError
from .model import MMNet, build_model
from .rng import Rng, derive_seed

log = logging.getLogger(__name__)


class AdamW:
    """Adam with decoupled weight decay.

    One step at learning rate ``lr`` for a parameter ``p`` with gradient ``g``::

        p <- p - lr * wd * p
        m <- b1 * m + (1 - b1) * g
        v <- b2 * v + (1 - b2) * g**2
        p <- p - lr * (m / (1 - b1**t)) / (sqrt(v / (1 - b2**t)) + eps)
    """

    def __init__(self, named_params, weight_decay=0.01, betas=(0.9, 0.999), eps=1e-8):
        self.named = list(named_params)
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for _, p in self.named]
        self.v = [np.zeros_like(p.data) for _, p in self.named]

    def step(self, lr: float, grads=None) -> None:
        """Update in place; ``grads`` defaults to each parameter's ``.grad`` (None counts as zero)."""
        if grads is None:
            grads = [p.grad for _, p in self.named]
        for (name, _), g in zip(self.named, grads):
            if g is not None and not np.all(np.isfinite(g)):
                bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
                raise NonFiniteError(f"gradient of {name} has {bad} non-finite entries; step aborted")
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for (_, p), g, m, v in zip(self.named, grads, self.m, self.v):
            if g is None:
                g = np.zeros_like(p.data)
            if self.weight_decay:
                p.data -= lr * self.weight_decay * p.data
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass(frozen=True)
class LrSchedule:
    lr0: float
    gamma: float

    def __call__(self, epoch: int) -> float:
        return self.lr0 * self.gamma**epoch

    @classmethod
    def from_config(cls, config: RunConfig) -> "LrSchedule":
        return cls(config.lr0, config.resolved_gamma)


# ----------------------------------------------------------------- metrics


@dataclass
class EvalReport:
    confusion: np.ndarray
    accuracy: float
    macro_f1: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    degenerate: list
    class_names: list = field(default_factory=list)
    predictions: list = field(default_factory=list)

    @property
    def num_samples(self) -> int:
        return int(self.confusion.sum())

    def to_text(self, digest: str = "") -> str:
        lines = ["# mmnet eval report", "format = 1"]
        if digest:
            lines.append(f"config_digest = {digest}")
        lines += [
            f"samples = {self.num_samples}",
            f"accuracy = {self.accuracy!r}",
            "f1_average = macro",
            f"macro_f1 = {self.macro_f1!r}",
            "classes = " + " ".join(self.class_names or map(str, range(len(self.f1)))),
            "confusion = " + " ; ".join(" ".join(str(int(v)) for v in row) for row in self.confusion),
        ]
        for k in range(len(self.f1)):
            lines += [f"class.{k}.precision = {float(self.precision[k])!r}",
                      f"class.{k}.recall = {float(self.recall[k])!r}",
                      f"class.{k}.f1 = {float(self.f1[k])!r}"]
        lines.append("degenerate_classes = " + (" ".join(map(str, self.degenerate)) or "none"))
        for i, (subject, truth, pred) in enumerate(self.predictions):
            lines.append(f"prediction.{i} = {subject} {truth} {pred}")
        return "\n".join(lines) + "\n"


def confusion_matrix(truth, pred, num_classes: int) -> np.ndarray:
    """Rows are true classes, columns are predicted classes."""
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(truth, dtype=np.intp), np.asarray(pred, dtype=np.intp)), 1)
    return cm


def report_from_confusion(cm: np.ndarray, class_names=None, predictions=None) -> EvalReport:
    """Accuracy, per-class precision/recall/F1 and unweighted macro-F1.

    A ratio with a zero denominator is 0; a class with no true and no
    predicted samples scores F1 = 0 and is listed in ``degenerate``.
    """
    cm = np.asarray(cm, dtype=np.int64)
    k = cm.shape[0]
    total = cm.sum()
    tp = np.diag(cm).astype(np.float64)
    col, row = cm.sum(axis=0), cm.sum(axis=1)
    precision = np.divide(tp, col, out=np.zeros(k), where=col > 0)
    recall = np.divide(tp, row, out=np.zeros(k), where=row > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros(k), where=denom > 0)
    degenerate = [c for c in range(k) if row[c] == 0 and col[c] == 0]
    accuracy = float(tp.sum() / total) if total else 0.0
    return EvalReport(cm, accuracy, float(f1.mean()), precision, recall, f1, degenerate,
                      list(class_names or []), list(predictions or []))


# ---------------------------------------------------------------- training


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    mean_loss: float

    def to_line(self) -> str:
        return f"epoch={self.epoch} lr={self.lr!r} loss={self.mean_loss!r}"


def _check_classes(ds: Dataset, config: RunConfig) -> None:
    if ds.num_classes != config.num_classes:
        raise ConfigError(f"dataset has {ds.num_classes} classes, config expects {config.num_classes}")


def train_fold(train: Dataset, config: RunConfig, rng: Rng, model: MMNet | None = None) -> Checkpoint:
    """Train a fresh model (initialized from ``rng``) on ``train``; fully determined by the seed.

    Samples are processed one graph at a time and their gradients summed into
    the mini-batch mean before each AdamW step. The last short batch is kept.
    With ``config.stop_loss > 0`` training ends after the first epoch whose
    mean loss falls below it.
    """
    if len(train) == 0:
        raise ProtocolError("cannot train on an empty dataset")
    _check_classes(train, config)
    if model is None:
        model = MMNet(config, rng.child("init"))
    named = list(model.named_parameters())
    params = [p for _, p in named]
    opt = AdamW(named, weight_decay=config.weight_decay)
    schedule = LrSchedule.from_config(config)
    records = []
    n = len(train)
    for epoch in range(config.epochs):
        lr = schedule(epoch)
        order = rng.child("order", epoch).permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            acc = [np.zeros_like(p.data) for p in params]
            for i in batch:
                pair = train.samples[int(i)]
                onset, apex = augment(pair, rng.child("augment", epoch, int(i)), training=config.augment)
                loss = model.loss(model.forward(onset, apex), pair.label)
                total += loss.item()
                T.backward(T.mul_scalar(loss, 1.0 / len(batch)))
                for a, p in zip(acc, params):
                    if p.grad is not None:
                        a += p.grad
                    p.zero_grad()
            opt.step(lr, acc)
        rec = EpochRecord(epoch, lr, total / n)
        records.append(rec)
        log.info(rec.to_line())
        if config.stop_loss and rec.mean_loss < config.stop_loss:
            break
    return Checkpoint(config, model.state_dict(), records)


def model_from_checkpoint(ckpt: Checkpoint) -> MMNet:
    model = build_model(ckpt.config)
    model.load_state_dict(ckpt.state)
    return model


def predict(model: MMNet, ds: Dataset) -> list:
    """Eval-mode predicted class for every sample."""
    out = []
    with T.no_grad():
        for pair in ds.samples:
            onset, apex = augment(pair, None, training=False)
            out.append(model.forward(onset, apex).predicted_class)
    return out


def evaluate(test: Dataset, ckpt: Checkpoint) -> EvalReport:
    _check_classes(test, ckpt.config)
    preds = predict(model_from_checkpoint(ckpt), test)
    truth = [s.label for s in test.samples]
    rows = [(s.subject_id, s.label, p) for s, p in zip(test.samples, preds)]
    return report_from_confusion(confusion_matrix(truth, preds, test.num_classes), test.class_names, rows)


def fold_rng(config: RunConfig, subject: str) -> Rng:
    return Rng(derive_seed(config.seed, "fold", subject))


@dataclass
class FoldResult:
    subject: str
    checkpoint: Checkpoint
    report: EvalReport


def run_fold(ds: Dataset, config: RunConfig, subject: str) -> FoldResult:
    train = ds.subset([i for i, s in enumerate(ds.samples) if s.subject_id != subject])
    test = ds.subset([i for i, s in enumerate(ds.samples) if s.subject_id == subject])
    ckpt = train_fold(train, config, fold_rng(config, subject))
    return FoldResult(subject, ckpt, evaluate(test, ckpt))


def pooled_report(ds: Dataset, folds: list) -> EvalReport:
    """One confusion matrix over every fold's test predictions."""
    rows = [r for f in folds for r in f.report.predictions]
    cm = sum((f.report.confusion for f in folds), np.zeros((ds.num_classes,) * 2, dtype=np.int64))
    return report_from_confusion(cm, ds.class_names, rows)


def run_loso(ds: Dataset, config: RunConfig) -> tuple:
    """Train and evaluate every leave-one-subject-out fold sequentially."""
    _check_classes(ds, config)
    loso_folds(ds)  # validates the protocol (>= 2 subjects)
    folds = [run_fold(ds, config, subject) for subject in ds.subjects]
    return folds, pooled_report(ds, folds)
