"""Training loop: BCE loss, Adam, cosine-annealed LR, early stopping.

One optimizer step per batch, one cosine step per epoch, validation after
every epoch, and restoration of the best-validation-loss weights at the
end. All randomness (init, shuffling) derives from the configured seed.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import convnet, data, metrics, transformer
from . import tensor as T
from .errors import DataEmpty, DivergedLoss, NonFiniteValue, ShapeMismatch
from .tensor import GradTape, Tensor, backward, make_op

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    total_epochs: int = 40
    train_batch: int = 10
    val_batch: int = 2
    patience: int = 10
    eta_min: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if min(self.learning_rate, self.total_epochs, self.train_batch, self.val_batch) <= 0:
            raise ValueError("learning_rate, epochs and batch sizes must be positive")
        if self.eta_min < 0:
            raise ValueError("eta_min must be >= 0")
        if not 0 <= self.patience <= self.total_epochs:
            raise ValueError("need 0 <= patience <= total_epochs")


def bce_loss(probs: Tensor, targets) -> Tensor:
    """Mean binary cross-entropy over every (sample, class) cell.

    Probabilities are clamped to [1e-7, 1 - 1e-7]; the gradient is zero
    where the clamp is active.
    """
    t = targets.data if isinstance(targets, Tensor) else np.asarray(targets, dtype=np.float64)
    if t.shape != probs.shape:
        raise ShapeMismatch(f"probs {probs.shape} vs targets {t.shape}")
    if not np.isin(t, (0.0, 1.0)).all():
        raise ValueError("targets must be binary")
    lo, hi = 1e-7, 1.0 - 1e-7
    p = probs.data
    pc = np.clip(p, lo, hi)
    n = pc.size
    value = -(t * np.log(pc) + (1.0 - t) * np.log(1.0 - pc)).mean()

    def bw(g):
        inside = (p > lo) & (p < hi)
        return (np.where(inside, (pc - t) / (pc * (1.0 - pc)) / n, 0.0) * float(g),)

    return make_op("bce", np.asarray(value), (probs,), bw)


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_step(
    params: dict[str, Tensor],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> None:
    """In-place Adam update with bias-corrected moments."""
    state.step += 1
    t = state.step
    c1 = 1.0 - ADAM_BETA1**t
    c2 = 1.0 - ADAM_BETA2**t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)


def cosine_lr(epoch: int, cfg: TrainConfig) -> float:
    """Cosine annealing from learning_rate to eta_min over total_epochs."""
    if not 0 <= epoch <= cfg.total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {cfg.total_epochs}]")
    span = cfg.learning_rate - cfg.eta_min
    return cfg.eta_min + 0.5 * span * (1.0 + np.cos(np.pi * epoch / cfg.total_epochs))


def early_stop(val_history, patience: int = 10) -> tuple[bool, int]:
    """(stop?, best epoch) from a 1-based validation-loss history.

    Stops once the current epoch is at least `patience` epochs past the
    best one; ties resolve to the earliest best.
    """
    if len(val_history) == 0:
        raise ValueError("empty validation history")
    best_epoch = int(np.argmin(val_history)) + 1
    return (len(val_history) - best_epoch) >= patience, best_epoch


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    val_loss: float
    train_macro_f1: float
    val_macro_f1: float
    train_samples_f1: float
    val_samples_f1: float
    seconds: float


@dataclass
class TrainingLog:
    records: list[EpochRecord] = field(default_factory=list)

    def best_epoch(self) -> int:
        return int(np.argmin([r.val_loss for r in self.records])) + 1

    def total_seconds(self) -> float:
        return float(sum(r.seconds for r in self.records))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([
                "epoch", "lr", "train_loss", "val_loss", "train_macro_f1",
                "val_macro_f1", "train_samples_f1", "val_samples_f1", "seconds",
            ])
            for r in self.records:
                w.writerow([
                    r.epoch, f"{r.lr:.12g}", f"{r.train_loss:.12g}", f"{r.val_loss:.12g}",
                    f"{r.train_macro_f1:.12g}", f"{r.val_macro_f1:.12g}",
                    f"{r.train_samples_f1:.12g}", f"{r.val_samples_f1:.12g}",
                    f"{r.seconds:.6f}",
                ])

    @staticmethod
    def from_csv(path: str | Path) -> "TrainingLog":
        log = TrainingLog()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                log.records.append(EpochRecord(
                    int(row["epoch"]), float(row["lr"]), float(row["train_loss"]),
                    float(row["val_loss"]), float(row["train_macro_f1"]),
                    float(row["val_macro_f1"]), float(row["train_samples_f1"]),
                    float(row["val_samples_f1"]), float(row["seconds"]),
                ))
        return log


@dataclass(frozen=True)
class ExampleSet:
    """Feature images with integer class labels."""

    images: np.ndarray  # [N, S, S]
    labels: np.ndarray  # [N]
    n_classes: int

    def __len__(self) -> int:
        return len(self.labels)

    def one_hot(self, indices) -> np.ndarray:
        out = np.zeros((len(indices), self.n_classes))
        out[np.arange(len(indices)), self.labels[list(indices)]] = 1.0
        return out


@dataclass(frozen=True)
class SplitData:
    train: ExampleSet
    val: ExampleSet


def model_functions(model_kind: str, model_cfg) -> tuple[Callable, Callable]:
    """(init, forward) pair for a backbone name."""
    if model_kind == "ast":
        return (
            lambda seed: transformer.init_weights(model_cfg, seed),
            lambda img, w: transformer.forward(img, w, model_cfg),
        )
    if model_kind == "cnn":
        return (
            lambda seed: convnet.init_weights(model_cfg, seed),
            lambda img, w: convnet.forward(img, w, model_cfg),
        )
    raise ValueError(f"unknown model kind {model_kind!r}")


def evaluate(
    forward: Callable,
    weights: dict[str, Tensor],
    examples: ExampleSet,
    batch_size: int,
) -> tuple[float, np.ndarray, np.ndarray]:
    """(mean loss, stacked probs, stacked targets) without recording grads."""
    losses, probs_rows, targets_rows = [], [], []
    for batch in data.batches(range(len(examples)), batch_size, shuffle=False):
        rows = [forward(examples.images[i], weights) for i in batch]
        probs = T.concat(rows, axis=0)
        targets = examples.one_hot(batch)
        losses.append(float(bce_loss(probs, targets).data) * len(batch))
        probs_rows.append(probs.data)
        targets_rows.append(targets)
    return (
        float(np.sum(losses) / len(examples)),
        np.concatenate(probs_rows, axis=0),
        np.concatenate(targets_rows, axis=0),
    )


def train(
    model_kind: str,
    split: SplitData,
    cfg: TrainConfig,
    model_cfg,
) -> tuple[dict[str, Tensor], TrainingLog]:
    """Full training run; returns the best-validation-epoch weights and log.

    Train-set metrics are accumulated from the predictions made during the
    epoch (before each batch's update), validation metrics from a full pass
    after the epoch.
    """
    if len(split.train) == 0 or len(split.val) == 0:
        raise DataEmpty("both train and validation sets must be non-empty")
    init, forward = model_functions(model_kind, model_cfg)
    weights = init(cfg.seed)
    state = AdamState()
    log = TrainingLog()
    val_history: list[float] = []
    best_weights = {k: v.data.copy() for k, v in weights.items()}

    for epoch in range(cfg.total_epochs):
        started = time.perf_counter()
        lr = cosine_lr(epoch, cfg)
        epoch_loss = 0.0
        train_probs, train_targets = [], []
        for batch in data.batches(
            range(len(split.train)), cfg.train_batch, seed=cfg.seed, epoch=epoch
        ):
            targets = split.train.one_hot(batch)
            try:
                with GradTape() as tape:
                    rows = [forward(split.train.images[i], weights) for i in batch]
                    probs = T.concat(rows, axis=0)
                    loss = bce_loss(probs, targets)
                backward(loss, tape)
            except NonFiniteValue as exc:
                raise DivergedLoss(f"epoch {epoch + 1}: {exc}") from exc
            epoch_loss += float(loss.data) * len(batch)
            train_probs.append(probs.data)
            train_targets.append(targets)
            grads = {k: v.grad for k, v in weights.items() if v.grad is not None}
            adam_step(weights, grads, state, lr)
            for v in weights.values():
                v.grad = None

        val_loss, val_probs, val_targets = evaluate(forward, weights, split.val, cfg.val_batch)
        if not np.isfinite(val_loss):
            raise DivergedLoss(f"validation loss diverged at epoch {epoch + 1}")
        tp = np.concatenate(train_probs, axis=0)
        tt = np.concatenate(train_targets, axis=0)
        train_macro, _ = metrics.macro_f1(metrics.binarize(tp), tt)
        val_macro, _ = metrics.macro_f1(metrics.binarize(val_probs), val_targets)
        log.records.append(EpochRecord(
            epoch=epoch + 1,
            lr=float(lr),
            train_loss=epoch_loss / len(split.train),
            val_loss=val_loss,
            train_macro_f1=train_macro,
            val_macro_f1=val_macro,
            train_samples_f1=metrics.samples_f1(metrics.binarize(tp), tt),
            val_samples_f1=metrics.samples_f1(metrics.binarize(val_probs), val_targets),
            seconds=time.perf_counter() - started,
        ))
        if not val_history or val_loss < min(val_history):
            best_weights = {k: v.data.copy() for k, v in weights.items()}
        val_history.append(val_loss)
        stop, _ = early_stop(val_history, cfg.patience)
        if stop:
            break

    return {k: Tensor(v, requires_grad=True) for k, v in best_weights.items()}, log
