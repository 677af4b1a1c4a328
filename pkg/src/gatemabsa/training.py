"""Adam training loop with early stopping, metrics, and reproducible seeding.

Batch gradients are the sum of per-record gradients (the objective is a
plain sum over the dataset), accumulated in record order so runs are
bit-reproducible. The dev loss is monitored each epoch; training stops
when it fails to improve by more than 1e-6 for ``patience`` consecutive
epochs, and the checkpoint with the lowest dev loss is kept.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .model import (GateMabsaModel, checkpoint_bytes, forward, init_model,
                    loss_for_record, named_parameters, zero_grads)
from .decay import HeadConfig
from .records import NUM_CLASSES, FeatureRecord, load_split

IMPROVEMENT_THRESHOLD = 1e-6


class TrainingAbort(RuntimeError):
    """Non-finite loss or gradient; training cannot continue."""


@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    epochs: int = 10
    batch_size: int = 32
    dropout: float = 0.5
    n_heads: int = 6
    max_seq_len: int = 128
    patience: int = 5
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    model_dim: int = 768
    graph_mode: str = "row_aggregate"
    core_eps: float = 1e-6
    train_manifest: str = ""
    dev_manifest: str = ""
    checkpoint_out: str = ""
    log_out: str = ""

    def __post_init__(self):
        positive = ("learning_rate", "epochs", "batch_size", "n_heads",
                    "max_seq_len", "patience", "beta1", "beta2", "eps_adam",
                    "model_dim", "core_eps")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"config field {name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.patience > self.epochs:
            raise ValueError("patience must not exceed epochs")

    @classmethod
    def from_json(cls, path: str | Path) -> "TrainConfig":
        raw = json.loads(Path(path).read_text())
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**raw)

    def head_config(self) -> HeadConfig:
        return HeadConfig(model_dim=self.model_dim, n_heads=self.n_heads,
                          eps=self.core_eps)


# -- optimizer -------------------------------------------------------------------

@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params, state: AdamState, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One Adam update with bias correction over (name, tensor) pairs.

    Parameters with no gradient are skipped entirely (their moments do not
    decay); a non-finite gradient aborts, naming the parameter.
    """
    state.step += 1
    t = state.step
    for name, p in params:
        if p.grad is None:
            continue
        g = p.grad
        if not np.isfinite(g).all():
            raise TrainingAbort(f"non-finite gradient in parameter {name!r}")
        m = state.m.setdefault(name, np.zeros_like(p.data))
        v = state.v.setdefault(name, np.zeros_like(p.data))
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + eps)


# -- metrics ---------------------------------------------------------------------

@dataclass
class ClassScores:
    precision: float
    recall: float
    f1: float


@dataclass
class Metrics:
    accuracy: float
    macro_f1: float
    per_class: list[ClassScores]
    loss: float

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "loss": self.loss,
            "per_class": [{"precision": c.precision, "recall": c.recall, "f1": c.f1}
                          for c in self.per_class],
        }


def score_predictions(labels: list[int], preds: list[int],
                      mean_loss: float = 0.0) -> Metrics:
    """Accuracy and per-class precision/recall/F1 with the strict zero
    convention: a class with no predictions or no instances scores 0 on the
    undefined quantity, and its F1 is 0 when precision + recall is 0."""
    labels_arr = np.asarray(labels)
    preds_arr = np.asarray(preds)
    accuracy = float((labels_arr == preds_arr).mean()) if len(labels) else 0.0
    per_class = []
    for c in range(NUM_CLASSES):
        tp = int(((preds_arr == c) & (labels_arr == c)).sum())
        fp = int(((preds_arr == c) & (labels_arr != c)).sum())
        fn = int(((preds_arr != c) & (labels_arr == c)).sum())
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        per_class.append(ClassScores(precision=precision, recall=recall, f1=f1))
    macro_f1 = float(np.mean([c.f1 for c in per_class]))
    return Metrics(accuracy=accuracy, macro_f1=macro_f1, per_class=per_class,
                   loss=mean_loss)


def evaluate_records(model: GateMabsaModel, records: list[FeatureRecord],
                     n_max: int | None = None) -> Metrics:
    """Eval-mode metrics over a record list; order-invariant by construction."""
    if not records:
        raise ValueError("cannot evaluate an empty record list")
    labels, preds, losses = [], [], []
    for record in records:
        logits, _ = forward(model, record, mode="eval", n_max=n_max)
        flat = logits.data.reshape(-1)
        preds.append(int(np.argmax(flat)))
        labels.append(record.label)
        losses.append(ad.softmax_cross_entropy(logits, record.label).item())
    return score_predictions(labels, preds, float(np.mean(losses)))


def evaluate(model: GateMabsaModel, manifest_path: str | Path,
             split: str | None = None, n_max: int | None = None) -> Metrics:
    return evaluate_records(model, load_split(manifest_path, split), n_max=n_max)


# -- early stopping ---------------------------------------------------------------

@dataclass
class EarlyStopper:
    """Stops after ``patience`` consecutive epochs without a dev-loss
    improvement of more than the threshold."""

    patience: int
    threshold: float = IMPROVEMENT_THRESHOLD
    best_loss: float | None = None
    best_epoch: int = 0
    stale: int = 0

    def update(self, epoch: int, dev_loss: float) -> bool:
        """Record one epoch; returns True when this epoch is the new best."""
        if self.best_loss is None or dev_loss < self.best_loss - self.threshold:
            self.best_loss = dev_loss
            self.best_epoch = epoch
            self.stale = 0
            return True
        self.stale += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.stale >= self.patience


# -- training loop -----------------------------------------------------------------

@dataclass
class TrainResult:
    best_checkpoint: bytes
    best_epoch: int
    best_dev_loss: float
    epochs_run: int
    log_lines: list[str]


def run_epoch(model: GateMabsaModel, records: list[FeatureRecord],
              config: TrainConfig, state: AdamState, epoch: int
              ) -> tuple[float, int]:
    """One optimization epoch; returns (mean train loss, near-zero count).

    The record order is shuffled by a generator seeded from (seed, epoch);
    each record's dropout seed derives from (seed, epoch, record index), so
    the whole epoch is reproducible.
    """
    order = np.random.default_rng([config.seed, epoch, 101]).permutation(len(records))
    params = named_parameters(model)
    total_loss = 0.0
    near_zero = 0
    for start in range(0, len(order), config.batch_size):
        batch = order[start:start + config.batch_size]
        zero_grads(model)
        for rec_idx in batch:
            record = records[int(rec_idx)]
            drop_seed = np.random.SeedSequence(
                [config.seed, epoch, int(rec_idx), 202]).generate_state(1)[0]
            loss, diag = loss_for_record(model, record, mode="train",
                                         rng_seed=int(drop_seed),
                                         n_max=config.max_seq_len)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingAbort(
                    f"non-finite loss at epoch {epoch}, batch starting {start}, "
                    f"record {record.id!r}")
            total_loss += value
            near_zero += diag.near_zero_rows
            loss.backward()
        adam_step(params, state, config.learning_rate, config.beta1,
                  config.beta2, config.eps_adam)
    zero_grads(model)
    return total_loss / len(records), near_zero


def train(model: GateMabsaModel, config: TrainConfig,
          train_records: list[FeatureRecord], dev_records: list[FeatureRecord],
          log_sink=None) -> TrainResult:
    """Full training protocol; returns the best checkpoint and epoch logs.

    One JSON log line is emitted per epoch with the epoch number, mean
    train loss, dev loss, dev accuracy, dev macro-F1, and the count of
    near-zero normalization denominators seen during training forwards.
    """
    if not train_records or not dev_records:
        raise ValueError("train and dev record lists must be non-empty")
    state = AdamState()
    stopper = EarlyStopper(patience=config.patience)
    best_blob = checkpoint_bytes(model)
    log_lines: list[str] = []
    epochs_run = 0
    for epoch in range(1, config.epochs + 1):
        epochs_run = epoch
        train_loss, near_zero = run_epoch(model, train_records, config, state, epoch)
        dev_metrics = evaluate_records(model, dev_records, n_max=config.max_seq_len)
        line = json.dumps({
            "epoch": epoch,
            "train_loss": round(train_loss, 12),
            "dev_loss": round(dev_metrics.loss, 12),
            "dev_accuracy": round(dev_metrics.accuracy, 12),
            "dev_macro_f1": round(dev_metrics.macro_f1, 12),
            "near_zero_denominators": near_zero,
        }, sort_keys=True)
        log_lines.append(line)
        if log_sink is not None:
            print(line, file=log_sink, flush=True)
        if stopper.update(epoch, dev_metrics.loss):
            best_blob = checkpoint_bytes(model)
        if stopper.should_stop:
            break
    return TrainResult(best_checkpoint=best_blob, best_epoch=stopper.best_epoch,
                       best_dev_loss=float(stopper.best_loss), epochs_run=epochs_run,
                       log_lines=log_lines)


def train_from_config(config: TrainConfig, log_sink=None) -> TrainResult:
    """Load manifests, build a fresh model, train, and write artifacts."""
    train_records = load_split(config.train_manifest, "train")
    dev_source = config.dev_manifest or config.train_manifest
    dev_records = load_split(dev_source, "dev")
    model = init_model(config.head_config(), seed=config.seed,
                       dropout_p=config.dropout, graph_mode=config.graph_mode)
    result = train(model, config, train_records, dev_records, log_sink=log_sink)
    if config.checkpoint_out:
        Path(config.checkpoint_out).write_bytes(result.best_checkpoint)
    if config.log_out:
        Path(config.log_out).write_text("\n".join(result.log_lines) + "\n")
    return result
