"""Optimization loop: batched Adam steps with early stopping on validation
loss, returning the best-validation snapshot rather than the final weights.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .datasets import batch_indices
from .errors import EmptySplit, NonFiniteLoss
from .metrics import confusion_matrix, derive_metrics
from .models import Model, ModelSpec, init_model
from .nn import Adam, backward, forward, softmax_cross_entropy


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 50
    patience: int = 10
    batch_size: int = 32
    seed: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    min_delta: float = 1e-4
    dtype: str = "float32"

    def __post_init__(self):
        if self.max_epochs < 1 or self.patience < 1 or self.min_delta < 0:
            raise ValueError("need max_epochs >= 1, patience >= 1, min_delta >= 0")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class TrainHistory:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stop_reason: str = ""

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])
            for r in self.epochs:
                writer.writerow(
                    [r.epoch, f"{r.train_loss:.6f}", f"{r.train_acc:.6f}", f"{r.val_loss:.6f}", f"{r.val_acc:.6f}"]
                )


class EarlyStopping:
    """Stop after `patience` epochs without a > min_delta improvement.

    Snapshots are taken on any strict improvement so the returned weights
    are exactly the validation-loss minimum; min_delta only gates the
    patience counter.
    """

    def __init__(self, patience: int, min_delta: float):
        self.patience = patience
        self.min_delta = min_delta
        self.best_loss = math.inf
        self.patience_anchor = math.inf
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, epoch: int, val_loss: float) -> tuple[bool, bool]:
        """Returns (snapshot_now, stop_now) for this epoch's validation loss."""
        snapshot = val_loss < self.best_loss
        if snapshot:
            self.best_loss = val_loss
            self.best_epoch = epoch
        if self.patience_anchor - val_loss > self.min_delta:
            self.patience_anchor = val_loss
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        return snapshot, self.bad_epochs >= self.patience


def _forward_loss(model, x, y, train, dropout_seed):
    logits, caches = forward(
        model.spec.layers, model.params, x, train=train, dropout_seed=dropout_seed, want_cache=train
    )
    probs, losses, d_logits = softmax_cross_entropy(logits, y)
    return logits, caches, probs, losses, d_logits


def train(spec: ModelSpec, train_data, val_data, config: TrainConfig) -> tuple[Model, TrainHistory]:
    """Fit a fresh model; returns the best-validation snapshot and history.

    train_data/val_data are (images, labels) pairs with images (n, H, W)
    and integer labels. Deterministic for a fixed config.seed when run
    single-threaded: batch order, weight init, and dropout masks all derive
    from it (dropout masks from (seed, epoch, batch, layer)).
    """
    train_x, train_y = _as_dataset(train_data, spec, config.dtype)
    val_x, val_y = _as_dataset(val_data, spec, config.dtype)

    model = init_model(spec, seed=config.seed, dtype=np.dtype(config.dtype))
    optimizer = Adam(config.learning_rate, config.beta1, config.beta2, config.epsilon)
    stopper = EarlyStopping(config.patience, config.min_delta)
    history = TrainHistory()
    best_params = model.copy_params()
    best_val_loss = math.inf

    for epoch in range(1, config.max_epochs + 1):
        loss_sum = 0.0
        hit_sum = 0
        for b, batch in enumerate(batch_indices(len(train_y), config.batch_size, config.seed, epoch)):
            x, y = train_x[batch], train_y[batch]
            _, caches, probs, losses, d_logits = _forward_loss(
                model, x, y, train=True, dropout_seed=(config.seed, epoch, b)
            )
            batch_loss = float(losses.mean())
            if not math.isfinite(batch_loss):
                raise NonFiniteLoss(f"non-finite training loss at epoch {epoch}, batch {b}")
            loss_sum += float(losses.sum())
            hit_sum += int((probs.argmax(axis=1) == y).sum())
            grads = backward(model.spec.layers, model.params, caches, d_logits / len(y))
            optimizer.step(model.params, grads)

        val_loss, val_acc = _evaluate_loss(model, val_x, val_y, config.batch_size)
        if not math.isfinite(val_loss):
            raise NonFiniteLoss(f"non-finite validation loss at epoch {epoch}")
        record = EpochRecord(
            epoch, loss_sum / len(train_y), hit_sum / len(train_y), val_loss, val_acc
        )
        history.epochs.append(record)

        snapshot, stop = stopper.update(epoch, val_loss)
        if snapshot:
            best_params = model.copy_params()
            best_val_loss = val_loss
        if stop:
            history.stop_reason = "patience_exhausted"
            break
    else:
        history.stop_reason = "max_epochs"

    history.best_epoch = stopper.best_epoch
    best = Model(
        spec,
        best_params,
        seed=config.seed,
        epochs_trained=len(history.epochs),
        best_val_loss=best_val_loss,
    )
    return best, history


def _as_dataset(data, spec: ModelSpec, dtype) -> tuple[np.ndarray, np.ndarray]:
    images, labels = data
    images = np.asarray(images, dtype=np.dtype(dtype))
    labels = np.asarray(labels, dtype=np.int64)
    if images.ndim == 3:
        images = images[:, None]  # add the channel axis
    if images.shape[0] == 0:
        raise EmptySplit("empty data split")
    if images.shape[0] != labels.shape[0]:
        raise ValueError(f"{images.shape[0]} images vs {labels.shape[0]} labels")
    c, h, w = spec.input_shape
    if images.shape[1:] != (c, h, w):
        raise ValueError(f"images {images.shape[1:]} do not match model input {(c, h, w)}")
    return images, labels


def _evaluate_loss(model: Model, x, y, batch_size: int) -> tuple[float, float]:
    loss_sum = 0.0
    hits = 0
    for start in range(0, len(y), batch_size):
        xb, yb = x[start : start + batch_size], y[start : start + batch_size]
        logits, _ = forward(model.spec.layers, model.params, xb, train=False)
        probs, losses, _ = softmax_cross_entropy(logits, yb)
        loss_sum += float(losses.sum())
        hits += int((probs.argmax(axis=1) == yb).sum())
    return loss_sum / len(y), hits / len(y)


def evaluate(model: Model, data, batch_size: int = 32):
    """Inference-mode evaluation: (ConfusionMatrix, MetricsReport, mean loss)."""
    x, y = _as_dataset(data, model.spec, model_dtype(model))
    preds = []
    loss_sum = 0.0
    for start in range(0, len(y), batch_size):
        xb, yb = x[start : start + batch_size], y[start : start + batch_size]
        logits, _ = forward(model.spec.layers, model.params, xb, train=False)
        probs, losses, _ = softmax_cross_entropy(logits, yb)
        loss_sum += float(losses.sum())
        preds.extend(int(p) for p in probs.argmax(axis=1))
    cm = confusion_matrix(list(zip((int(t) for t in y), preds)), model.spec.class_names)
    return cm, derive_metrics(cm), loss_sum / len(y)


def model_dtype(model: Model) -> np.dtype:
    return next(iter(model.params.values())).dtype
