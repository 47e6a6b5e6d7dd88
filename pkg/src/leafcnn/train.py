"""Training loop: Adam updates, seeded epoch iteration with on-the-fly
augmentation, per-epoch train/validation records, checkpointing, and
history CSV export.

Determinism contract: identical config and seed give bit-identical
weight trajectories and epoch records. All randomness (split, shuffle,
augmentation, dropout) derives from config.seed through named child
streams.
"""
import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from leafcnn.data import IMAGE_SIZE, AugmentConfig, DatasetManifest, batches, split
from leafcnn.errors import DecodeError, ShapeError, TrainingDiverged
from leafcnn.layers import softmax_cross_entropy
from leafcnn.model import (
    Network,
    backward,
    build_network,
    forward,
    logits_from_cache,
    parameters,
    save_checkpoint,
)
from leafcnn.tensor import SeededRng

log = logging.getLogger(__name__)

BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-7


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 32
    epochs: int = 15
    dropout_conv: float = 0.25
    dropout_dense: float = 0.5
    seed: int = 0
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    train_fraction: float = 0.75

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def for_parameters(cls, params: dict) -> "AdamState":
        return cls(
            m={k: np.zeros_like(w) for k, w in params.items()},
            v={k: np.zeros_like(w) for k, w in params.items()},
        )


@dataclass
class EpochRecord:
    epoch: int  # 1-based
    loss: float
    accuracy: float
    val_loss: float
    val_accuracy: float


def adam_step(weights: dict, grads: dict, state: AdamState, lr: float):
    """One Adam update, in place on the weight arrays.

    m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2;
    w <- w - lr * mhat / (sqrt(vhat) + eps)  with bias-corrected moments.
    """
    state.t += 1
    c1 = 1.0 - BETA1 ** state.t
    c2 = 1.0 - BETA2 ** state.t
    for key, w in weights.items():
        g = grads[key]
        if g.shape != w.shape:
            raise ShapeError(f"gradient for {key} has shape {g.shape}, weights {w.shape}")
        m, v = state.m[key], state.v[key]
        m *= BETA1
        m += (1.0 - BETA1) * g
        v *= BETA2
        v += (1.0 - BETA2) * (g * g)
        w -= lr * (m / c1) / (np.sqrt(v / c2) + EPSILON)
    return weights, state


def run_epoch(net: Network, train_batches, config: TrainConfig, adam: AdamState, rng: SeededRng):
    """One optimization pass over the batch stream.

    Returns (loss averaged over batches, accuracy over all samples seen).
    Aborts on non-finite loss instead of training through divergence.
    """
    params = parameters(net)
    losses = []
    correct = 0
    total = 0
    it = iter(train_batches)
    index = 0
    while True:
        try:
            batch = next(it)
        except StopIteration:
            break
        except DecodeError as e:
            raise DecodeError(f"batch {index}: {e}") from e
        try:
            probs, cache = forward(net, batch.inputs, mode="train", rng=rng)
        except ShapeError as e:
            raise ShapeError(f"batch {index}: {e}") from e
        result = softmax_cross_entropy(logits_from_cache(net, cache), batch.labels)
        if not math.isfinite(result.loss):
            raise TrainingDiverged(f"non-finite loss {result.loss} in batch {index}")
        grads = backward(net, cache, result.grad_logits)
        adam_step(params, grads, adam, config.learning_rate)
        losses.append(result.loss)
        correct += int(np.sum(np.argmax(probs, axis=1) == batch.labels))
        total += len(batch.labels)
        index += 1
    if not losses:
        return 0.0, 0.0
    return float(np.mean(losses)), correct / total


def evaluate_epoch(net: Network, val_batches):
    """Eval-mode pass: (mean cross-entropy, accuracy). Never mutates weights."""
    losses = []
    correct = 0
    total = 0
    for batch in val_batches:
        probs, _ = forward(net, batch.inputs, mode="eval")
        p = probs.astype(np.float64)[np.arange(len(batch.labels)), batch.labels]
        losses.append(-np.log(np.maximum(p, 1e-300)))
        correct += int(np.sum(np.argmax(probs, axis=1) == batch.labels))
        total += len(batch.labels)
    if total == 0:
        return 0.0, 0.0
    return float(np.mean(np.concatenate(losses))), correct / total


def fit(manifest: DatasetManifest, config: TrainConfig, net: Network = None,
        out_dir=None, input_size: int = IMAGE_SIZE, width_divisor: int = 1):
    """Split, then train for config.epochs, recording one EpochRecord per
    epoch. Augmentation applies to training batches only.

    When out_dir is given, writes checkpoint_best.pldc (highest
    validation accuracy) and checkpoint_final.pldc there.
    """
    if not manifest.samples:
        raise ValueError("manifest holds no samples")
    root = SeededRng(config.seed)
    train_samples, val_samples = split(manifest.samples, config.train_fraction, config.seed)
    if net is None:
        class_count = max(s.class_index for s in manifest.samples) + 1
        net = build_network(
            root.child("init"),
            input_size=input_size,
            class_count=class_count,
            width_divisor=width_divisor,
            dropout_conv=config.dropout_conv,
            dropout_dense=config.dropout_dense,
        )
    else:
        input_size = net.input_shape[0]
    classes = manifest.classes[: net.class_count]
    adam = AdamState.for_parameters(parameters(net))
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    best_val = -1.0
    for epoch in range(1, config.epochs + 1):
        train_iter = batches(train_samples, config.batch_size, root.child("shuffle", epoch),
                             size=input_size, augment_cfg=config.augment)
        loss, acc = run_epoch(net, train_iter, config, adam, root.child("dropout", epoch))
        val_iter = batches(val_samples, config.batch_size, root.child("val", epoch), size=input_size)
        val_loss, val_acc = evaluate_epoch(net, val_iter)
        records.append(EpochRecord(epoch, loss, acc, val_loss, val_acc))
        log.info("epoch %d/%d loss=%.4f acc=%.4f val_loss=%.4f val_acc=%.4f",
                 epoch, config.epochs, loss, acc, val_loss, val_acc)
        if out_dir is not None and val_acc > best_val:
            save_checkpoint(net, out_dir / "checkpoint_best.pldc", classes)
        best_val = max(best_val, val_acc)
    if out_dir is not None:
        save_checkpoint(net, out_dir / "checkpoint_final.pldc", classes)
    return net, records


def export_history_csv(records, path):
    """epoch,loss,accuracy,val_loss,val_accuracy with 4-decimal values."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "loss", "accuracy", "val_loss", "val_accuracy"])
        for r in records:
            writer.writerow([r.epoch, f"{r.loss:.4f}", f"{r.accuracy:.4f}",
                             f"{r.val_loss:.4f}", f"{r.val_accuracy:.4f}"])


def load_history_csv(path):
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        return [
            EpochRecord(int(row["epoch"]), float(row["loss"]), float(row["accuracy"]),
                        float(row["val_loss"]), float(row["val_accuracy"]))
            for row in reader
        ]
