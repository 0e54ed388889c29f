"""Seeded SGD training with momentum, cross-entropy loss, and evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from infip import layers as L
from infip.datasets import LabeledDataset
from infip.model import Model, logits_batch
from infip.tensor import Tensor


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; carries the epoch and batch where it happened."""

    def __init__(self, epoch: int, batch: int):
        super().__init__(f"training diverged (non-finite loss) at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    epochs: int
    batch_size: int = 32
    seed: int = 0
    momentum: float = 0.9

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")


def _batch_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def train_sgd(model: Model, data: LabeledDataset, cfg: TrainConfig) -> Model:
    """Train a copy of `model`; deterministic given (seed, model, data order).

    Data is shuffled once per epoch with a permutation drawn from the seeded
    generator; updates run in a fixed single-threaded order so identical
    inputs reproduce identical weights bitwise.
    """
    if len(data) == 0:
        raise ValueError("training data is empty")
    if data.labels.min() < 0 or data.labels.max() >= model.num_classes:
        raise ValueError(
            f"labels must lie in [0, {model.num_classes}), "
            f"got range [{data.labels.min()}, {data.labels.max()}]"
        )

    weights = [None if l.weights is None else l.weights.array.copy() for l in model.layers]
    biases = [None if l.bias is None else l.bias.array.copy() for l in model.layers]
    vel_w = [None if w is None else np.zeros_like(w) for w in weights]
    vel_b = [None if b is None else np.zeros_like(b) for b in biases]

    rng = np.random.default_rng(cfg.seed)
    n = len(data)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for bi, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            xb = data.images[idx]
            yb = data.labels[idx]

            live = _live_layers(model.layers, weights, biases)
            acts, caches = [], []
            a = xb
            # overflow here is diagnosed below, not propagated as warnings
            with np.errstate(over="ignore", invalid="ignore"):
                for layer in live:
                    out, cache = L.apply_with_cache(layer, a)
                    acts.append(a)
                    caches.append(cache)
                    a = out
                probs = _batch_softmax(a)
                eps = np.finfo(np.float64).tiny
                loss = -np.mean(np.log(np.maximum(probs[np.arange(len(yb)), yb], eps)))
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, bi)

            dout = probs.copy()
            dout[np.arange(len(yb)), yb] -= 1.0
            dout /= len(yb)

            for li in range(len(live) - 1, -1, -1):
                dout, dw, db = L.grad(live[li], caches[li], dout)
                if dw is not None:
                    vel_w[li] = cfg.momentum * vel_w[li] - cfg.learning_rate * dw
                    weights[li] = weights[li] + vel_w[li]
                if db is not None:
                    vel_b[li] = cfg.momentum * vel_b[li] - cfg.learning_rate * db
                    biases[li] = biases[li] + vel_b[li]

            for arr in weights + biases:
                if arr is not None and not np.isfinite(arr).all():
                    raise TrainingDivergedError(epoch, bi)

    return _rebuild(model, weights, biases)


def _live_layers(template, weights, biases):
    out = []
    for layer, w, b in zip(template, weights, biases):
        if w is None and b is None:
            out.append(layer)
        else:
            out.append(
                L.Layer(
                    kind=layer.kind,
                    weights=None if w is None else Tensor._adopt(w.copy()),
                    bias=None if b is None else Tensor._adopt(b.copy()),
                    stride=layer.stride,
                    padding=layer.padding,
                    pool_size=layer.pool_size,
                )
            )
    return out


def _rebuild(model: Model, weights, biases) -> Model:
    new_layers = tuple(_live_layers(model.layers, weights, biases))
    return Model(
        layers=new_layers,
        input_shape=model.input_shape,
        num_classes=model.num_classes,
        lineage=model.lineage,
    )


def evaluate(model: Model, data: LabeledDataset, batch_size: int = 128) -> float:
    """Classification accuracy of `model` on `data`."""
    if len(data) == 0:
        raise ValueError("evaluation data is empty")
    correct = 0
    for start in range(0, len(data), batch_size):
        xb = data.images[start : start + batch_size]
        yb = data.labels[start : start + batch_size]
        preds = np.argmax(logits_batch(model, xb), axis=1)
        correct += int((preds == yb).sum())
    return correct / len(data)
