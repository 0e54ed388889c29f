"""Model container, deterministic forward pass, and the reference architecture."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from infip import layers as L
from infip.tensor import ShapeMismatchError, Tensor


@dataclass(frozen=True)
class Model:
    """Ordered layer stack with a content hash over weights and hyperparams.

    Immutable: training and attacks return new models. `lineage` carries
    human-readable provenance notes and is excluded from the hash.
    """

    layers: tuple[L.Layer, ...]
    input_shape: tuple[int, ...]
    num_classes: int
    lineage: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.num_classes < 1:
            raise ValueError(f"num_classes must be positive, got {self.num_classes}")
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, "lineage", tuple(self.lineage))
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            try:
                shape = L.output_shape(layer, shape)
            except ShapeMismatchError as exc:
                raise ShapeMismatchError(f"layer {i} ({layer.kind}): {exc}") from exc
        if shape != (self.num_classes,):
            raise ShapeMismatchError(
                f"model output shape {shape} does not match num_classes={self.num_classes}"
            )

    @cached_property
    def model_hash(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(self.describe(), sort_keys=True).encode())
        for layer in self.layers:
            if layer.weights is not None:
                h.update(layer.weights.array.astype("<f8").tobytes())
            if layer.bias is not None:
                h.update(layer.bias.array.astype("<f8").tobytes())
        return h.hexdigest()

    def describe(self) -> dict:
        """Architecture descriptor (hyperparams and shapes, no weight values)."""
        desc = []
        for layer in self.layers:
            entry: dict = {"kind": layer.kind}
            if layer.weights is not None:
                entry["weight_shape"] = list(layer.weights.shape)
            if layer.bias is not None:
                entry["bias_shape"] = list(layer.bias.shape)
            if layer.stride is not None:
                entry["stride"] = layer.stride
            if layer.padding is not None:
                entry["padding"] = layer.padding
            if layer.pool_size is not None:
                entry["pool_size"] = layer.pool_size
            desc.append(entry)
        return {
            "input_shape": list(self.input_shape),
            "num_classes": self.num_classes,
            "layers": desc,
        }

    def with_lineage(self, note: str) -> "Model":
        return replace(self, lineage=self.lineage + (note,))


@dataclass(frozen=True)
class ActivationTrace:
    """Everything one forward pass recorded: per-layer inputs and the outcome."""

    layer_inputs: tuple[Tensor, ...]
    logits: Tensor
    probabilities: Tensor
    predicted_class: int
    predicted_prob: float


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def forward(model: Model, x: Tensor) -> ActivationTrace:
    """Run one instance through the model, recording the input to every layer.

    Pure: identical model and input give bitwise-identical traces. Predicted
    class is the argmax of the logits with ties broken by lowest index.
    """
    if x.shape != model.input_shape:
        raise ShapeMismatchError(
            f"input shape {x.shape} does not match model input {model.input_shape}"
        )
    if x.array.min() < -1e-9 or x.array.max() > 1 + 1e-9:
        raise ValueError("input pixel values must lie in [0, 1]")
    inputs = []
    a = x.array[None]
    for layer in model.layers:
        inputs.append(Tensor._adopt(a[0].copy()))
        a = L.apply(layer, a)
    logits = a[0]
    probs = softmax(logits)
    r = int(np.argmax(logits))
    return ActivationTrace(
        layer_inputs=tuple(inputs),
        logits=Tensor._adopt(logits.copy()),
        probabilities=Tensor._adopt(probs.copy()),
        predicted_class=r,
        predicted_prob=float(probs[r]),
    )


def logits_batch(model: Model, xs: np.ndarray) -> np.ndarray:
    """Batched forward without trace recording; xs is (B, *input_shape)."""
    a = xs
    for layer in model.layers:
        a = L.apply(layer, a)
    return a


def _glorot(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor._adopt(rng.uniform(-limit, limit, size=shape))


def build_preset_model(
    seed: int, input_shape: tuple[int, int, int] = (1, 28, 28), num_classes: int = 10
) -> Model:
    """Reference desk-scale CNN: conv8-relu-pool2-conv16-relu-pool2-flatten-dense.

    Weights drawn uniform in +/- sqrt(6 / (fan_in + fan_out)) from a generator
    seeded with `seed`; biases start at zero.
    """
    c, h, w = input_shape
    rng = np.random.default_rng(seed)
    w1 = _glorot(rng, (8, c, 3, 3), fan_in=c * 9, fan_out=8 * 9)
    h1, w1_ = (h - 2) // 2, (w - 2) // 2
    w2 = _glorot(rng, (16, 8, 3, 3), fan_in=8 * 9, fan_out=16 * 9)
    h2, w2_ = (h1 - 2) // 2, (w1_ - 2) // 2
    n_flat = 16 * h2 * w2_
    w3 = _glorot(rng, (num_classes, n_flat), fan_in=n_flat, fan_out=num_classes)
    zeros = lambda n: Tensor._adopt(np.zeros(n))
    return Model(
        layers=(
            L.conv(w1, zeros(8)),
            L.relu(),
            L.maxpool(2),
            L.conv(w2, zeros(16)),
            L.relu(),
            L.maxpool(2),
            L.flatten(),
            L.dense(w3, zeros(num_classes)),
        ),
        input_shape=input_shape,
        num_classes=num_classes,
    )
