"""Model-modification attacks used to probe fingerprint robustness.

All four attacks return a new model (the input is never touched) and are
deterministic given their seed, so robustness experiments are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from infip.datasets import LabeledDataset, concat_datasets
from infip.model import Model, logits_batch
from infip.tensor import Tensor
from infip.training import TrainConfig, train_sgd

ATTACK_KINDS = ("finetune", "prune", "overwrite", "adaptive")

DEFAULT_ATTACK_EPOCHS = 10
DEFAULT_ATTACK_LR = 0.005  # one tenth of the default training rate
DEFAULT_PRUNE_RATE = 0.4
DEFAULT_NOISE_AMPLITUDE = 0.3
DEFAULT_TRIGGER_COUNT = 100


@dataclass(frozen=True)
class AttackSpec:
    kind: str
    epochs: int = DEFAULT_ATTACK_EPOCHS
    learning_rate: float = DEFAULT_ATTACK_LR
    batch_size: int = 32
    momentum: float = 0.9
    prune_rate: float = DEFAULT_PRUNE_RATE
    target_class: int = 0
    noise_amplitude: float = DEFAULT_NOISE_AMPLITUDE
    trigger_count: int = DEFAULT_TRIGGER_COUNT
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}, expected one of {ATTACK_KINDS}")
        if not 0.0 <= self.prune_rate <= 1.0:
            raise ValueError(f"prune rate must be in [0, 1], got {self.prune_rate}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.target_class < 0:
            raise ValueError(f"target class must be >= 0, got {self.target_class}")
        if self.trigger_count < 1:
            raise ValueError(f"trigger count must be positive, got {self.trigger_count}")
        if self.noise_amplitude <= 0:
            raise ValueError(f"noise amplitude must be positive, got {self.noise_amplitude}")

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
            momentum=self.momentum,
        )


def fine_tune_attack(model: Model, data: LabeledDataset, spec: AttackSpec) -> Model:
    """Continue training on the attacker's data at a reduced learning rate."""
    tuned = train_sgd(model, data, spec._train_config())
    return tuned.with_lineage(
        f"finetune(epochs={spec.epochs},lr={spec.learning_rate},seed={spec.seed})"
    )


def prune_attack(model: Model, p: float) -> Model:
    """Global unstructured magnitude pruning.

    Exactly floor(p * total_weight_count) weights with the smallest absolute
    value across all dense/conv layers are set to zero, ties broken by flat
    index in layer order. Biases are untouched.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"prune rate must be in [0, 1], got {p}")
    arrays = [l.weights.array.copy() if l.weights is not None else None for l in model.layers]
    sizes = [a.size if a is not None else 0 for a in arrays]
    total = sum(sizes)
    k = int(np.floor(p * total))
    if k > 0:
        flat = np.concatenate([a.ravel() for a in arrays if a is not None])
        order = np.argsort(np.abs(flat), kind="stable")
        flat[order[:k]] = 0.0
        pos = 0
        for i, a in enumerate(arrays):
            if a is not None:
                arrays[i] = flat[pos : pos + a.size].reshape(a.shape)
                pos += a.size

    new_layers = [
        layer if arr is None else replace(layer, weights=Tensor._adopt(arr))
        for layer, arr in zip(model.layers, arrays)
    ]
    pruned = Model(
        layers=tuple(new_layers),
        input_shape=model.input_shape,
        num_classes=model.num_classes,
        lineage=model.lineage,
    )
    return pruned.with_lineage(f"prune(p={p})")


def make_trigger_pattern(spec: AttackSpec, image_shape: tuple[int, ...]) -> np.ndarray:
    """The one fixed noise pattern shared by all watermark instances."""
    rng = np.random.default_rng(spec.seed)
    return rng.normal(0.0, 1.0, size=image_shape) * spec.noise_amplitude


def apply_trigger(images: np.ndarray, pattern: np.ndarray) -> np.ndarray:
    return np.clip(images + pattern[None], 0.0, 1.0)


def watermark_overwrite_attack(
    model: Model, data: LabeledDataset, spec: AttackSpec
) -> tuple[Model, float]:
    """Embed a noise-trigger watermark on top of the model.

    Trigger instances are clean images plus one fixed seeded noise pattern,
    relabeled to the target class; the model is fine-tuned on clean data plus
    the triggers. Returns the overwritten model and its watermark accuracy on
    held-out trigger instances.
    """
    if spec.target_class >= model.num_classes:
        raise ValueError(
            f"target class {spec.target_class} out of range [0, {model.num_classes})"
        )
    if 2 * spec.trigger_count > len(data):
        raise ValueError(
            f"need at least {2 * spec.trigger_count} images for "
            f"{spec.trigger_count} training and held-out triggers, got {len(data)}"
        )
    rng = np.random.default_rng(spec.seed)
    pattern = make_trigger_pattern(spec, data.images.shape[1:])
    perm = rng.permutation(len(data))
    embed_idx = perm[: spec.trigger_count]
    holdout_idx = perm[spec.trigger_count : 2 * spec.trigger_count]

    trigger_train = LabeledDataset(
        images=apply_trigger(data.images[embed_idx], pattern),
        labels=np.full(len(embed_idx), spec.target_class, dtype=np.int64),
        ids=tuple(f"trigger-{i}" for i in range(len(embed_idx))),
        num_classes=data.num_classes,
        dataset_id=f"{data.dataset_id}/triggers",
    )
    union = concat_datasets(data, trigger_train, f"{data.dataset_id}+triggers")
    attacked = train_sgd(model, union, spec._train_config())
    attacked = attacked.with_lineage(
        f"overwrite(target={spec.target_class},epochs={spec.epochs},"
        f"amplitude={spec.noise_amplitude},seed={spec.seed})"
    )

    holdout = apply_trigger(data.images[holdout_idx], pattern)
    preds = np.argmax(logits_batch(attacked, holdout), axis=1)
    wa = float(np.mean(preds == spec.target_class))
    return attacked, wa


def adaptive_attack(model: Model, data: LabeledDataset, spec: AttackSpec) -> Model:
    """Prune, then fine-tune to recover accuracy: the informed adversary."""
    pruned = prune_attack(model, spec.prune_rate)
    return fine_tune_attack(pruned, data, spec)


def count_zero_weights(model: Model) -> int:
    return sum(
        int((l.weights.array == 0).sum()) for l in model.layers if l.weights is not None
    )
