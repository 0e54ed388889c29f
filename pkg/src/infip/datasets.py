"""Labeled image datasets: the seeded synthetic generator and PGM directory I/O.

All images are single-channel float64 in [0, 1], quantized to the 8-bit grid
(k/255) at load or generation time so that PGM persistence round-trips exactly.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from infip.pgm import PgmError, read_pgm, write_pgm


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledDataset:
    images: np.ndarray  # (n, 1, H, W) float64 in [0, 1], 8-bit quantized
    labels: np.ndarray  # (n,) int64
    ids: tuple[str, ...]
    num_classes: int
    dataset_id: str

    def __post_init__(self):
        images, labels = self.images, self.labels
        if images.ndim != 4 or images.shape[0] != len(labels) or len(self.ids) != len(labels):
            raise DatasetError(
                f"inconsistent dataset: images {images.shape}, "
                f"{len(labels)} labels, {len(self.ids)} ids"
            )
        if len(labels) and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise DatasetError(f"labels out of range [0, {self.num_classes})")
        if images.size and (images.min() < 0 or images.max() > 1):
            raise DatasetError("pixel values must lie in [0, 1]")
        images.flags.writeable = False
        labels.flags.writeable = False

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, indices, suffix: str) -> "LabeledDataset":
        indices = np.asarray(indices)
        return LabeledDataset(
            images=self.images[indices].copy(),
            labels=self.labels[indices].copy(),
            ids=tuple(self.ids[i] for i in indices),
            num_classes=self.num_classes,
            dataset_id=f"{self.dataset_id}/{suffix}",
        )


def quantize(images: np.ndarray) -> np.ndarray:
    """Snap floats in [0, 1] onto the 8-bit grid (k/255)."""
    return np.rint(np.clip(images, 0.0, 1.0) * 255.0) / 255.0


def derive_seed(base: int, label: str) -> int:
    """Stable 64-bit sub-seed for a named stream of randomness."""
    digest = hashlib.sha256(f"{base}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def make_synthetic_dataset(
    n: int, seed: int, num_classes: int = 10, size: int = 28, tag: str = "train"
) -> LabeledDataset:
    """Seeded class-conditional blob images, easily separable by a small CNN.

    Each class is marked by two redundant cues: a constellation of twelve
    small blobs at class-specific ring positions and a class-oriented grating
    with random phase. Random distractor blobs and background noise give
    independently trained models room to weight the evidence differently,
    which keeps their relevance maps distinguishable.
    """
    if n < 1:
        raise DatasetError(f"dataset size must be positive, got {n}")
    if num_classes < 2:
        raise DatasetError(f"need at least 2 classes, got {num_classes}")
    rng = np.random.default_rng(derive_seed(seed, f"synthetic-{tag}"))
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    center = (size - 1) / 2.0

    labels = np.arange(n, dtype=np.int64) % num_classes
    images = np.empty((n, 1, size, size))
    for i in range(n):
        k = labels[i]
        img = np.zeros((size, size))
        for j in range(12):
            angle = 2 * np.pi * (k / num_classes + j / 12)
            ring = size * (0.13 + 0.09 * (j % 4))
            cy = center + ring * np.sin(angle) + rng.uniform(-1.2, 1.2)
            cx = center + ring * np.cos(angle) + rng.uniform(-1.2, 1.2)
            img += 0.7 * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * 0.7**2))
        for _ in range(8):
            cy = rng.uniform(2, size - 3)
            cx = rng.uniform(2, size - 3)
            img += 0.7 * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * 0.7**2))
        grating_angle = np.pi * k / num_classes
        phase = rng.uniform(0, 2 * np.pi)
        d = yy * np.cos(grating_angle) + xx * np.sin(grating_angle)
        img += 0.35 * (0.5 + 0.5 * np.sin(2 * np.pi * d / 4.0 + phase))
        img += rng.uniform(0.0, 0.10, size=(size, size))
        images[i, 0] = img

    order = rng.permutation(n)
    images = quantize(images[order])
    labels = labels[order]
    ids = tuple(f"syn{seed}-{tag}-{i:05d}" for i in range(n))
    return LabeledDataset(
        images=images,
        labels=labels,
        ids=ids,
        num_classes=num_classes,
        dataset_id=f"synthetic(classes={num_classes},size={size},seed={seed},tag={tag},n={n})",
    )


def save_dataset_dir(data: LabeledDataset, directory) -> None:
    """Write a dataset as PGM files plus a labels.csv (filename,label)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if data.images.shape[1] != 1:
        raise DatasetError("only single-channel images can be stored as PGM")
    rows = []
    for i in range(len(data)):
        name = f"img_{i:05d}.pgm"
        write_pgm(directory / name, np.rint(data.images[i, 0] * 255.0).astype(np.uint8))
        rows.append((name, int(data.labels[i])))
    with open(directory / "labels.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["filename", "label"])
        writer.writerows(rows)


def load_dataset_dir(directory, num_classes: int | None = None) -> LabeledDataset:
    """Load a directory of 8-bit PGM images described by labels.csv."""
    directory = Path(directory)
    labels_path = directory / "labels.csv"
    if not labels_path.is_file():
        raise DatasetError(f"{directory}: missing labels.csv")
    entries: list[tuple[str, int]] = []
    with open(labels_path, newline="") as f:
        for row_no, row in enumerate(csv.reader(f)):
            if not row or (row_no == 0 and row[0].strip().lower() == "filename"):
                continue
            if len(row) != 2:
                raise DatasetError(f"{labels_path}: row {row_no + 1} is not 'filename,label'")
            try:
                entries.append((row[0].strip(), int(row[1])))
            except ValueError as exc:
                raise DatasetError(f"{labels_path}: bad label in row {row_no + 1}") from exc
    if not entries:
        raise DatasetError(f"{labels_path}: no labeled images")

    images, labels, ids = [], [], []
    shape = None
    for name, label in entries:
        try:
            raw, maxval = read_pgm(directory / name)
        except FileNotFoundError:
            raise DatasetError(f"{directory}: labels.csv names missing file {name}") from None
        except PgmError as exc:
            raise DatasetError(str(exc)) from exc
        if shape is None:
            shape = raw.shape
        elif raw.shape != shape:
            raise DatasetError(f"{name}: shape {raw.shape} differs from first image {shape}")
        images.append(quantize(raw.astype(np.float64) / maxval))
        labels.append(label)
        ids.append(name)

    labels_arr = np.asarray(labels, dtype=np.int64)
    if labels_arr.min() < 0:
        raise DatasetError("labels must be non-negative")
    nc = num_classes if num_classes is not None else int(labels_arr.max()) + 1
    return LabeledDataset(
        images=np.stack(images)[:, None, :, :],
        labels=labels_arr,
        ids=tuple(ids),
        num_classes=nc,
        dataset_id=f"dir({directory.name},n={len(ids)})",
    )


def concat_datasets(a: LabeledDataset, b: LabeledDataset, dataset_id: str) -> LabeledDataset:
    if a.images.shape[1:] != b.images.shape[1:] or a.num_classes != b.num_classes:
        raise DatasetError("datasets are not compatible for concatenation")
    return LabeledDataset(
        images=np.concatenate([a.images, b.images]),
        labels=np.concatenate([a.labels, b.labels]),
        ids=a.ids + b.ids,
        num_classes=a.num_classes,
        dataset_id=dataset_id,
    )
