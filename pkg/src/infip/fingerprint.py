"""Key-instance selection, fingerprint rendering, and fingerprint-set storage.

A fingerprint set is N 8-bit grayscale images, one per key instance, rendered
from relevance maps by pixel = clamp(round(lambda * value), 0, 255). Sets are
persisted as a directory of PGM files plus a schema-versioned manifest whose
digests make round-trips and tampering checkable.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from infip.datasets import LabeledDataset, derive_seed
from infip.dtd import RelevanceMap, dtd_extract
from infip.model import Model, forward
from infip.pgm import read_pgm, write_pgm
from infip.tensor import Tensor

MANIFEST_SCHEMA_VERSION = 1


class FingerprintDirError(ValueError):
    """A fingerprint or key-set directory is missing files or fails its digests."""


def worker_count() -> int:
    """Bounded worker pool size; override with the INFIP_THREADS env var."""
    env = os.environ.get("INFIP_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"INFIP_THREADS must be an integer, got {env!r}") from None
    return min(4, os.cpu_count() or 1)


@dataclass(frozen=True)
class KeyInstanceSet:
    """The N probe images both parties must share, with selection metadata."""

    instances: tuple[Tensor, ...]
    source_ids: tuple[str, ...]
    seed: int
    dataset_id: str
    stratified: bool = True

    def __post_init__(self):
        if not self.instances:
            raise ValueError("a key instance set needs at least one instance")
        if len(self.instances) != len(self.source_ids):
            raise ValueError("instances and source_ids differ in length")
        shape = self.instances[0].shape
        if any(t.shape != shape for t in self.instances):
            raise ValueError("all key instances must share one input shape")

    def __len__(self) -> int:
        return len(self.instances)

    @property
    def set_hash(self) -> str:
        h = hashlib.sha256()
        for sid, t in zip(self.source_ids, self.instances):
            h.update(sid.encode())
            h.update(b"\x00")
            h.update(np.rint(t.array * 255.0).astype(np.uint8).tobytes())
        return h.hexdigest()

    def prefix(self, n: int) -> "KeyInstanceSet":
        """First n instances; selection with the same seed is prefix-stable."""
        if not 1 <= n <= len(self):
            raise ValueError(f"prefix length {n} out of range 1..{len(self)}")
        return KeyInstanceSet(
            instances=self.instances[:n],
            source_ids=self.source_ids[:n],
            seed=self.seed,
            dataset_id=self.dataset_id,
            stratified=self.stratified,
        )


@dataclass(frozen=True)
class Fingerprint:
    """One rendered 8-bit fingerprint image."""

    image: np.ndarray
    instance_id: str
    predicted_class: int
    degenerate: bool

    def __post_init__(self):
        if self.image.ndim != 2 or self.image.dtype != np.uint8:
            raise ValueError(
                f"fingerprint image must be 2-D uint8, got {self.image.dtype} {self.image.shape}"
            )
        self.image.flags.writeable = False


@dataclass(frozen=True)
class FingerprintSet:
    fingerprints: tuple[Fingerprint, ...]
    model_hash: str
    key_set_hash: str
    lam: float

    def __post_init__(self):
        if not self.fingerprints:
            raise ValueError("a fingerprint set needs at least one fingerprint")
        if not self.model_hash or not self.key_set_hash:
            raise ValueError("fingerprint set requires model and key-set provenance hashes")

    def __len__(self) -> int:
        return len(self.fingerprints)


def select_key_instances(dataset: LabeledDataset, n: int, seed: int) -> KeyInstanceSet:
    """Stratified uniform selection of n key instances, seeded and deterministic.

    Per-class counts are as equal as n allows; with one seed, smaller n yields
    a prefix of larger n. If some class cannot supply its quota the selection
    falls back to global uniform sampling and flags the set unstratified.
    """
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if n > len(dataset):
        raise ValueError(f"n={n} exceeds dataset size {len(dataset)}")
    rng = np.random.default_rng(derive_seed(seed, "key-selection"))
    classes = np.unique(dataset.labels)
    shuffled = {int(k): rng.permutation(np.flatnonzero(dataset.labels == k)) for k in classes}
    visit_order = [int(k) for k in rng.permutation(classes)]

    base, extra = divmod(n, len(classes))
    quota = {k: base + (1 if pos < extra else 0) for pos, k in enumerate(visit_order)}
    stratified = all(quota[k] <= len(shuffled[k]) for k in visit_order)
    if stratified:
        chosen = []
        for rnd in range(base + (1 if extra else 0)):
            for k in visit_order:
                if rnd < quota[k]:
                    chosen.append(int(shuffled[k][rnd]))
    else:
        chosen = [int(i) for i in rng.permutation(len(dataset))[:n]]

    return KeyInstanceSet(
        instances=tuple(Tensor._adopt(dataset.images[i].copy()) for i in chosen),
        source_ids=tuple(dataset.ids[i] for i in chosen),
        seed=seed,
        dataset_id=dataset.dataset_id,
        stratified=stratified,
    )


def render_fingerprint(map: RelevanceMap, lam: float, instance_id: str = "") -> Fingerprint:
    """Render a relevance map to 8 bits: pixel = clamp(round(lam * value), 0, 255)."""
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    pixels = np.clip(np.rint(lam * map.values.array), 0, 255).astype(np.uint8)
    return Fingerprint(
        image=pixels,
        instance_id=instance_id,
        predicted_class=map.root_class,
        degenerate=map.degenerate,
    )


def extract_relevance_maps(
    model: Model, keys: KeyInstanceSet, workers: int | None = None
) -> list[RelevanceMap]:
    """Relevance map of every key instance; instances run in parallel."""

    def one(x: Tensor) -> RelevanceMap:
        return dtd_extract(model, x, forward(model, x))

    workers = workers or worker_count()
    if workers == 1:
        return [one(x) for x in keys.instances]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, keys.instances))


def extract_fingerprint_set(
    model: Model, keys: KeyInstanceSet, lam: float, workers: int | None = None
) -> FingerprintSet:
    """Forward, decompose, and render every key instance against `model`."""
    if keys.instances[0].shape != model.input_shape:
        raise ValueError(
            f"key instances have shape {keys.instances[0].shape}, "
            f"model expects {model.input_shape}"
        )
    maps = extract_relevance_maps(model, keys, workers)
    return fingerprint_set_from_maps(maps, keys, model.model_hash, lam)


def fingerprint_set_from_maps(
    maps, keys: KeyInstanceSet, model_hash: str, lam: float
) -> FingerprintSet:
    fingerprints = tuple(
        render_fingerprint(m, lam, instance_id=sid) for m, sid in zip(maps, keys.source_ids)
    )
    return FingerprintSet(
        fingerprints=fingerprints,
        model_hash=model_hash,
        key_set_hash=keys.set_hash,
        lam=lam,
    )


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(path: Path, payload: dict) -> None:
    payload = {"schema_version": MANIFEST_SCHEMA_VERSION, **payload}
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _read_manifest(directory: Path, kind: str) -> dict:
    path = directory / "manifest.json"
    if not path.is_file():
        raise FingerprintDirError(f"{directory}: missing manifest.json")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FingerprintDirError(f"{path}: malformed JSON") from exc
    version = manifest.get("schema_version")
    if version != MANIFEST_SCHEMA_VERSION:
        raise FingerprintDirError(
            f"{path}: schema version {version}, expected {MANIFEST_SCHEMA_VERSION}"
        )
    if manifest.get("kind") != kind:
        raise FingerprintDirError(f"{path}: expected a {kind} manifest, got {manifest.get('kind')!r}")
    return manifest


def save_fingerprint_set(fps: FingerprintSet, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, fp in enumerate(fps.fingerprints):
        name = f"fp_{i:04d}.pgm"
        write_pgm(directory / name, fp.image)
        entries.append(
            {
                "index": i,
                "instance_id": fp.instance_id,
                "predicted_class": fp.predicted_class,
                "degenerate": fp.degenerate,
                "image_digest": _sha256_file(directory / name),
            }
        )
    _write_manifest(
        directory / "manifest.json",
        {
            "kind": "fingerprint_set",
            "model_hash": fps.model_hash,
            "key_set_hash": fps.key_set_hash,
            "lambda": fps.lam,
            "entries": entries,
        },
    )


def load_fingerprint_set(directory) -> FingerprintSet:
    directory = Path(directory)
    manifest = _read_manifest(directory, "fingerprint_set")
    fingerprints = []
    for i, entry in enumerate(manifest["entries"]):
        if entry["index"] != i:
            raise FingerprintDirError(f"{directory}: manifest entries out of order at {i}")
        name = f"fp_{i:04d}.pgm"
        path = directory / name
        if not path.is_file():
            raise FingerprintDirError(f"{directory}: manifest lists missing file {name}")
        if _sha256_file(path) != entry["image_digest"]:
            raise FingerprintDirError(f"{directory}: digest mismatch for {name}")
        image, _ = read_pgm(path)
        fingerprints.append(
            Fingerprint(
                image=image,
                instance_id=entry["instance_id"],
                predicted_class=int(entry["predicted_class"]),
                degenerate=bool(entry["degenerate"]),
            )
        )
    return FingerprintSet(
        fingerprints=tuple(fingerprints),
        model_hash=manifest["model_hash"],
        key_set_hash=manifest["key_set_hash"],
        lam=float(manifest["lambda"]),
    )


def save_key_set(keys: KeyInstanceSet, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    shape = keys.instances[0].shape
    if len(shape) != 3 or shape[0] != 1:
        raise ValueError(f"only single-channel key instances can be saved as PGM, got {shape}")
    entries = []
    for i, (sid, t) in enumerate(zip(keys.source_ids, keys.instances)):
        name = f"key_{i:04d}.pgm"
        write_pgm(directory / name, np.rint(t.array[0] * 255.0).astype(np.uint8))
        entries.append({"index": i, "instance_id": sid, "image_digest": _sha256_file(directory / name)})
    _write_manifest(
        directory / "manifest.json",
        {
            "kind": "key_set",
            "seed": keys.seed,
            "dataset_id": keys.dataset_id,
            "stratified": keys.stratified,
            "set_hash": keys.set_hash,
            "entries": entries,
        },
    )


def load_key_set(directory) -> KeyInstanceSet:
    directory = Path(directory)
    manifest = _read_manifest(directory, "key_set")
    instances, ids = [], []
    for i, entry in enumerate(manifest["entries"]):
        if entry["index"] != i:
            raise FingerprintDirError(f"{directory}: manifest entries out of order at {i}")
        name = f"key_{i:04d}.pgm"
        path = directory / name
        if not path.is_file():
            raise FingerprintDirError(f"{directory}: manifest lists missing file {name}")
        if _sha256_file(path) != entry["image_digest"]:
            raise FingerprintDirError(f"{directory}: digest mismatch for {name}")
        image, maxval = read_pgm(path)
        instances.append(Tensor._adopt(image[None].astype(np.float64) / maxval))
        ids.append(entry["instance_id"])
    keys = KeyInstanceSet(
        instances=tuple(instances),
        source_ids=tuple(ids),
        seed=int(manifest["seed"]),
        dataset_id=manifest["dataset_id"],
        stratified=bool(manifest["stratified"]),
    )
    if keys.set_hash != manifest["set_hash"]:
        raise FingerprintDirError(f"{directory}: key-set hash does not match its manifest")
    return keys
