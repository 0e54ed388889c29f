"""Structural similarity of fingerprints and the ownership decision rule.

SSIM here is the single-window, whole-image form: pixels are normalized to
[0, 1], means, standard deviations, and covariance are taken over the full
image with the population (1/M) convention, and the stabilizing constants are
c1 = 0.0001 and c2 = 0.0009. A suspect set whose average SSIM against the
original set reaches the threshold is declared pirated (inclusive boundary).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from infip.fingerprint import Fingerprint, FingerprintSet
from infip.tensor import ShapeMismatchError

C1 = 0.0001
C2 = 0.0009

REPORT_SCHEMA_VERSION = 1
TOOLKIT_VERSION = "0.1.0"

DECISION_PIRATED = "pirated"
DECISION_NOT_PIRATED = "not_pirated"


class KeySetMismatchError(ValueError):
    """The two fingerprint sets were not extracted from the same key instances."""


def ssim_images(x: np.ndarray, y: np.ndarray) -> float:
    """SSIM between two equally sized 8-bit grayscale images."""
    if x.shape != y.shape:
        raise ShapeMismatchError(f"image dimensions differ: {x.shape} vs {y.shape}")
    a = x.astype(np.float64) / 255.0
    b = y.astype(np.float64) / 255.0
    mu_a = a.mean()
    mu_b = b.mean()
    da = a - mu_a
    db = b - mu_b
    var_a = np.mean(da * da)
    var_b = np.mean(db * db)
    cov = np.mean(da * db)
    num = (2.0 * mu_a * mu_b + C1) * (2.0 * cov + C2)
    den = (mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2)
    return float(num / den)


def ssim(a: Fingerprint, b: Fingerprint) -> float:
    return ssim_images(a.image, b.image)


def _check_comparable(s: FingerprintSet, s_prime: FingerprintSet) -> None:
    if len(s) != len(s_prime):
        raise KeySetMismatchError(f"fingerprint set sizes differ: {len(s)} vs {len(s_prime)}")
    if s.key_set_hash != s_prime.key_set_hash:
        raise KeySetMismatchError(
            "fingerprint sets were extracted from different key instance sets "
            f"({s.key_set_hash[:12]}... vs {s_prime.key_set_hash[:12]}...)"
        )


def assim(s: FingerprintSet, s_prime: FingerprintSet) -> float:
    """Mean of the positional SSIMs between two sets over one key instance set."""
    _check_comparable(s, s_prime)
    values = [ssim(a, b) for a, b in zip(s.fingerprints, s_prime.fingerprints)]
    return sum(values) / len(values)


@dataclass(frozen=True)
class SetProvenance:
    model_hash: str
    key_set_hash: str
    lam: float


@dataclass(frozen=True)
class VerificationReport:
    per_instance_ssim: tuple[float, ...]
    assim: float
    threshold: float
    decision: str
    original: SetProvenance
    suspect: SetProvenance
    mismatch_notes: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "toolkit_version": TOOLKIT_VERSION,
            "per_instance_ssim": list(self.per_instance_ssim),
            "assim": self.assim,
            "threshold": self.threshold,
            "decision": self.decision,
            "original": {
                "model_hash": self.original.model_hash,
                "key_set_hash": self.original.key_set_hash,
                "lambda": self.original.lam,
            },
            "suspect": {
                "model_hash": self.suspect.model_hash,
                "key_set_hash": self.suspect.key_set_hash,
                "lambda": self.suspect.lam,
            },
            "mismatch_notes": list(self.mismatch_notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def verify(s: FingerprintSet, s_prime: FingerprintSet, threshold: float) -> VerificationReport:
    """Apply the ownership decision rule: pirated iff mean SSIM >= threshold."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    _check_comparable(s, s_prime)
    values = tuple(ssim(a, b) for a, b in zip(s.fingerprints, s_prime.fingerprints))
    mean = sum(values) / len(values)

    notes = []
    deg_s = [i for i, fp in enumerate(s.fingerprints) if fp.degenerate]
    deg_p = [i for i, fp in enumerate(s_prime.fingerprints) if fp.degenerate]
    if deg_s:
        notes.append(f"degenerate fingerprints in original set at indices {deg_s}")
    if deg_p:
        notes.append(f"degenerate fingerprints in suspect set at indices {deg_p}")
    if s.lam != s_prime.lam:
        notes.append(f"magnification differs between sets: {s.lam} vs {s_prime.lam}")

    return VerificationReport(
        per_instance_ssim=values,
        assim=mean,
        threshold=threshold,
        decision=DECISION_PIRATED if mean >= threshold else DECISION_NOT_PIRATED,
        original=SetProvenance(s.model_hash, s.key_set_hash, s.lam),
        suspect=SetProvenance(s_prime.model_hash, s_prime.key_set_hash, s_prime.lam),
        mismatch_notes=tuple(notes),
    )


def load_report_schema() -> dict:
    return json.loads(resources.files("infip").joinpath("data/report_schema.json").read_text())


def validate_report_dict(doc: dict, schema: dict | None = None) -> None:
    """Check a report dict against the shipped schema (minimal JSON-Schema subset)."""
    if schema is None:
        schema = load_report_schema()
    _validate_node(doc, schema, "$")


_TYPES = {
    "object": dict,
    "array": list,
    "string": str,
    "number": (int, float),
    "integer": int,
    "boolean": bool,
}


def _validate_node(value, schema: dict, path: str) -> None:
    expected = schema.get("type")
    if expected is not None:
        py_type = _TYPES[expected]
        if expected == "number" and isinstance(value, bool):
            raise ValueError(f"{path}: expected number, got bool")
        if not isinstance(value, py_type) or (expected == "integer" and isinstance(value, bool)):
            raise ValueError(f"{path}: expected {expected}, got {type(value).__name__}")
    if "enum" in schema and value not in schema["enum"]:
        raise ValueError(f"{path}: {value!r} not in {schema['enum']}")
    if expected == "object":
        for name in schema.get("required", []):
            if name not in value:
                raise ValueError(f"{path}: missing required property {name!r}")
        for name, sub in schema.get("properties", {}).items():
            if name in value:
                _validate_node(value[name], sub, f"{path}.{name}")
    if expected == "array" and "items" in schema:
        for i, item in enumerate(value):
            _validate_node(item, schema["items"], f"{path}[{i}]")
