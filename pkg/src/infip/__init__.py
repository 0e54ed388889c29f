"""Explainability-based fingerprinting and ownership verification for small CNNs."""

from infip.attacks import (
    AttackSpec,
    adaptive_attack,
    fine_tune_attack,
    prune_attack,
    watermark_overwrite_attack,
)
from infip.datasets import LabeledDataset, load_dataset_dir, make_synthetic_dataset
from infip.dtd import RelevanceMap, dtd_extract
from infip.fingerprint import (
    Fingerprint,
    FingerprintSet,
    KeyInstanceSet,
    extract_fingerprint_set,
    load_fingerprint_set,
    load_key_set,
    render_fingerprint,
    save_fingerprint_set,
    save_key_set,
    select_key_instances,
)
from infip.model import ActivationTrace, Model, build_preset_model, forward
from infip.modelio import load_model, save_model
from infip.similarity import VerificationReport, assim, ssim, verify
from infip.tensor import Tensor, ShapeMismatchError
from infip.training import TrainConfig, evaluate, train_sgd

__version__ = "0.1.0"

__all__ = [
    "ActivationTrace",
    "AttackSpec",
    "Fingerprint",
    "FingerprintSet",
    "KeyInstanceSet",
    "LabeledDataset",
    "Model",
    "RelevanceMap",
    "ShapeMismatchError",
    "Tensor",
    "TrainConfig",
    "VerificationReport",
    "adaptive_attack",
    "assim",
    "build_preset_model",
    "dtd_extract",
    "evaluate",
    "extract_fingerprint_set",
    "fine_tune_attack",
    "forward",
    "load_dataset_dir",
    "load_fingerprint_set",
    "load_key_set",
    "load_model",
    "make_synthetic_dataset",
    "prune_attack",
    "render_fingerprint",
    "save_fingerprint_set",
    "save_key_set",
    "save_model",
    "select_key_instances",
    "ssim",
    "train_sgd",
    "verify",
    "watermark_overwrite_attack",
]
