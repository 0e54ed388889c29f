"""Command-line pipeline: train, extract, verify, attack, sweep.

Every command is deterministic under --seed: running the same invocation twice
produces byte-identical outputs. Verdicts are findings, not failures, so exit
codes stay 0 unless something operational goes wrong.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from infip import attacks as atk
from infip.datasets import (
    LabeledDataset,
    derive_seed,
    load_dataset_dir,
    make_synthetic_dataset,
)
from infip.fingerprint import (
    extract_fingerprint_set,
    extract_relevance_maps,
    fingerprint_set_from_maps,
    load_fingerprint_set,
    load_key_set,
    save_fingerprint_set,
    save_key_set,
    select_key_instances,
)
from infip.model import build_preset_model
from infip.modelio import load_model, save_model
from infip.similarity import assim, verify
from infip.training import TrainConfig, evaluate, train_sgd
from infip.visualize import plot_instance_ssim, plot_sweep, write_montage

DEFAULT_LAMBDA = 5000.0
DEFAULT_N = 400
DEFAULT_THRESHOLD = 0.85
DEFAULT_TRAIN_SIZE = 1600
DEFAULT_TEST_SIZE = 400
DEFAULT_ATTACK_DATA_SIZE = 1000
DEFAULT_EPOCHS = 8
DEFAULT_LR = 0.05

# Rendered sets whose brightest pixel stays below this are flagged low-visibility.
VISIBILITY_FLOOR = 128


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="infip",
        description="Extract explainability fingerprints from CNN classifiers and "
        "verify model ownership by structural similarity.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the preset model on a dataset")
    _add_data_args(p, train=True)
    p.add_argument("--epochs", type=int, default=DEFAULT_EPOCHS)
    p.add_argument("--lr", type=float, default=DEFAULT_LR)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("extract", help="extract a fingerprint set from a model")
    p.add_argument("--model", required=True, help="INFM model file")
    p.add_argument("--keys", help="existing key-set directory to reuse")
    _add_data_args(p)
    p.add_argument("--n", type=int, help=f"number of key instances (default {DEFAULT_N}, capped)")
    p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output fingerprint directory")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("verify", help="compare two fingerprint sets and decide ownership")
    p.add_argument("original", help="fingerprint directory of the protected model")
    p.add_argument("suspect", help="fingerprint directory of the suspected model")
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--out", required=True, help="report JSON file")
    p.add_argument("--plot", action="store_true", help="also render a per-instance SSIM figure")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("attack", help="derive a modified model with one attack")
    p.add_argument("--model", required=True)
    p.add_argument("--attack", required=True, choices=atk.ATTACK_KINDS)
    p.add_argument("--attack-config", help="JSON file with attack parameters")
    _add_data_args(p)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--prune-rate", type=float)
    p.add_argument("--target-class", type=int)
    p.add_argument("--noise-amplitude", type=float)
    p.add_argument("--trigger-count", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("sweep", help="grid of attacks against lambda or key-set size")
    p.add_argument("--model", required=True)
    _add_data_args(p)
    p.add_argument("--param", required=True, choices=["lambda", "n"])
    p.add_argument("--values", required=True, help="comma-separated parameter values")
    p.add_argument("--attacks", required=True, help="comma-separated subset of none,finetune,prune,overwrite,adaptive")
    p.add_argument("--n", type=int, help="key-set size when sweeping lambda")
    p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--colorize", action="store_true", help="also write palette PNG montages")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_sweep)

    return parser


def _add_data_args(p: argparse.ArgumentParser, train: bool = False) -> None:
    p.add_argument("--dataset", help="directory of PGM images with labels.csv")
    p.add_argument("--synthetic", action="store_true", help="use the built-in synthetic dataset")
    p.add_argument("--data-seed", type=int, help="dataset generation seed (defaults to --seed)")
    if train:
        p.add_argument("--test-dataset", help="held-out directory for metrics")
        p.add_argument("--train-size", type=int, default=DEFAULT_TRAIN_SIZE)
    p.add_argument("--test-size", type=int, default=DEFAULT_TEST_SIZE)
    if not train:
        p.add_argument("--data-size", type=int, default=DEFAULT_ATTACK_DATA_SIZE)


def _data_seed(args) -> int:
    return args.data_seed if args.data_seed is not None else args.seed


def _require_data_source(args, what: str) -> None:
    if not args.dataset and not args.synthetic:
        raise ValueError(f"{what} needs --dataset or --synthetic")


def _synthetic(args, tag: str, size: int) -> LabeledDataset:
    return make_synthetic_dataset(size, _data_seed(args), tag=tag)


def _key_source_dataset(args) -> LabeledDataset:
    """Dataset keys are drawn from: a directory, or the synthetic test split."""
    if args.dataset:
        return load_dataset_dir(args.dataset)
    return _synthetic(args, "test", args.test_size)


def cmd_train(args) -> int:
    _require_data_source(args, "train")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.dataset:
        train_ds = load_dataset_dir(args.dataset)
        test_ds = load_dataset_dir(args.test_dataset) if args.test_dataset else None
    else:
        train_ds = _synthetic(args, "train", args.train_size)
        test_ds = _synthetic(args, "test", args.test_size)

    model = build_preset_model(
        derive_seed(args.seed, "model-init"),
        input_shape=train_ds.images.shape[1:],
        num_classes=train_ds.num_classes,
    )
    cfg = TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=derive_seed(args.seed, "train-order"),
        momentum=args.momentum,
    )
    trained = train_sgd(model, train_ds, cfg)
    save_model(trained, out / "model.infm")

    metrics = {
        "dataset_id": train_ds.dataset_id,
        "epochs": args.epochs,
        "learning_rate": args.lr,
        "seed": args.seed,
        "train_accuracy": evaluate(trained, train_ds),
        "model_hash": trained.model_hash,
    }
    if test_ds is not None:
        metrics["test_accuracy"] = evaluate(trained, test_ds)
    _write_json(out / "metrics.json", metrics)
    acc = metrics.get("test_accuracy", metrics["train_accuracy"])
    print(f"trained model {trained.model_hash[:12]} accuracy={acc:.4f} -> {out / 'model.infm'}")
    return 0


def cmd_extract(args) -> int:
    model = load_model(args.model)
    out = Path(args.out)

    if args.keys:
        keys = load_key_set(args.keys)
    else:
        _require_data_source(args, "extract without --keys")
        dataset = _key_source_dataset(args)
        n = args.n
        if n is None:
            n = min(DEFAULT_N, len(dataset))
            if n < DEFAULT_N:
                print(
                    f"warning: key-set size scaled down to {n} (dataset has only "
                    f"{len(dataset)} images)",
                    file=sys.stderr,
                )
        keys = select_key_instances(dataset, n, args.seed)
        if not keys.stratified:
            print("warning: stratified selection infeasible, fell back to global uniform",
                  file=sys.stderr)

    fps = extract_fingerprint_set(model, keys, args.lam)
    save_fingerprint_set(fps, out)
    save_key_set(keys, out / "keys")

    max_pixel = max(int(fp.image.max()) for fp in fps.fingerprints)
    degenerate = sum(fp.degenerate for fp in fps.fingerprints)
    flags = []
    if max_pixel < VISIBILITY_FLOOR:
        flags.append("low visibility")
    if degenerate:
        flags.append(f"{degenerate} degenerate")
    note = f" [{'; '.join(flags)}]" if flags else ""
    print(
        f"extracted {len(fps)} fingerprints (lambda={args.lam:g}, max pixel={max_pixel}) "
        f"from model {fps.model_hash[:12]} -> {out}{note}"
    )
    return 0


def cmd_verify(args) -> int:
    original = load_fingerprint_set(args.original)
    suspect = load_fingerprint_set(args.suspect)
    report = verify(original, suspect, args.threshold)

    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.to_json())
    if args.plot:
        plot_instance_ssim(
            list(report.per_instance_ssim), report.threshold, out.with_suffix(".png")
        )

    print(f"instances : {len(report.per_instance_ssim)}")
    print(f"mean SSIM : {report.assim:.6f}")
    print(f"threshold : {report.threshold:g}")
    print(f"decision  : {report.decision}")
    for note in report.mismatch_notes:
        print(f"note      : {note}")
    return 0


def _attack_spec(args) -> atk.AttackSpec:
    params: dict = {}
    if args.attack_config:
        loaded = json.loads(Path(args.attack_config).read_text())
        if not isinstance(loaded, dict):
            raise ValueError(f"{args.attack_config}: attack config must be a JSON object")
        params.update(loaded)
    for name in ("epochs", "lr", "prune_rate", "target_class", "noise_amplitude", "trigger_count"):
        value = getattr(args, name)
        if value is not None:
            params["learning_rate" if name == "lr" else name] = value
    params.pop("kind", None)
    params.setdefault("seed", derive_seed(args.seed, f"attack-{args.attack}"))
    try:
        return atk.AttackSpec(kind=args.attack, **params)
    except TypeError as exc:
        raise ValueError(f"invalid attack parameter: {exc}") from exc


def cmd_attack(args) -> int:
    model = load_model(args.model)
    spec = _attack_spec(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    data = None
    if spec.kind != "prune":
        _require_data_source(args, f"attack {spec.kind}")
        data = (
            load_dataset_dir(args.dataset)
            if args.dataset
            else _synthetic(args, "attacker", args.data_size)
        )

    metrics: dict = {"attack": spec.kind, "seed": args.seed}
    if spec.kind == "finetune":
        attacked = atk.fine_tune_attack(model, data, spec)
        metrics.update(epochs=spec.epochs, learning_rate=spec.learning_rate)
    elif spec.kind == "prune":
        attacked = atk.prune_attack(model, spec.prune_rate)
        metrics.update(prune_rate=spec.prune_rate, zero_weights=atk.count_zero_weights(attacked))
    elif spec.kind == "overwrite":
        attacked, wa = atk.watermark_overwrite_attack(model, data, spec)
        metrics.update(
            epochs=spec.epochs,
            target_class=spec.target_class,
            noise_amplitude=spec.noise_amplitude,
            watermark_accuracy=wa,
        )
    else:
        attacked = atk.adaptive_attack(model, data, spec)
        metrics.update(prune_rate=spec.prune_rate, epochs=spec.epochs)

    if args.synthetic:
        metrics["test_accuracy"] = evaluate(attacked, _synthetic(args, "test", args.test_size))

    save_model(attacked, out / "model.infm")
    metrics["model_hash"] = attacked.model_hash
    _write_json(out / "metrics.json", metrics)
    print(f"{spec.kind} attack -> {out / 'model.infm'} (hash {attacked.model_hash[:12]})")
    return 0


def cmd_sweep(args) -> int:
    model = load_model(args.model)
    _require_data_source(args, "sweep")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    attacks = [a.strip() for a in args.attacks.split(",") if a.strip()]
    raw_values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not attacks or not raw_values:
        raise ValueError("sweep needs at least one attack and one parameter value")
    known = ("none",) + atk.ATTACK_KINDS
    for a in attacks:
        if a not in known:
            raise ValueError(f"unknown attack {a!r}, expected one of {known}")
    if args.param == "lambda":
        values = [float(v) for v in raw_values]
    else:
        values = sorted(int(v) for v in raw_values)

    key_data = _key_source_dataset(args)
    n_max = max(values) if args.param == "n" else (args.n or min(DEFAULT_N, len(key_data)))
    keys = select_key_instances(key_data, n_max, args.seed)

    models = {"none": model}
    for kind in attacks:
        if kind == "none":
            continue
        spec = atk.AttackSpec(kind=kind, seed=derive_seed(args.seed, f"attack-{kind}"))
        if kind == "prune":
            models[kind] = atk.prune_attack(model, spec.prune_rate)
        else:
            data = (
                load_dataset_dir(args.dataset)
                if args.dataset
                else _synthetic(args, "attacker", args.data_size)
            )
            if kind == "finetune":
                models[kind] = atk.fine_tune_attack(model, data, spec)
            elif kind == "overwrite":
                models[kind], _ = atk.watermark_overwrite_attack(model, data, spec)
            else:
                models[kind] = atk.adaptive_attack(model, data, spec)

    base_maps = extract_relevance_maps(model, keys)
    rows = []
    for kind in attacks:
        attacked_maps = (
            base_maps if kind == "none" else extract_relevance_maps(models[kind], keys)
        )
        for value in values:
            if args.param == "lambda":
                sub_keys, lam = keys, value
                s = fingerprint_set_from_maps(base_maps, sub_keys, model.model_hash, lam)
                s2 = fingerprint_set_from_maps(attacked_maps, sub_keys, models[kind].model_hash, lam)
            else:
                sub_keys, lam = keys.prefix(int(value)), args.lam
                s = fingerprint_set_from_maps(
                    base_maps[: int(value)], sub_keys, model.model_hash, lam
                )
                s2 = fingerprint_set_from_maps(
                    attacked_maps[: int(value)], sub_keys, models[kind].model_hash, lam
                )
            rows.append({"attack": kind, "param": args.param, "value": value, "assim": assim(s, s2)})
            cell = f"{args.param}{value:g}" if args.param == "lambda" else f"n{value}"
            write_montage([s, s2], out / f"montage_{kind}_{cell}.pgm", colorize=args.colorize)

    with open(out / "sweep.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["attack", "param", "value", "assim"])
        for row in rows:
            writer.writerow([row["attack"], row["param"], f"{row['value']:g}", f"{row['assim']:.6f}"])
    plot_sweep(rows, args.param, out / f"sweep_{args.param}.png")

    print(f"swept {len(rows)} cells -> {out / 'sweep.csv'}")
    return 0


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


if __name__ == "__main__":
    sys.exit(main())
