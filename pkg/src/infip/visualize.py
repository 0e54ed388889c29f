"""Montage images and matplotlib figures for human inspection.

Verification never reads anything produced here; these are side outputs next
to the delimited/JSON results. The colorized variants use the fixed "inferno"
palette.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from infip.fingerprint import FingerprintSet
from infip.pgm import write_pgm

COLORMAP = "inferno"
_PNG_METADATA = {"Software": "infip"}


def fingerprint_montage(
    sets: list[FingerprintSet], columns: int = 8, gap: int = 2, gap_value: int = 96
) -> np.ndarray:
    """Grid of the first `columns` fingerprints of each set, one set per row."""
    if not sets or any(len(s) == 0 for s in sets):
        raise ValueError("montage needs at least one non-empty fingerprint set")
    columns = min(columns, min(len(s) for s in sets))
    h, w = sets[0].fingerprints[0].image.shape
    rows = len(sets)
    out = np.full(
        (rows * h + (rows + 1) * gap, columns * w + (columns + 1) * gap),
        gap_value,
        dtype=np.uint8,
    )
    for r, fset in enumerate(sets):
        for c in range(columns):
            img = fset.fingerprints[c].image
            if img.shape != (h, w):
                raise ValueError(f"fingerprint {c} of set {r} has shape {img.shape}, expected {(h, w)}")
            y = gap + r * (h + gap)
            x = gap + c * (w + gap)
            out[y : y + h, x : x + w] = img
    return out


def write_montage(sets: list[FingerprintSet], path, colorize: bool = False) -> None:
    """Write a montage as PGM, plus a PNG twin when colorizing is requested."""
    grid = fingerprint_montage(sets)
    write_pgm(path, grid)
    if colorize:
        png_path = Path(path).with_suffix(".png")
        plt.imsave(
            png_path, grid, cmap=COLORMAP, vmin=0, vmax=255, metadata=_PNG_METADATA
        )


def plot_sweep(rows: list[dict], param: str, path) -> None:
    """Line plot of mean similarity against the swept parameter, one line per attack."""
    fig, ax = plt.subplots(figsize=(6, 4))
    attacks = sorted({r["attack"] for r in rows})
    for attack in attacks:
        pts = sorted((r["value"], r["assim"]) for r in rows if r["attack"] == attack)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=attack)
    ax.set_xlabel(param)
    ax.set_ylabel("mean SSIM")
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, metadata=_PNG_METADATA)
    plt.close(fig)


def plot_instance_ssim(per_instance: list[float], threshold: float, path) -> None:
    """Per-instance SSIM values with the decision threshold drawn across."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(len(per_instance)), per_instance, ".", markersize=3)
    ax.axhline(threshold, color="red", linestyle="--", label=f"threshold {threshold}")
    ax.set_xlabel("key instance")
    ax.set_ylabel("SSIM")
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, metadata=_PNG_METADATA)
    plt.close(fig)
