"""Binary PGM (P5) reading and writing for 8-bit grayscale images."""

from __future__ import annotations

from pathlib import Path

import numpy as np


class PgmError(ValueError):
    pass


def write_pgm(path, image: np.ndarray) -> None:
    """Write a 2-D uint8 array as binary PGM with maxval 255."""
    image = np.asarray(image)
    if image.ndim != 2 or image.dtype != np.uint8:
        raise PgmError(f"expected 2-D uint8 image, got {image.dtype} {image.shape}")
    h, w = image.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(image.tobytes())


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Read a binary PGM; returns (uint8 array of shape (H, W), maxval).

    Accepts comment lines and arbitrary whitespace in the header. Only
    single-byte sample depth (maxval <= 255) is supported.
    """
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise PgmError(f"{path}: not a binary PGM (P5) file")
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            eol = data.find(b"\n", pos)
            if eol < 0:
                raise PgmError(f"{path}: truncated header")
            pos = eol + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise PgmError(f"{path}: truncated header")
        fields.append(data[start:pos])
    try:
        w, h, maxval = (int(f) for f in fields)
    except ValueError as exc:
        raise PgmError(f"{path}: malformed header") from exc
    if w < 1 or h < 1:
        raise PgmError(f"{path}: invalid dimensions {w}x{h}")
    if not 1 <= maxval <= 255:
        raise PgmError(f"{path}: unsupported maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    raster = data[pos : pos + w * h]
    if len(raster) != w * h:
        raise PgmError(f"{path}: raster truncated ({len(raster)} of {w * h} bytes)")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w).copy(), maxval
