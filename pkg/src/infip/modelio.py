"""Model persistence in the INFM binary format.

Layout: magic "INFM", format version (u16 LE), header length (u32 LE), header
JSON (architecture descriptor plus lineage notes), the weight and bias values
of each parameterized layer as little-endian float64 in layer order, and a
trailing SHA-256 digest of everything before it.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from infip import layers as L
from infip.model import Model
from infip.tensor import Tensor

MAGIC = b"INFM"
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    """File is not a well-formed INFM model."""


class ModelVersionError(ModelFormatError):
    """File uses a format version this toolkit does not support."""


class ModelCorruptError(ModelFormatError):
    """File is truncated or its content digest does not match."""


def save_model(model: Model, path) -> None:
    header = model.describe()
    header["lineage"] = list(model.lineage)
    header_bytes = json.dumps(header, sort_keys=True).encode()

    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<H", FORMAT_VERSION)
    blob += struct.pack("<I", len(header_bytes))
    blob += header_bytes
    for layer in model.layers:
        if layer.weights is not None:
            blob += layer.weights.array.astype("<f8").tobytes()
        if layer.bias is not None:
            blob += layer.bias.array.astype("<f8").tobytes()
    blob += hashlib.sha256(blob).digest()
    Path(path).write_bytes(bytes(blob))


def load_model(path) -> Model:
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != MAGIC:
        raise ModelFormatError(f"{path}: missing INFM magic bytes")
    if len(data) < 4 + 2 + 4 + 32:
        raise ModelCorruptError(f"{path}: file truncated")
    (version,) = struct.unpack_from("<H", data, 4)
    if version > FORMAT_VERSION:
        raise ModelVersionError(
            f"{path}: file format version {version}, this toolkit supports up to {FORMAT_VERSION}"
        )

    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ModelCorruptError(f"{path}: content digest mismatch (file corrupted)")

    (header_len,) = struct.unpack_from("<I", data, 6)
    header_start = 10
    header_end = header_start + header_len
    if header_end > len(body):
        raise ModelCorruptError(f"{path}: file truncated")
    try:
        header = json.loads(data[header_start:header_end].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"{path}: malformed header JSON") from exc

    try:
        layer_descs = header["layers"]
        input_shape = tuple(header["input_shape"])
        num_classes = int(header["num_classes"])
        lineage = tuple(header.get("lineage", []))
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"{path}: header missing required fields") from exc

    pos = header_end
    layers = []
    for desc in layer_descs:
        kind = desc.get("kind")
        weights = bias = None
        if "weight_shape" in desc:
            weights, pos = _read_tensor(body, pos, desc["weight_shape"], path)
        if "bias_shape" in desc:
            bias, pos = _read_tensor(body, pos, desc["bias_shape"], path)
        try:
            if kind == L.DENSE:
                layers.append(L.dense(weights, bias))
            elif kind == L.CONV2D:
                layers.append(
                    L.conv(weights, bias, stride=desc.get("stride", 1), padding=desc.get("padding", 0))
                )
            elif kind == L.RELU:
                layers.append(L.relu())
            elif kind == L.MAXPOOL2D:
                layers.append(L.maxpool(desc.get("pool_size", 2), desc.get("stride")))
            elif kind == L.AVGPOOL2D:
                layers.append(L.avgpool(desc.get("pool_size", 2), desc.get("stride")))
            elif kind == L.FLATTEN:
                layers.append(L.flatten())
            else:
                raise ModelFormatError(f"{path}: unknown layer kind {kind!r}")
        except ValueError as exc:
            if isinstance(exc, ModelFormatError):
                raise
            raise ModelFormatError(f"{path}: invalid layer descriptor: {exc}") from exc
    if pos != len(body):
        raise ModelCorruptError(f"{path}: {len(body) - pos} unexpected trailing bytes")

    return Model(
        layers=tuple(layers),
        input_shape=input_shape,
        num_classes=num_classes,
        lineage=lineage,
    )


def _read_tensor(body: bytes, pos: int, shape, path) -> tuple[Tensor, int]:
    shape = tuple(int(d) for d in shape)
    count = int(np.prod(shape))
    end = pos + count * 8
    if end > len(body):
        raise ModelCorruptError(f"{path}: file truncated inside weight data")
    arr = np.frombuffer(body, dtype="<f8", count=count, offset=pos).reshape(shape)
    return Tensor._adopt(arr.astype(np.float64)), end
