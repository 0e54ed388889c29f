"""Network layers: construction, shape rules, forward and gradient paths.

A layer is a frozen record; the functions below dispatch on its kind. Forward
and backward work on batched numpy arrays (B, ...) so the same code serves the
public single-instance forward pass and the training loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from infip import _conv
from infip.tensor import ShapeMismatchError, Tensor

DENSE = "dense"
CONV2D = "conv2d"
RELU = "relu"
MAXPOOL2D = "maxpool2d"
AVGPOOL2D = "avgpool2d"
FLATTEN = "flatten"

LAYER_KINDS = (DENSE, CONV2D, RELU, MAXPOOL2D, AVGPOOL2D, FLATTEN)


@dataclass(frozen=True)
class Layer:
    """One network layer; weights/bias/hyperparams are kind-specific."""

    kind: str
    weights: Tensor | None = None
    bias: Tensor | None = None
    stride: int | None = None
    padding: int | None = None
    pool_size: int | None = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")


def dense(weights: Tensor, bias: Tensor | None = None) -> Layer:
    """Fully connected layer; weights are (out_units, in_units)."""
    if len(weights.shape) != 2:
        raise ShapeMismatchError(f"dense weights must be 2-D, got {weights.shape}")
    if bias is not None and bias.shape != (weights.shape[0],):
        raise ShapeMismatchError(
            f"dense bias shape {bias.shape} does not match {weights.shape[0]} outputs"
        )
    return Layer(DENSE, weights=weights, bias=bias)


def conv(weights: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Layer:
    """Convolution layer; weights are (filters, in_channels, kh, kw)."""
    if len(weights.shape) != 4:
        raise ShapeMismatchError(f"conv weights must be 4-D, got {weights.shape}")
    if bias is not None and bias.shape != (weights.shape[0],):
        raise ShapeMismatchError(
            f"conv bias shape {bias.shape} does not match {weights.shape[0]} filters"
        )
    if stride < 1 or padding < 0:
        raise ValueError(f"invalid stride={stride} or padding={padding}")
    return Layer(CONV2D, weights=weights, bias=bias, stride=stride, padding=padding)


def relu() -> Layer:
    return Layer(RELU)


def maxpool(pool_size: int = 2, stride: int | None = None) -> Layer:
    if pool_size < 1:
        raise ValueError(f"pool_size must be positive, got {pool_size}")
    return Layer(MAXPOOL2D, pool_size=pool_size, stride=stride or pool_size)


def avgpool(pool_size: int = 2, stride: int | None = None) -> Layer:
    if pool_size < 1:
        raise ValueError(f"pool_size must be positive, got {pool_size}")
    return Layer(AVGPOOL2D, pool_size=pool_size, stride=stride or pool_size)


def flatten() -> Layer:
    return Layer(FLATTEN)


def output_shape(layer: Layer, in_shape: tuple[int, ...]) -> tuple[int, ...]:
    """Shape produced by `layer` on a single instance of `in_shape`; raises if invalid."""
    if layer.kind == DENSE:
        n_out, n_in = layer.weights.shape
        if in_shape != (n_in,):
            raise ShapeMismatchError(
                f"dense layer expects ({n_in},) input, got {in_shape}"
            )
        return (n_out,)
    if layer.kind == CONV2D:
        f, c, kh, kw = layer.weights.shape
        if len(in_shape) != 3 or in_shape[0] != c:
            raise ShapeMismatchError(
                f"conv layer expects ({c}, H, W) input, got {in_shape}"
            )
        ho = _conv.out_dim(in_shape[1], kh, layer.stride, layer.padding)
        wo = _conv.out_dim(in_shape[2], kw, layer.stride, layer.padding)
        if ho < 1 or wo < 1:
            raise ShapeMismatchError(
                f"kernel ({kh}, {kw}) does not fit input {in_shape} "
                f"with stride={layer.stride} padding={layer.padding}"
            )
        return (f, ho, wo)
    if layer.kind in (MAXPOOL2D, AVGPOOL2D):
        if len(in_shape) != 3:
            raise ShapeMismatchError(f"pool layer expects (C, H, W) input, got {in_shape}")
        k, s = layer.pool_size, layer.stride
        ho = _conv.out_dim(in_shape[1], k, s, 0)
        wo = _conv.out_dim(in_shape[2], k, s, 0)
        if ho < 1 or wo < 1:
            raise ShapeMismatchError(f"pool window {k} does not fit input {in_shape}")
        return (in_shape[0], ho, wo)
    if layer.kind == FLATTEN:
        return (int(np.prod(in_shape)),)
    if layer.kind == RELU:
        return in_shape
    raise ValueError(f"unknown layer kind {layer.kind!r}")


def apply(layer: Layer, x: np.ndarray) -> np.ndarray:
    """Forward a batch (B, ...) through one layer."""
    out, _ = apply_with_cache(layer, x, keep_cache=False)
    return out


def apply_with_cache(layer: Layer, x: np.ndarray, keep_cache: bool = True):
    """Forward a batch and optionally keep what the backward pass needs."""
    kind = layer.kind
    if kind == DENSE:
        w = layer.weights.array
        out = x @ w.T
        if layer.bias is not None:
            out = out + layer.bias.array
        return out, (x if keep_cache else None)
    if kind == CONV2D:
        w = layer.weights.array
        f, _, kh, kw = w.shape
        cols = _conv.im2col(x, kh, kw, layer.stride, layer.padding)
        out = np.einsum("fk,bkl->bfl", w.reshape(f, -1), cols, optimize=True)
        ho = _conv.out_dim(x.shape[2], kh, layer.stride, layer.padding)
        wo = _conv.out_dim(x.shape[3], kw, layer.stride, layer.padding)
        out = out.reshape(x.shape[0], f, ho, wo)
        if layer.bias is not None:
            out = out + layer.bias.array[None, :, None, None]
        return out, ((cols, x.shape) if keep_cache else None)
    if kind == RELU:
        mask = x > 0
        return np.where(mask, x, 0.0), (mask if keep_cache else None)
    if kind == MAXPOOL2D:
        k, s = layer.pool_size, layer.stride
        cols = _conv.pool_cols(x, k, s)  # (B*C, k*k, L)
        idx = np.argmax(cols, axis=1)  # first max = lowest flat index in window
        out = np.take_along_axis(cols, idx[:, None, :], axis=1)[:, 0, :]
        b, c = x.shape[0], x.shape[1]
        ho = _conv.out_dim(x.shape[2], k, s, 0)
        wo = _conv.out_dim(x.shape[3], k, s, 0)
        out = out.reshape(b, c, ho, wo)
        return out, ((idx, x.shape) if keep_cache else None)
    if kind == AVGPOOL2D:
        k, s = layer.pool_size, layer.stride
        cols = _conv.pool_cols(x, k, s)
        out = cols.mean(axis=1)
        b, c = x.shape[0], x.shape[1]
        ho = _conv.out_dim(x.shape[2], k, s, 0)
        wo = _conv.out_dim(x.shape[3], k, s, 0)
        out = out.reshape(b, c, ho, wo)
        return out, (x.shape if keep_cache else None)
    if kind == FLATTEN:
        return x.reshape(x.shape[0], -1), (x.shape if keep_cache else None)
    raise ValueError(f"unknown layer kind {kind!r}")


def grad(layer: Layer, cache, dout: np.ndarray):
    """Backward one layer: returns (dx, dweights, dbias); gradients None if no params."""
    kind = layer.kind
    if kind == DENSE:
        x = cache
        dw = dout.T @ x
        db = dout.sum(axis=0) if layer.bias is not None else None
        dx = dout @ layer.weights.array
        return dx, dw, db
    if kind == CONV2D:
        cols, x_shape = cache
        w = layer.weights.array
        f, _, kh, kw = w.shape
        b = dout.shape[0]
        dmat = dout.reshape(b, f, -1)
        dw = np.einsum("bfl,bkl->fk", dmat, cols, optimize=True).reshape(w.shape)
        db = dout.sum(axis=(0, 2, 3)) if layer.bias is not None else None
        dcols = np.einsum("fk,bfl->bkl", w.reshape(f, -1), dmat, optimize=True)
        dx = _conv.col2im(dcols, x_shape, kh, kw, layer.stride, layer.padding)
        return dx, dw, db
    if kind == RELU:
        mask = cache
        return np.where(mask, dout, 0.0), None, None
    if kind == MAXPOOL2D:
        idx, x_shape = cache
        k, s = layer.pool_size, layer.stride
        bc = x_shape[0] * x_shape[1]
        l = idx.shape[1]
        dcols = np.zeros((bc, k * k, l))
        np.put_along_axis(dcols, idx[:, None, :], dout.reshape(bc, 1, l), axis=1)
        return _conv.pool_uncols(dcols, x_shape, k, s), None, None
    if kind == AVGPOOL2D:
        x_shape = cache
        k, s = layer.pool_size, layer.stride
        bc = x_shape[0] * x_shape[1]
        dflat = dout.reshape(bc, 1, -1) / (k * k)
        dcols = np.broadcast_to(dflat, (bc, k * k, dflat.shape[2])).copy()
        return _conv.pool_uncols(dcols, x_shape, k, s), None, None
    if kind == FLATTEN:
        return dout.reshape(cache), None, None
    raise ValueError(f"unknown layer kind {kind!r}")
