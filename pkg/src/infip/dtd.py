"""Relevance propagation from the predicted class back to input pixels.

The map starts at the output layer with the softmax probability of the
predicted class and is redistributed layer by layer using the positive-weight
(z+) rule: each output neuron's relevance is split over its inputs in
proportion to a_i * max(w_ij, 0). Biases never enter the denominators, so the
per-layer relevance sum is conserved exactly except where a whole column of
positive contributions vanishes, in which case that relevance is absorbed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from infip import _conv
from infip import layers as L
from infip.model import ActivationTrace, Model
from infip.tensor import ShapeMismatchError, Tensor


@dataclass(frozen=True)
class RelevanceMap:
    """Per-pixel relevance for one input, channel-summed to a single plane."""

    values: Tensor
    root_class: int
    root_relevance: float
    degenerate: bool = False

    def __post_init__(self):
        v = self.values.array
        if v.min() < 0:
            raise ValueError("relevance values must be non-negative")
        if not 0.0 <= self.root_relevance <= 1.0:
            raise ValueError(f"root relevance must be in [0, 1], got {self.root_relevance}")
        if v.sum() > self.root_relevance + 1e-6:
            raise ValueError("relevance sum exceeds the root relevance")


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    # Columns with zero denominator absorb their relevance.
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def propagate_dense_zplus(layer: L.Layer, input_activation: Tensor, relevance_out: Tensor) -> Tensor:
    """z+ rule for a dense layer.

    R_in[i] = sum_j a_i w+_ij / (sum_i' a_i' w+_i'j) * R_out[j] with
    w+ = max(w, 0); the input activation must be non-negative elementwise.
    """
    if layer.kind != L.DENSE:
        raise ValueError(f"expected a dense layer, got {layer.kind}")
    w_plus = np.maximum(layer.weights.array, 0.0)
    a = input_activation.array
    r = relevance_out.array
    if a.shape != (w_plus.shape[1],) or r.shape != (w_plus.shape[0],):
        raise ShapeMismatchError(
            f"dense propagation shapes do not line up: weights {layer.weights.shape}, "
            f"activation {input_activation.shape}, relevance {relevance_out.shape}"
        )
    z = w_plus @ a
    s = _safe_ratio(r, z)
    return Tensor._adopt(a * (w_plus.T @ s))


def propagate_conv_zplus(layer: L.Layer, input_activation: Tensor, relevance_out: Tensor) -> Tensor:
    """z+ rule over each receptive field of a convolution.

    Numerically identical to unrolling the convolution into a dense layer and
    applying the dense rule there.
    """
    if layer.kind != L.CONV2D:
        raise ValueError(f"expected a conv layer, got {layer.kind}")
    w = layer.weights.array
    f, c, kh, kw = w.shape
    a = input_activation.array
    r = relevance_out.array
    expected_out = L.output_shape(layer, input_activation.shape)
    if r.shape != expected_out:
        raise ShapeMismatchError(
            f"conv relevance shape {relevance_out.shape} does not match output {expected_out}"
        )
    w_plus = np.maximum(w, 0.0).reshape(f, -1)
    cols = _conv.im2col(a[None], kh, kw, layer.stride, layer.padding)[0]  # (c*kh*kw, L)
    z = w_plus @ cols  # (f, L)
    s = _safe_ratio(r.reshape(f, -1), z)
    dcols = (w_plus.T @ s) * cols
    r_in = _conv.col2im(dcols[None], (1, *a.shape), kh, kw, layer.stride, layer.padding)[0]
    return Tensor._adopt(r_in)


def propagate_pool(layer: L.Layer, input_activation: Tensor, relevance_out: Tensor) -> Tensor:
    """Max pooling routes relevance to each window's argmax (ties: lowest flat
    index); average pooling splits it in proportion to the input activations."""
    if layer.kind not in (L.MAXPOOL2D, L.AVGPOOL2D):
        raise ValueError(f"expected a pool layer, got {layer.kind}")
    a = input_activation.array
    r = relevance_out.array
    expected_out = L.output_shape(layer, input_activation.shape)
    if r.shape != expected_out:
        raise ShapeMismatchError(
            f"pool relevance shape {relevance_out.shape} does not match output {expected_out}"
        )
    k, s = layer.pool_size, layer.stride
    cols = _conv.pool_cols(a[None], k, s)  # (C, k*k, L)
    rflat = r.reshape(r.shape[0], 1, -1)
    if layer.kind == L.MAXPOOL2D:
        idx = np.argmax(cols, axis=1)
        dcols = np.zeros_like(cols)
        np.put_along_axis(dcols, idx[:, None, :], rflat, axis=1)
    else:
        total = cols.sum(axis=1, keepdims=True)
        dcols = _safe_ratio(cols, total) * rflat
    r_in = _conv.pool_uncols(dcols, (1, *a.shape), k, s)[0]
    return Tensor._adopt(r_in)


def propagate_relu(relevance_out: Tensor) -> Tensor:
    """ReLU passes relevance through unchanged; the masking is already encoded
    in the activations the adjacent rules consume."""
    return relevance_out


def propagate_flatten(input_activation: Tensor, relevance_out: Tensor) -> Tensor:
    if relevance_out.size != input_activation.size:
        raise ShapeMismatchError(
            f"flatten relevance size {relevance_out.size} does not match "
            f"input size {input_activation.size}"
        )
    return Tensor._adopt(relevance_out.array.reshape(input_activation.shape))


def propagate(layer: L.Layer, input_activation: Tensor, relevance_out: Tensor) -> Tensor:
    """Propagate relevance backwards through one layer of any supported kind."""
    if layer.kind == L.DENSE:
        return propagate_dense_zplus(layer, input_activation, relevance_out)
    if layer.kind == L.CONV2D:
        return propagate_conv_zplus(layer, input_activation, relevance_out)
    if layer.kind in (L.MAXPOOL2D, L.AVGPOOL2D):
        return propagate_pool(layer, input_activation, relevance_out)
    if layer.kind == L.RELU:
        return propagate_relu(relevance_out)
    if layer.kind == L.FLATTEN:
        return propagate_flatten(input_activation, relevance_out)
    raise ValueError(f"unsupported layer kind for relevance propagation: {layer.kind!r}")


def dtd_extract(model: Model, x: Tensor, trace: ActivationTrace) -> RelevanceMap:
    """Deep-Taylor-style decomposition of one prediction into pixel relevances.

    The root relevance is the softmax probability of the predicted class; the
    result is a single-channel map over the input's spatial layout. A map that
    lost all relevance (or a zero root) is flagged degenerate rather than
    raising.
    """
    if len(trace.layer_inputs) != len(model.layers):
        raise ValueError("trace does not match the model (layer count differs)")
    if trace.layer_inputs[0].shape != x.shape or not np.array_equal(
        trace.layer_inputs[0].array, x.array
    ):
        raise ValueError("trace was not produced from this input")

    root = np.zeros(model.num_classes)
    root[trace.predicted_class] = trace.predicted_prob
    relevance = Tensor._adopt(root)
    for layer, act in zip(reversed(model.layers), reversed(trace.layer_inputs)):
        relevance = propagate(layer, act, relevance)

    values = relevance.array
    if values.ndim == 3:
        values = values.sum(axis=0)
    elif values.ndim == 1:
        values = values.reshape(1, -1)
    total = values.sum()
    return RelevanceMap(
        values=Tensor._adopt(values),
        root_class=trace.predicted_class,
        root_relevance=trace.predicted_prob,
        degenerate=bool(trace.predicted_prob == 0.0 or total == 0.0),
    )
