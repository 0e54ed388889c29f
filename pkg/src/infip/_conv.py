"""im2col-based convolution and pooling kernels.

Shared by the public conv2d op, the forward pass, the training loop, and
relevance propagation so that all of them agree numerically. Arrays here are
raw numpy, batched as (B, C, H, W).
"""

from __future__ import annotations

import numpy as np


def out_dim(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """Unfold (B, C, H, W) into receptive-field columns (B, C*kh*kw, L)."""
    b, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]  # (B, C, Ho, Wo, kh, kw)
    ho, wo = win.shape[2], win.shape[3]
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(b, c * kh * kw, ho * wo)
    return np.ascontiguousarray(cols)


def col2im(
    cols: np.ndarray,
    x_shape: tuple[int, int, int, int],
    kh: int,
    kw: int,
    stride: int,
    pad: int,
) -> np.ndarray:
    """Scatter-add columns back onto the (B, C, H, W) grid; inverse of im2col."""
    b, c, h, w = x_shape
    ho = out_dim(h, kh, stride, pad)
    wo = out_dim(w, kw, stride, pad)
    out = np.zeros((b, c, h + 2 * pad, w + 2 * pad))
    cols6 = cols.reshape(b, c, kh, kw, ho, wo)
    for di in range(kh):
        for dj in range(kw):
            out[:, :, di : di + stride * ho : stride, dj : dj + stride * wo : stride] += cols6[
                :, :, di, dj
            ]
    if pad:
        out = out[:, :, pad : pad + h, pad : pad + w]
    return out


def conv_forward(x: np.ndarray, kernels: np.ndarray, stride: int, pad: int) -> np.ndarray:
    """Cross-correlate (B, C, H, W) with (F, C, kh, kw) kernels, no bias."""
    b = x.shape[0]
    f, _, kh, kw = kernels.shape
    ho = out_dim(x.shape[2], kh, stride, pad)
    wo = out_dim(x.shape[3], kw, stride, pad)
    cols = im2col(x, kh, kw, stride, pad)
    wmat = kernels.reshape(f, -1)
    out = np.einsum("fk,bkl->bfl", wmat, cols, optimize=True)
    return out.reshape(b, f, ho, wo)


def pool_cols(x: np.ndarray, k: int, stride: int) -> np.ndarray:
    """Per-channel window columns for pooling: (B, C, H, W) -> (B*C, k*k, L)."""
    b, c, h, w = x.shape
    return im2col(x.reshape(b * c, 1, h, w), k, k, stride, 0)


def pool_uncols(
    cols: np.ndarray, x_shape: tuple[int, int, int, int], k: int, stride: int
) -> np.ndarray:
    b, c, h, w = x_shape
    out = col2im(cols, (b * c, 1, h, w), k, k, stride, 0)
    return out.reshape(b, c, h, w)
