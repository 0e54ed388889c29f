"""Dense float64 tensor type and the array operations everything else builds on.

Tensors are immutable once constructed and always hold finite values, so they
can be shared freely between threads and no public operation can leak NaN/Inf.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from infip import _conv


class ShapeMismatchError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


def _normalize_shape(shape: Sequence[int]) -> tuple[int, ...]:
    out = tuple(int(d) for d in shape)
    if not out or any(d < 1 for d in out):
        raise ValueError(f"shape must be a non-empty sequence of positive ints, got {out!r}")
    return out


class Tensor:
    """Immutable n-dimensional array of 64-bit floats in row-major order."""

    __slots__ = ("_array",)

    def __init__(self, shape: Sequence[int], data) -> None:
        shape = _normalize_shape(shape)
        arr = np.array(data, dtype=np.float64).reshape(-1)
        expected = int(np.prod(shape))
        if arr.size != expected:
            raise ValueError(
                f"data has {arr.size} values but shape {shape} needs {expected}"
            )
        arr = arr.reshape(shape)
        if not np.isfinite(arr).all():
            raise ValueError("tensor values must be finite (no NaN/Inf)")
        arr.flags.writeable = False
        self._array = arr

    @classmethod
    def from_array(cls, array: np.ndarray) -> "Tensor":
        """Build a tensor from a numpy array (copied, validated)."""
        return cls(array.shape, np.asarray(array, dtype=np.float64).ravel())

    @classmethod
    def _adopt(cls, array: np.ndarray) -> "Tensor":
        # Internal fast path: takes ownership of a freshly computed array.
        if not np.isfinite(array).all():
            raise ValueError("tensor values must be finite (no NaN/Inf)")
        obj = object.__new__(cls)
        array = np.ascontiguousarray(array, dtype=np.float64)
        array.flags.writeable = False
        obj._array = array
        return obj

    @property
    def shape(self) -> tuple[int, ...]:
        return self._array.shape

    @property
    def size(self) -> int:
        return self._array.size

    @property
    def array(self) -> np.ndarray:
        """Read-only numpy view of the underlying data."""
        return self._array

    @property
    def data(self) -> np.ndarray:
        """Flat read-only view in row-major order."""
        return self._array.reshape(-1)

    def tolist(self):
        return self._array.tolist()

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, Tensor):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self._array, other._array))

    def __hash__(self):
        return hash((self.shape, self._array.tobytes()))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of an m-by-k and a k-by-n tensor."""
    if len(a.shape) != 2 or len(b.shape) != 2:
        raise ShapeMismatchError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(
            f"matmul inner dimensions differ: {a.shape} vs {b.shape}"
        )
    return Tensor._adopt(a.array @ b.array)


def conv2d(input: Tensor, kernels: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation of a C-by-H-by-W input with F C-by-kh-by-kw kernels.

    Output spatial size is floor((H + 2*padding - kh) / stride) + 1 per axis.
    """
    if len(input.shape) != 3 or len(kernels.shape) != 4:
        raise ShapeMismatchError(
            f"conv2d needs a 3-D input and 4-D kernels, got {input.shape} and {kernels.shape}"
        )
    if stride < 1:
        raise ValueError(f"stride must be positive, got {stride}")
    if padding < 0:
        raise ValueError(f"padding must be non-negative, got {padding}")
    c, h, w = input.shape
    f, kc, kh, kw = kernels.shape
    if kc != c:
        raise ShapeMismatchError(
            f"kernel channels {kernels.shape} do not match input channels {input.shape}"
        )
    ho = _conv.out_dim(h, kh, stride, padding)
    wo = _conv.out_dim(w, kw, stride, padding)
    if ho < 1 or wo < 1:
        raise ShapeMismatchError(
            f"kernel {kernels.shape} does not fit input {input.shape} "
            f"with stride={stride} padding={padding}"
        )
    out = _conv.conv_forward(input.array[None], kernels.array, stride, padding)[0]
    return Tensor._adopt(out)


def relu(t: Tensor) -> Tensor:
    """Pointwise max(x, 0)."""
    return Tensor._adopt(np.maximum(t.array, 0.0))


def add(a: Tensor, b: Tensor) -> Tensor:
    """Pointwise sum; operands must have identical shapes."""
    _check_same_shape("add", a, b)
    return Tensor._adopt(a.array + b.array)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Pointwise product; operands must have identical shapes."""
    _check_same_shape("mul", a, b)
    return Tensor._adopt(a.array * b.array)


def scale(t: Tensor, factor: float) -> Tensor:
    """Multiply every element by a scalar."""
    with np.errstate(over="ignore"):  # overflow surfaces as the finite-check error
        return Tensor._adopt(t.array * float(factor))


def _check_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{op} operand shapes differ: {a.shape} vs {b.shape}")
