"""Dense 4-D tensors, convolution geometry, and numeric comparison.

All tensors are 32-bit floats in NCHW order (last axis fastest-varying),
stored C-contiguously. Kernels accumulate in 32-bit as well, so outputs of
different kernels differ only by summation order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, ShapeError

DTYPE = np.float32


def _as_f32(data: np.ndarray, ndim: int) -> np.ndarray:
    arr = np.ascontiguousarray(data, dtype=DTYPE)
    if arr.ndim != ndim:
        raise ShapeError(f"expected a {ndim}-D array, got {arr.ndim}-D")
    if min(arr.shape) < 1:
        raise ShapeError(f"all extents must be positive, got {arr.shape}")
    return arr


@dataclass(frozen=True)
class Tensor4:
    """Contiguous 4-D float32 tensor; carrier for inputs, filters, outputs."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _as_f32(self.data, 4))

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @classmethod
    def zeros(cls, d0: int, d1: int, d2: int, d3: int) -> "Tensor4":
        return cls(np.zeros((d0, d1, d2, d3), dtype=DTYPE))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Tensor4):
            return NotImplemented
        return self.dims == other.dims and bool(
            (self.data.view(np.uint32) == other.data.view(np.uint32)).all()
        )


@dataclass(frozen=True)
class Mat2:
    """Contiguous row-major float32 matrix."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _as_f32(self.data, 2))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]


def flat_index(dims: tuple[int, ...], index: tuple[int, ...]) -> int:
    """Row-major address of a multi-index; inverse of unflatten_index."""
    if len(dims) != len(index):
        raise ShapeError(f"rank mismatch: {len(dims)} dims vs {len(index)} indices")
    flat = 0
    for extent, i in zip(dims, index):
        if not 0 <= i < extent:
            raise IndexError(f"index {index} out of range for dims {dims}")
        flat = flat * extent + i
    return flat


def unflatten_index(dims: tuple[int, ...], flat: int) -> tuple[int, ...]:
    total = int(np.prod(dims))
    if not 0 <= flat < total:
        raise IndexError(f"flat index {flat} out of range for dims {dims}")
    out = []
    for extent in reversed(dims):
        out.append(flat % extent)
        flat //= extent
    return tuple(reversed(out))


@dataclass(frozen=True)
class ConvParams:
    """Filter geometry plus a single stride applied to both spatial axes."""

    c_in: int
    c_out: int
    h_f: int
    w_f: int
    stride: int = 1

    def __post_init__(self):
        for name in ("c_in", "c_out", "h_f", "w_f", "stride"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise GeometryError(f"{name} must be a positive integer, got {value}")

    @property
    def filter_dims(self) -> tuple[int, int, int, int]:
        return (self.c_out, self.c_in, self.h_f, self.w_f)


def output_dims(h_in: int, w_in: int, params: ConvParams) -> tuple[int, int]:
    """Unpadded output extents: floor((in - filter) / stride) + 1 per axis."""
    if params.h_f > h_in or params.w_f > w_in:
        raise GeometryError(
            f"filter {params.h_f}x{params.w_f} larger than input {h_in}x{w_in}"
        )
    h_out = (h_in - params.h_f) // params.stride + 1
    w_out = (w_in - params.w_f) // params.stride + 1
    return h_out, w_out


def check_conv_operands(inp: Tensor4, flt: Tensor4, params: ConvParams) -> tuple[int, int]:
    """Validate input/filter/params consistency; returns the output extents."""
    if flt.dims != params.filter_dims:
        raise ShapeError(f"filter dims {flt.dims} do not match params {params.filter_dims}")
    if inp.dims[1] != params.c_in:
        raise ShapeError(f"input has {inp.dims[1]} channels, params expect {params.c_in}")
    return output_dims(inp.dims[2], inp.dims[3], params)


def max_rel_diff(a: Tensor4, b: Tensor4) -> float:
    """max over elements of |a-b| / max(|a|, |b|, 1).

    The denominator floor of 1 keeps near-zero elements from blowing up the
    metric; convolution outputs of random inputs are O(K) in magnitude, so
    the floor is conservative.
    """
    if a.dims != b.dims:
        raise ShapeError(f"dims differ: {a.dims} vs {b.dims}")
    x = a.data.astype(np.float64)
    y = b.data.astype(np.float64)
    denom = np.maximum(np.maximum(np.abs(x), np.abs(y)), 1.0)
    diff = np.abs(x - y) / denom
    # identical bit patterns count as zero difference (covers shared NaNs)
    diff[a.data.view(np.uint32) == b.data.view(np.uint32)] = 0.0
    return float(np.max(diff))
