"""Window-order and column-order data layouts, plus footprint accounting.

The window-order transform stores, for each output row, the h_f input rows
it touches, reordered so that consecutive dot-product windows of that row
are overlapping contiguous slices. Within one source column the h_f
elements are stored column-major (row offset fastest).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .errors import ShapeError
from .tensors import DTYPE, ConvParams, Mat2, Tensor4, output_dims

LAYOUTS = ("raw", "im2col", "im2win")


@dataclass(frozen=True)
class Im2winTensor:
    """Window-ordered input of shape (n, c_in, h_out, h_f * w_eff).

    w_eff = (w_out - 1) * stride + w_f is the span of source columns one
    window row actually reads; right-edge columns never touched by any
    window are not copied.
    """

    data: np.ndarray
    h_f: int
    w_f: int
    stride: int
    w_eff: int

    def __post_init__(self):
        if self.data.ndim != 4 or self.data.dtype != DTYPE:
            raise ShapeError("window tensor must be 4-D float32")
        if self.row_len != self.h_f * self.w_eff:
            raise ShapeError(
                f"last extent {self.row_len} != h_f*w_eff = {self.h_f * self.w_eff}"
            )

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def c_in(self) -> int:
        return self.data.shape[1]

    @property
    def h_out(self) -> int:
        return self.data.shape[2]

    @property
    def row_len(self) -> int:
        return self.data.shape[3]

    @property
    def w_out(self) -> int:
        return (self.w_eff - self.w_f) // self.stride + 1

    def elements(self) -> int:
        return self.data.size


def effective_width(w_out: int, w_f: int, stride: int) -> int:
    return (w_out - 1) * stride + w_f


@njit(parallel=True, cache=True)
def _im2win_fill(src, dst, h_f, w_eff, stride):
    n_img, c_in, h_out, row_len = dst.shape
    for plane in prange(n_img * c_in):
        i = plane // c_in
        r = plane % c_in
        for m in range(h_out):
            for c in range(w_eff):
                base = c * h_f
                for u in range(h_f):
                    dst[i, r, m, base + u] = src[i, r, m * stride + u, c]


def im2win(tensor: Tensor4, params: ConvParams) -> Im2winTensor:
    """Rearrange the input in dot-product-window access order."""
    n_img, c_in, h_in, w_in = tensor.dims
    if c_in != params.c_in:
        raise ShapeError(f"input has {c_in} channels, params expect {params.c_in}")
    h_out, w_out = output_dims(h_in, w_in, params)
    w_eff = effective_width(w_out, params.w_f, params.stride)
    dst = np.empty((n_img, c_in, h_out, params.h_f * w_eff), dtype=DTYPE)
    _im2win_fill(tensor.data, dst, params.h_f, w_eff, params.stride)
    return Im2winTensor(dst, params.h_f, params.w_f, params.stride, w_eff)


def im2win_gather(t: Im2winTensor, i_n: int, i_c: int, o_h: int, f_h: int, f_w: int, o_w: int) -> float:
    """Read one window element: equals input(i_n, i_c, o_h*s + f_h, o_w*s + f_w)."""
    if not (0 <= i_n < t.n and 0 <= i_c < t.c_in and 0 <= o_h < t.h_out):
        raise IndexError(f"image/channel/row index out of range: {(i_n, i_c, o_h)}")
    if not (0 <= f_h < t.h_f and 0 <= f_w < t.w_f and 0 <= o_w < t.w_out):
        raise IndexError(f"window index out of range: {(f_h, f_w, o_w)}")
    col = o_w * t.stride + f_w
    return float(t.data[i_n, i_c, o_h, col * t.h_f + f_h])


@njit(parallel=True, cache=True)
def _im2col_fill(image, dst, h_f, w_f, stride, w_out):
    rows, _ = dst.shape
    c_in = image.shape[0]
    for q in prange(rows):
        m = q // w_out
        n = q % w_out
        col = 0
        for r in range(c_in):
            for u in range(h_f):
                for v in range(w_f):
                    dst[q, col] = image[r, m * stride + u, n * stride + v]
                    col += 1


def im2col(image: np.ndarray, params: ConvParams) -> Mat2:
    """Lower one image (c_in, h_in, w_in) to a (h_out*w_out, c_in*h_f*w_f) matrix."""
    if image.ndim != 3:
        raise ShapeError(f"expected one image (c, h, w), got {image.shape}")
    c_in, h_in, w_in = image.shape
    if c_in != params.c_in:
        raise ShapeError(f"image has {c_in} channels, params expect {params.c_in}")
    h_out, w_out = output_dims(h_in, w_in, params)
    dst = np.empty((h_out * w_out, c_in * params.h_f * params.w_f), dtype=DTYPE)
    _im2col_fill(np.ascontiguousarray(image, dtype=DTYPE), dst,
                 params.h_f, params.w_f, params.stride, w_out)
    return Mat2(dst)


def filter_to_matrix(flt: Tensor4, params: ConvParams) -> Mat2:
    """Unfold the filter to (c_in*h_f*w_f, c_out); column j holds filter j."""
    if flt.dims != params.filter_dims:
        raise ShapeError(f"filter dims {flt.dims} do not match params {params.filter_dims}")
    c_out, c_in, h_f, w_f = flt.dims
    # N((r*h_f + u)*w_f + v, j) = F(j, r, u, v)
    return Mat2(flt.data.reshape(c_out, c_in * h_f * w_f).T.copy())


def output_from_matrix(result: Mat2, h_out: int, w_out: int) -> np.ndarray:
    """Fold a (h_out*w_out, c_out) product back into (c_out, h_out, w_out)."""
    if result.rows != h_out * w_out:
        raise ShapeError(f"{result.rows} rows cannot fold into {h_out}x{w_out}")
    return np.ascontiguousarray(result.data.T.reshape(result.cols, h_out, w_out))


def footprint_elems(layout: str, n_img: int, c_in: int, h_in: int, w_in: int,
                    params: ConvParams) -> int:
    """Element count a layout materializes for the given input geometry."""
    if layout not in LAYOUTS:
        raise ValueError(f"unknown layout {layout!r}, expected one of {LAYOUTS}")
    h_out, w_out = output_dims(h_in, w_in, params)
    if layout == "raw":
        return n_img * c_in * h_in * w_in
    if layout == "im2col":
        return n_img * (h_out * w_out) * (c_in * params.h_f * params.w_f)
    w_eff = effective_width(w_out, params.w_f, params.stride)
    return n_img * c_in * h_out * params.h_f * w_eff
