"""Baseline convolutions: direct, explicit lowering + GEMM, implicit GEMM,
and the basic window-order kernel.

Every kernel accumulates each output element in float32 along ascending k
(k enumerates (channel, filter row, filter col) lexicographically), so on
identical inputs all routes produce bitwise-identical outputs; cross-kernel
checks may therefore assert bit equality on small cases and a loose
relative tolerance everywhere else.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from ..errors import ShapeError
from ..layouts import Im2winTensor, filter_to_matrix, im2col, im2win, output_from_matrix
from ..tensors import (
    DTYPE,
    ConvParams,
    Mat2,
    Tensor4,
    check_conv_operands,
    output_dims,
)


@dataclass(frozen=True)
class GemmDims:
    """The M/N/K iteration space shared by the GEMM-shaped kernels."""

    m: int  # output channels
    n: int  # batch * output rows * output cols
    k: int  # input channels * filter rows * filter cols

    @classmethod
    def from_conv(cls, inp: Tensor4, params: ConvParams) -> "GemmDims":
        if inp.dims[1] != params.c_in:
            raise ShapeError(
                f"input has {inp.dims[1]} channels, params expect {params.c_in}"
            )
        h_out, w_out = output_dims(inp.dims[2], inp.dims[3], params)
        return cls(params.c_out, inp.dims[0] * h_out * w_out,
                   params.c_in * params.h_f * params.w_f)


def decompose_n(n: int, h_out: int, w_out: int) -> tuple[int, int, int]:
    """n -> (image, output row, output col); inverse of compose_n."""
    hw = h_out * w_out
    return n // hw, (n % hw) // w_out, (n % hw) % w_out


def compose_n(i_n: int, o_h: int, o_w: int, h_out: int, w_out: int) -> int:
    return (i_n * h_out + o_h) * w_out + o_w


def decompose_k(k: int, h_f: int, w_f: int) -> tuple[int, int, int]:
    """k -> (input channel, filter row, filter col); inverse of compose_k."""
    fhw = h_f * w_f
    k_res = k % fhw
    return k // fhw, k_res // w_f, k_res % w_f


def compose_k(i_c: int, f_h: int, f_w: int, h_f: int, w_f: int) -> int:
    return (i_c * h_f + f_h) * w_f + f_w


@njit(parallel=True, cache=True)
def _direct_kernel(inp, flt, out, stride):
    n_img, c_in, _, _ = inp.shape
    c_out = flt.shape[0]
    h_f = flt.shape[2]
    w_f = flt.shape[3]
    h_out = out.shape[2]
    w_out = out.shape[3]
    for plane in prange(n_img * c_out):
        i = plane // c_out
        j = plane % c_out
        for m in range(h_out):
            for n in range(w_out):
                acc = np.float32(0.0)
                for r in range(c_in):
                    for u in range(h_f):
                        i_h = m * stride + u
                        i_w = n * stride
                        for v in range(w_f):
                            acc += inp[i, r, i_h, i_w + v] * flt[j, r, u, v]
                out[i, j, m, n] = acc


def conv_direct(inp: Tensor4, flt: Tensor4, params: ConvParams) -> Tensor4:
    """Seven-loop scalar convolution; the correctness oracle for every other route."""
    h_out, w_out = check_conv_operands(inp, flt, params)
    out = np.empty((inp.dims[0], params.c_out, h_out, w_out), dtype=DTYPE)
    _direct_kernel(inp.data, flt.data, out, params.stride)
    return Tensor4(out)


@njit(parallel=True, cache=True)
def _gemm_kernel(a, b_t, c):
    rows, inner = a.shape
    cols = b_t.shape[0]
    for i in prange(rows):
        for j in range(cols):
            acc = np.float32(0.0)
            for k in range(inner):
                acc += a[i, k] * b_t[j, k]
            c[i, j] = acc


def gemm(a: Mat2, b: Mat2) -> Mat2:
    """C = A @ B with float32 ascending-k accumulation per element.

    B is repacked row-major by column internally; that changes memory order
    only, not the sequence of float operations.
    """
    if a.cols != b.rows:
        raise ShapeError(f"inner dims disagree: {a.cols} vs {b.rows}")
    b_t = np.ascontiguousarray(b.data.T)
    c = np.empty((a.rows, b.cols), dtype=DTYPE)
    _gemm_kernel(a.data, b_t, c)
    return Mat2(c)


def conv_im2col_gemm(inp: Tensor4, flt: Tensor4, params: ConvParams) -> Tensor4:
    """Explicit lowering route, one image at a time to bound the footprint."""
    h_out, w_out = check_conv_operands(inp, flt, params)
    n_img = inp.dims[0]
    flt_mat = filter_to_matrix(flt, params)
    out = np.empty((n_img, params.c_out, h_out, w_out), dtype=DTYPE)
    for i in range(n_img):
        lowered = im2col(inp.data[i], params)
        product = gemm(lowered, flt_mat)
        out[i] = output_from_matrix(product, h_out, w_out)
    return Tensor4(out)


@njit(parallel=True, cache=True)
def _implicit_kernel(inp, flt, out, stride):
    n_img = inp.shape[0]
    c_in = inp.shape[1]
    c_out = flt.shape[0]
    h_f = flt.shape[2]
    w_f = flt.shape[3]
    h_out = out.shape[2]
    w_out = out.shape[3]
    dim_n = n_img * h_out * w_out
    dim_k = c_in * h_f * w_f
    hw = h_out * w_out
    fhw = h_f * w_f
    for item in prange(c_out * dim_n):
        m = item // dim_n
        n = item % dim_n
        o_c = m
        o_n = n // hw
        o_h = (n % hw) // w_out
        o_w = (n % hw) % w_out
        acc = np.float32(0.0)
        for k in range(dim_k):
            i_c = k // fhw
            k_res = k % fhw
            f_h = k_res // w_f
            f_w = k_res % w_f
            i_h = o_h * stride + f_h
            i_w = o_w * stride + f_w
            acc += inp[o_n, i_c, i_h, i_w] * flt[o_c, i_c, f_h, f_w]
        out[o_n, o_c, o_h, o_w] = acc


def conv_implicit_gemm(inp: Tensor4, flt: Tensor4, params: ConvParams) -> Tensor4:
    """GEMM-shaped M/N/K loops with tensor indices recovered on the fly."""
    h_out, w_out = check_conv_operands(inp, flt, params)
    out = np.empty((inp.dims[0], params.c_out, h_out, w_out), dtype=DTYPE)
    _implicit_kernel(inp.data, flt.data, out, params.stride)
    return Tensor4(out)


@njit(parallel=True, cache=True)
def _basic_window_kernel(windows, flt_flat, out, stride, h_f, w_f):
    n_img = windows.shape[0]
    c_in = windows.shape[1]
    h_out = windows.shape[2]
    c_out = out.shape[1]
    w_out = out.shape[3]
    dim_n = n_img * h_out * w_out
    dim_k = c_in * h_f * w_f
    hw = h_out * w_out
    fhw = h_f * w_f
    for item in prange(c_out * dim_n):
        m = item // dim_n
        n = item % dim_n
        o_c = m
        o_n = n // hw
        o_h = (n % hw) // w_out
        o_w = (n % hw) % w_out
        acc = np.float32(0.0)
        for k in range(dim_k):
            i_c = k // fhw
            k_res = k % fhw
            f_h = k_res // w_f
            f_w = k_res % w_f
            acc += (windows[o_n, i_c, o_h, (o_w * stride + f_w) * h_f + f_h]
                    * flt_flat[o_c * dim_k + k])
        out[o_n, o_c, o_h, o_w] = acc


def compute_from_windows_basic(windows: Im2winTensor, flt: Tensor4,
                               params: ConvParams) -> Tensor4:
    """Basic window-order convolution on an already-transformed input."""
    if flt.dims != params.filter_dims:
        raise ShapeError(f"filter dims {flt.dims} do not match params {params.filter_dims}")
    out = np.empty((windows.n, params.c_out, windows.h_out, windows.w_out), dtype=DTYPE)
    # filter laid out so index k walks (channel, row, col) lexicographically
    flt_flat = np.ascontiguousarray(flt.data.reshape(-1))
    _basic_window_kernel(windows.data, flt_flat, out, params.stride,
                         params.h_f, params.w_f)
    return Tensor4(out)


def conv_im2win_basic(inp: Tensor4, flt: Tensor4, params: ConvParams) -> Tensor4:
    """Window-order transform followed by one work item per output element."""
    check_conv_operands(inp, flt, params)
    return compute_from_windows_basic(im2win(inp, params), flt, params)
