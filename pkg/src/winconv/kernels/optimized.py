"""Tiled window-order convolution.

The M/N/K space is cut into m_b x n_b output blocks; each block is an
independent work unit for the pool. A block stages k_b-deep panels of the
window tensor and the filter into dense scratch (the shared-memory
analogue), then each m_t x n_t micro-tile streams the panel through a pair
of small register buffers, accumulating rank-1 updates. With double
buffering on, the next panel is staged into the alternate buffer before the
current one is consumed, and the register pair likewise prefetches step
k'+1 while multiplying step k'.

Per output element the accumulation is float32 along ascending k regardless
of the plan, so any two plans (and the basic kernel) produce bitwise
identical results on finite inputs; padded edge-tile slots stage zeros,
which add exactly nothing.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

from ..layouts import Im2winTensor, im2win
from ..tensors import DTYPE, ConvParams, Tensor4, check_conv_operands
from ..errors import ShapeError
from .plan import TilePlan, default_plan
from .reference import GemmDims


@njit(cache=True)
def _stage_input_panel(windows_flat, panel, src_off, k_base, dim_k,
                       fhw, h_f, w_f, chan_stride):
    # panel[k', n'] <- logical window element (k_base + k', n'); zeros outside
    k_b, n_b = panel.shape
    for kp in range(k_b):
        k = k_base + kp
        if k < dim_k:
            i_c = k // fhw
            k_res = k % fhw
            f_h = k_res // w_f
            f_w = k_res % w_f
            delta = i_c * chan_stride + f_w * h_f + f_h
            for np_ in range(n_b):
                if src_off[np_] >= 0:
                    panel[kp, np_] = windows_flat[src_off[np_] + delta]
                else:
                    panel[kp, np_] = np.float32(0.0)
        else:
            for np_ in range(n_b):
                panel[kp, np_] = np.float32(0.0)


@njit(cache=True)
def _stage_filter_panel(flt_flat, panel, bx, k_base, dim_m, dim_k):
    m_b, k_b = panel.shape
    for mp in range(m_b):
        m = bx * m_b + mp
        for kp in range(k_b):
            k = k_base + kp
            if m < dim_m and k < dim_k:
                panel[mp, kp] = flt_flat[m * dim_k + k]
            else:
                panel[mp, kp] = np.float32(0.0)


@njit(parallel=True, cache=True)
def _tiled_kernel(windows_flat, flt_flat, out_flat,
                  dim_m, dim_n, dim_k,
                  c_in, c_out, h_out, w_out, row_len, h_f, w_f, stride,
                  m_b, n_b, k_b, m_t, n_t, use_vec, use_pf):
    hw = h_out * w_out
    fhw = h_f * w_f
    chan_stride = h_out * row_len
    blocks_m = (dim_m + m_b - 1) // m_b
    blocks_n = (dim_n + n_b - 1) // n_b
    blocks_k = (dim_k + k_b - 1) // k_b
    tiles_m = m_b // m_t
    tiles_n = n_b // n_t
    degenerate = m_t == 1 and n_t == 1
    vec_span = (n_t // 8) * 8

    for blk in prange(blocks_m * blocks_n):
        bx = blk // blocks_n
        by = blk % blocks_n

        s_i = np.empty((2, k_b, n_b), dtype=np.float32)
        s_f = np.empty((2, m_b, k_b), dtype=np.float32)
        acc = np.zeros((m_b, n_b), dtype=np.float32)
        loc = np.empty((m_t, n_t), dtype=np.float32)
        r_i = np.empty((2, n_t), dtype=np.float32)
        r_f = np.empty((2, m_t), dtype=np.float32)

        # per-column source/destination offsets, hoisted out of the K loop
        src_off = np.empty(n_b, dtype=np.int64)
        dst_off = np.empty(n_b, dtype=np.int64)
        for np_ in range(n_b):
            n = by * n_b + np_
            if n < dim_n:
                o_n = n // hw
                rem = n % hw
                src_off[np_] = ((o_n * c_in * h_out + rem // w_out) * row_len
                                + (rem % w_out) * stride * h_f)
                dst_off[np_] = o_n * c_out * hw + rem
            else:
                src_off[np_] = -1
                dst_off[np_] = -1

        _stage_input_panel(windows_flat, s_i[0], src_off, 0, dim_k,
                           fhw, h_f, w_f, chan_stride)
        _stage_filter_panel(flt_flat, s_f[0], bx, 0, dim_m, dim_k)

        cur = 0
        for kk in range(blocks_k):
            if not use_pf and kk > 0:
                _stage_input_panel(windows_flat, s_i[0], src_off, kk * k_b,
                                   dim_k, fhw, h_f, w_f, chan_stride)
                _stage_filter_panel(flt_flat, s_f[0], bx, kk * k_b, dim_m, dim_k)
            if use_pf and kk + 1 < blocks_k:
                nxt = 1 - cur
                _stage_input_panel(windows_flat, s_i[nxt], src_off,
                                   (kk + 1) * k_b, dim_k, fhw, h_f, w_f,
                                   chan_stride)
                _stage_filter_panel(flt_flat, s_f[nxt], bx, (kk + 1) * k_b,
                                    dim_m, dim_k)

            if degenerate:
                # 1x1 micro-tile: one scalar chain per output element,
                # same ascending-k order as the tiled paths below
                for mp in range(m_b):
                    for np_ in range(n_b):
                        a0 = acc[mp, np_]
                        for kp in range(k_b):
                            a0 += s_f[cur, mp, kp] * s_i[cur, kp, np_]
                        acc[mp, np_] = a0
            elif use_vec:
                for tm in range(tiles_m):
                    for tn in range(tiles_n):
                        mb0 = tm * m_t
                        nb0 = tn * n_t
                        for a in range(m_t):
                            for b in range(n_t):
                                loc[a, b] = acc[mb0 + a, nb0 + b]
                        # prime register buffers with k' = 0
                        for c0 in range(0, vec_span, 8):
                            for q in range(8):
                                r_i[0, c0 + q] = s_i[cur, 0, nb0 + c0 + q]
                        for b in range(vec_span, n_t):
                            r_i[0, b] = s_i[cur, 0, nb0 + b]
                        for a in range(m_t):
                            r_f[0, a] = s_f[cur, mb0 + a, 0]
                        rc = 0
                        for kp in range(1, k_b):
                            rn = 1 - rc
                            # prefetch next register vectors, 8-wide
                            for c0 in range(0, vec_span, 8):
                                for q in range(8):
                                    r_i[rn, c0 + q] = s_i[cur, kp, nb0 + c0 + q]
                            for b in range(vec_span, n_t):
                                r_i[rn, b] = s_i[cur, kp, nb0 + b]
                            for a in range(m_t):
                                r_f[rn, a] = s_f[cur, mb0 + a, kp]
                            for a in range(m_t):
                                fa = r_f[rc, a]
                                for b in range(n_t):
                                    loc[a, b] += fa * r_i[rc, b]
                            rc = rn
                        for a in range(m_t):
                            fa = r_f[rc, a]
                            for b in range(n_t):
                                loc[a, b] += fa * r_i[rc, b]
                        for a in range(m_t):
                            for b in range(n_t):
                                acc[mb0 + a, nb0 + b] = loc[a, b]
            else:
                for tm in range(tiles_m):
                    for tn in range(tiles_n):
                        mb0 = tm * m_t
                        nb0 = tn * n_t
                        for a in range(m_t):
                            for b in range(n_t):
                                loc[a, b] = acc[mb0 + a, nb0 + b]
                        for b in range(n_t):
                            r_i[0, b] = s_i[cur, 0, nb0 + b]
                        for a in range(m_t):
                            r_f[0, a] = s_f[cur, mb0 + a, 0]
                        rc = 0
                        for kp in range(1, k_b):
                            rn = 1 - rc
                            for b in range(n_t):
                                r_i[rn, b] = s_i[cur, kp, nb0 + b]
                            for a in range(m_t):
                                r_f[rn, a] = s_f[cur, mb0 + a, kp]
                            for a in range(m_t):
                                fa = r_f[rc, a]
                                for b in range(n_t):
                                    loc[a, b] += fa * r_i[rc, b]
                            rc = rn
                        for a in range(m_t):
                            fa = r_f[rc, a]
                            for b in range(n_t):
                                loc[a, b] += fa * r_i[rc, b]
                        for a in range(m_t):
                            for b in range(n_t):
                                acc[mb0 + a, nb0 + b] = loc[a, b]

            if use_pf:
                cur = 1 - cur

        for mp in range(m_b):
            m = bx * m_b + mp
            if m < dim_m:
                for np_ in range(n_b):
                    if dst_off[np_] >= 0:
                        out_flat[dst_off[np_] + m * hw] = acc[mp, np_]


def compute_from_windows_opt(windows: Im2winTensor, flt: Tensor4,
                             params: ConvParams, plan: TilePlan | None = None) -> Tensor4:
    """Tiled convolution on an already-transformed input."""
    if flt.dims != params.filter_dims:
        raise ShapeError(f"filter dims {flt.dims} do not match params {params.filter_dims}")
    dims = GemmDims(params.c_out, windows.n * windows.h_out * windows.w_out,
                    params.c_in * params.h_f * params.w_f)
    if plan is None:
        plan = default_plan(dims)
    out = np.empty((windows.n, params.c_out, windows.h_out, windows.w_out), dtype=DTYPE)
    flt_flat = np.ascontiguousarray(flt.data.reshape(-1))
    _tiled_kernel(windows.data.reshape(-1), flt_flat, out.reshape(-1),
                  dims.m, dims.n, dims.k,
                  windows.c_in, params.c_out, windows.h_out, windows.w_out,
                  windows.row_len, params.h_f, params.w_f, params.stride,
                  plan.m_b, plan.n_b, plan.k_b, plan.m_t, plan.n_t,
                  plan.vectorized_load, plan.prefetch_double_buffer)
    return Tensor4(out)


def conv_im2win_opt(inp: Tensor4, flt: Tensor4, params: ConvParams,
                    plan: TilePlan | None = None) -> Tensor4:
    """Window-order transform followed by the tiled kernel."""
    check_conv_operands(inp, flt, params)
    return compute_from_windows_opt(im2win(inp, params), flt, params, plan)
