"""Step-wise, instrumented execution of the tiled kernel.

This mirrors the compiled kernel in plain Python/numpy, one protocol step
per function, so tests can drive panel staging, the register pipeline, and
the micro-kernel directly and observe access counters. Accumulation order
is identical to the compiled kernel, so outputs match it bitwise.

Phases: global tensors may be read only while staging panels; during panel
consumption every read must hit scratch. The counters record reads per
phase, and an ordered event log captures the prefetch/compute interleaving.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError
from ..layouts import Im2winTensor, im2win
from ..tensors import DTYPE, ConvParams, Tensor4, check_conv_operands
from .plan import TilePlan, default_plan
from .reference import GemmDims, decompose_k, decompose_n


@dataclass
class AccessCounters:
    """Per-phase access counts plus an ordered event log."""

    phase: str = "idle"
    stage_reads_windows: int = 0
    stage_reads_filter: int = 0
    kloop_reads_windows: int = 0   # must stay 0: the K loop never touches globals
    kloop_reads_filter: int = 0
    scratch_panel_reads: int = 0
    panel_stages: int = 0
    register_prefetches: int = 0
    barriers: int = 0
    micro_calls: int = 0
    events: list = field(default_factory=list)

    def note(self, *event) -> None:
        self.events.append(event)

    def read_window_element(self) -> None:
        if self.phase == "consume":
            self.kloop_reads_windows += 1
        else:
            self.stage_reads_windows += 1

    def read_filter_element(self) -> None:
        if self.phase == "consume":
            self.kloop_reads_filter += 1
        else:
            self.stage_reads_filter += 1


@dataclass
class ScratchBuffers:
    """One work item's view of the block scratch: double-buffered panels,
    double-buffered register vectors, and the accumulator tile."""

    s_i: np.ndarray  # (2, k_b, n_b) staged window panels
    s_f: np.ndarray  # (2, m_b, k_b) staged filter panels
    r_i: np.ndarray  # (2, n_t) register vectors
    r_f: np.ndarray  # (2, m_t)
    r_o: np.ndarray  # (m_t, n_t) accumulator

    @classmethod
    def for_plan(cls, plan: TilePlan) -> "ScratchBuffers":
        return cls(
            s_i=np.zeros((2, plan.k_b, plan.n_b), dtype=DTYPE),
            s_f=np.zeros((2, plan.m_b, plan.k_b), dtype=DTYPE),
            r_i=np.zeros((2, plan.n_t), dtype=DTYPE),
            r_f=np.zeros((2, plan.m_t), dtype=DTYPE),
            r_o=np.zeros((plan.m_t, plan.n_t), dtype=DTYPE),
        )


def _logical_dims(windows: Im2winTensor, flt: Tensor4) -> GemmDims:
    return GemmDims(flt.dims[0], windows.n * windows.h_out * windows.w_out,
                    windows.c_in * windows.h_f * windows.w_f)


def stage_panels(windows: Im2winTensor, flt: Tensor4, block: tuple[int, int, int],
                 plan: TilePlan, scratch: ScratchBuffers, buf: int = 0,
                 counters: AccessCounters | None = None) -> None:
    """Gather block (bx, by) of K-slab kk into dense scratch panels.

    Panel slot (k', n') holds logical window-matrix element
    (kk*k_b + k', by*n_b + n'); slots outside the logical bounds are zeroed.
    """
    bx, by, kk = block
    dims = _logical_dims(windows, flt)
    counters = counters if counters is not None else AccessCounters()
    counters.phase = "stage"
    h_f, w_f, stride = windows.h_f, windows.w_f, windows.stride
    flt_rows = flt.data.reshape(dims.m, dims.k)

    s_i = scratch.s_i[buf]
    s_f = scratch.s_f[buf]
    for kp in range(plan.k_b):
        k = kk * plan.k_b + kp
        if k >= dims.k:
            s_i[kp, :] = 0.0
            continue
        i_c, f_h, f_w = decompose_k(k, h_f, w_f)
        for np_ in range(plan.n_b):
            n = by * plan.n_b + np_
            if n >= dims.n:
                s_i[kp, np_] = 0.0
                continue
            i_n, o_h, o_w = decompose_n(n, windows.h_out, windows.w_out)
            counters.read_window_element()
            s_i[kp, np_] = windows.data[i_n, i_c, o_h, (o_w * stride + f_w) * h_f + f_h]
    for mp in range(plan.m_b):
        m = bx * plan.m_b + mp
        for kp in range(plan.k_b):
            k = kk * plan.k_b + kp
            if m >= dims.m or k >= dims.k:
                s_f[mp, kp] = 0.0
            else:
                counters.read_filter_element()
                s_f[mp, kp] = flt_rows[m, k]
    counters.panel_stages += 1
    counters.note("panel_stage", kk, buf)
    counters.phase = "idle"


def micro_kernel(r_f: np.ndarray, r_i: np.ndarray, r_o: np.ndarray) -> None:
    """Rank-1 update: r_o[a, b] += r_f[a] * r_i[b]."""
    if r_o.shape != (r_f.shape[0], r_i.shape[0]):
        raise ShapeError(f"accumulator {r_o.shape} does not match vectors "
                         f"{(r_f.shape[0], r_i.shape[0])}")
    r_o += r_f[:, None] * r_i[None, :]


def _load_registers(scratch: ScratchBuffers, buf: int, reg: int, kp: int,
                    tile: tuple[int, int], plan: TilePlan,
                    counters: AccessCounters, kk: int) -> None:
    tm, tn = tile
    nb0 = tn * plan.n_t
    mb0 = tm * plan.m_t
    # both loads are contiguous slices of the staged panels
    scratch.r_i[reg, :] = scratch.s_i[buf, kp, nb0:nb0 + plan.n_t]
    scratch.r_f[reg, :] = scratch.s_f[buf, mb0:mb0 + plan.m_t, kp]
    counters.scratch_panel_reads += plan.n_t + plan.m_t
    counters.note("reg_load", kk, kp, nb0, plan.n_t, 1)


def pipeline_step(kk: int, plan: TilePlan, scratch: ScratchBuffers, *,
                  buf: int = 0, tile: tuple[int, int] = (0, 0),
                  counters: AccessCounters | None = None) -> None:
    """Consume staged K-slab kk for one micro-tile, accumulating into r_o.

    With double buffering the registers for step k'+1 are fetched while the
    micro-kernel multiplies step k'; the trailing step then runs after its
    operands were prefetched by the final loop iteration. Either way every
    output element accumulates along ascending k.
    """
    counters = counters if counters is not None else AccessCounters()
    counters.phase = "consume"
    k_b = plan.k_b
    _load_registers(scratch, buf, 0, 0, tile, plan, counters, kk)
    if plan.prefetch_double_buffer:
        current = 0
        for kp in range(1, k_b):
            pending = 1 - current
            _load_registers(scratch, buf, pending, kp, tile, plan, counters, kk)
            counters.register_prefetches += 1
            counters.note("reg_prefetch", kk, kp)
            micro_kernel(scratch.r_f[current], scratch.r_i[current], scratch.r_o)
            counters.micro_calls += 1
            counters.note("micro", kk, kp - 1)
            current = pending
        micro_kernel(scratch.r_f[current], scratch.r_i[current], scratch.r_o)
        counters.micro_calls += 1
        counters.note("micro", kk, k_b - 1)
    else:
        micro_kernel(scratch.r_f[0], scratch.r_i[0], scratch.r_o)
        counters.micro_calls += 1
        counters.note("micro", kk, 0)
        for kp in range(1, k_b):
            _load_registers(scratch, buf, 0, kp, tile, plan, counters, kk)
            micro_kernel(scratch.r_f[0], scratch.r_i[0], scratch.r_o)
            counters.micro_calls += 1
            counters.note("micro", kk, kp)
    counters.phase = "idle"


def _barrier(counters: AccessCounters) -> None:
    # stands in for the block-wide sync between staging and consumption;
    # within one sequential block it only marks protocol order
    counters.barriers += 1
    counters.note("barrier",)


def compute_from_windows_traced(windows: Im2winTensor, flt: Tensor4,
                                params: ConvParams, plan: TilePlan | None = None,
                                counters: AccessCounters | None = None) -> Tensor4:
    """Full tiled convolution driven through the step functions above."""
    if flt.dims != params.filter_dims:
        raise ShapeError(f"filter dims {flt.dims} do not match params {params.filter_dims}")
    dims = _logical_dims(windows, flt)
    if plan is None:
        plan = default_plan(dims)
    counters = counters if counters is not None else AccessCounters()

    blocks_m = -(-dims.m // plan.m_b)
    blocks_n = -(-dims.n // plan.n_b)
    blocks_k = -(-dims.k // plan.k_b)
    tiles_m = plan.m_b // plan.m_t
    tiles_n = plan.n_b // plan.n_t

    out = np.empty((windows.n, params.c_out, windows.h_out, windows.w_out), dtype=DTYPE)
    out_flat = out.reshape(-1)
    hw = windows.h_out * windows.w_out

    for bx in range(blocks_m):
        for by in range(blocks_n):
            scratch = ScratchBuffers.for_plan(plan)
            acc = np.zeros((tiles_m, tiles_n, plan.m_t, plan.n_t), dtype=DTYPE)
            stage_panels(windows, flt, (bx, by, 0), plan, scratch, 0, counters)
            _barrier(counters)
            cur = 0
            for kk in range(blocks_k):
                if not plan.prefetch_double_buffer and kk > 0:
                    stage_panels(windows, flt, (bx, by, kk), plan, scratch, 0, counters)
                    _barrier(counters)
                if plan.prefetch_double_buffer and kk + 1 < blocks_k:
                    stage_panels(windows, flt, (bx, by, kk + 1), plan, scratch,
                                 1 - cur, counters)
                    _barrier(counters)
                for tm in range(tiles_m):
                    for tn in range(tiles_n):
                        scratch.r_o[:] = acc[tm, tn]
                        pipeline_step(kk, plan, scratch, buf=cur, tile=(tm, tn),
                                      counters=counters)
                        acc[tm, tn] = scratch.r_o
                if plan.prefetch_double_buffer:
                    cur = 1 - cur
            for tm in range(tiles_m):
                for tn in range(tiles_n):
                    for a in range(plan.m_t):
                        m = bx * plan.m_b + tm * plan.m_t + a
                        if m >= dims.m:
                            continue
                        for b in range(plan.n_t):
                            n = by * plan.n_b + tn * plan.n_t + b
                            if n >= dims.n:
                                continue
                            i_n, o_h, o_w = decompose_n(n, windows.h_out, windows.w_out)
                            out_flat[(i_n * params.c_out + m) * hw + o_h * windows.w_out + o_w] = \
                                acc[tm, tn, a, b]
    return Tensor4(out)


def conv_im2win_opt_traced(inp: Tensor4, flt: Tensor4, params: ConvParams,
                           plan: TilePlan | None = None,
                           counters: AccessCounters | None = None) -> Tensor4:
    check_conv_operands(inp, flt, params)
    return compute_from_windows_traced(im2win(inp, params), flt, params, plan, counters)
