"""Benchmark harness: timing, FLOP and footprint accounting, ablation.

Protocol per run: one warm-up execution, then `repeats` timed executions on
a monotonic clock; the run with the smallest total (transform + compute)
time is reported. Memory accounting is analytic element counting times four
bytes, not process RSS, since the comparison concerns materialized layout
data rather than allocator behavior.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, replace

import numpy as np
import psutil

from .errors import MemoryBudgetError
from .kernels.optimized import compute_from_windows_opt
from .kernels.plan import TilePlan, default_plan
from .kernels.reference import (
    GemmDims,
    compute_from_windows_basic,
    conv_direct,
    conv_implicit_gemm,
    gemm,
)
from .layouts import filter_to_matrix, footprint_elems, im2col, im2win, output_from_matrix
from .tensors import ConvParams, Tensor4, output_dims

ALGORITHMS = ("direct", "im2col-gemm", "implicit-gemm", "im2win-basic", "im2win-opt")
# the four headline algorithms a bare "all" selects; the basic window kernel
# is reachable by name and through the ablation/speedup paths
COMPARISON_ALGORITHMS = ("direct", "im2col-gemm", "implicit-gemm", "im2win-opt")

ABLATION_VARIANTS = ("full", "-prefetch-double-buffer", "-vectorized-load", "-micro-kernel")

BYTES_PER_ELEM = 4
_MEM_SLACK = 1.1  # headroom over the analytic requirement


@dataclass(frozen=True)
class BenchConfig:
    """One benchmark: geometry, batch, protocol, and algorithm selection."""

    name: str
    c_in: int
    h_in: int
    w_in: int
    c_out: int
    h_f: int
    w_f: int
    stride: int
    batch: int = 2
    repeats: int = 10
    algorithm: str = "im2win-opt"
    plan: TilePlan | None = None
    seed: int = 0

    @property
    def params(self) -> ConvParams:
        return ConvParams(c_in=self.c_in, c_out=self.c_out, h_f=self.h_f,
                          w_f=self.w_f, stride=self.stride)

    @property
    def out_dims(self) -> tuple[int, int]:
        return output_dims(self.h_in, self.w_in, self.params)

    @property
    def flops(self) -> int:
        h_out, w_out = self.out_dims
        return (2 * self.batch * self.c_out * h_out * w_out
                * self.c_in * self.h_f * self.w_f)

    def gemm_dims(self) -> GemmDims:
        h_out, w_out = self.out_dims
        return GemmDims(self.c_out, self.batch * h_out * w_out,
                        self.c_in * self.h_f * self.w_f)


def _cfg(name, c_in, h_in, w_in, c_out, h_f, w_f, stride) -> BenchConfig:
    return BenchConfig(name=name, c_in=c_in, h_in=h_in, w_in=w_in,
                       c_out=c_out, h_f=h_f, w_f=w_f, stride=stride)


# the twelve built-in DNN layer benchmarks
BENCHMARKS = {
    cfg.name: cfg
    for cfg in (
        _cfg("conv1", 3, 227, 227, 96, 11, 11, 4),
        _cfg("conv2", 3, 231, 231, 96, 11, 11, 4),
        _cfg("conv3", 3, 227, 227, 64, 7, 7, 2),
        _cfg("conv4", 64, 224, 224, 64, 7, 7, 2),
        _cfg("conv5", 96, 24, 24, 256, 5, 5, 1),
        _cfg("conv6", 256, 12, 12, 512, 3, 3, 1),
        _cfg("conv7", 3, 224, 224, 64, 3, 3, 1),
        _cfg("conv8", 64, 112, 112, 128, 3, 3, 1),
        _cfg("conv9", 64, 56, 56, 64, 3, 3, 1),
        _cfg("conv10", 128, 28, 28, 128, 3, 3, 1),
        _cfg("conv11", 256, 14, 14, 256, 3, 3, 1),
        _cfg("conv12", 512, 7, 7, 512, 3, 3, 1),
    )
}

CSV_COLUMNS = ("name", "algorithm", "variant", "batch", "repeats", "h_o", "w_o",
               "flops", "transform_s", "compute_s", "total_s", "tflops",
               "raw_elems", "im2col_elems", "im2win_elems",
               "footprint_reduction_pct", "checksum")


@dataclass(frozen=True)
class BenchRecord:
    """Best-of-R measurement for one (config, algorithm, variant)."""

    name: str
    algorithm: str
    variant: str
    batch: int
    repeats: int
    h_out: int
    w_out: int
    flops: int
    transform_s: float
    compute_s: float
    total_s: float
    tflops: float
    raw_elems: int
    im2col_elems: int
    im2win_elems: int
    footprint_reduction_pct: float
    checksum: str
    timing_spread_s: float = 0.0  # max-min of the repeat totals, diagnostic only

    @property
    def raw_bytes(self) -> int:
        return self.raw_elems * BYTES_PER_ELEM

    @property
    def im2col_bytes(self) -> int:
        return self.im2col_elems * BYTES_PER_ELEM

    @property
    def im2win_bytes(self) -> int:
        return self.im2win_elems * BYTES_PER_ELEM


def checksum_tensor(t: Tensor4) -> str:
    return hashlib.sha256(t.data.tobytes()).hexdigest()[:16]


def make_inputs(cfg: BenchConfig) -> tuple[Tensor4, Tensor4]:
    """Seeded standard-normal input and filter tensors."""
    rng = np.random.default_rng(cfg.seed)
    inp = rng.standard_normal((cfg.batch, cfg.c_in, cfg.h_in, cfg.w_in),
                              dtype=np.float32)
    flt = rng.standard_normal((cfg.c_out, cfg.c_in, cfg.h_f, cfg.w_f),
                              dtype=np.float32)
    return Tensor4(inp), Tensor4(flt)


def estimate_bytes(cfg: BenchConfig) -> int:
    """Bytes the run will materialize: operands, output, and layout data."""
    params = cfg.params
    h_out, w_out = cfg.out_dims
    elems = (cfg.batch * cfg.c_in * cfg.h_in * cfg.w_in
             + cfg.c_out * cfg.c_in * cfg.h_f * cfg.w_f
             + cfg.batch * cfg.c_out * h_out * w_out)
    if cfg.algorithm == "im2col-gemm":
        per_image = footprint_elems("im2col", 1, cfg.c_in, cfg.h_in, cfg.w_in, params)
        elems += per_image + cfg.c_in * cfg.h_f * cfg.w_f * cfg.c_out
        elems += h_out * w_out * cfg.c_out  # product matrix
    elif cfg.algorithm in ("im2win-basic", "im2win-opt"):
        elems += footprint_elems("im2win", cfg.batch, cfg.c_in, cfg.h_in,
                                 cfg.w_in, params)
    return elems * BYTES_PER_ELEM


def _check_memory_budget(cfg: BenchConfig) -> None:
    required = int(estimate_bytes(cfg) * _MEM_SLACK)
    available = psutil.virtual_memory().available
    if required > available:
        raise MemoryBudgetError(required, available)


def _execute(cfg: BenchConfig, inp: Tensor4, flt: Tensor4) -> tuple[float, float, Tensor4]:
    """One measured execution; returns (transform_s, compute_s, output)."""
    params = cfg.params
    clock = time.perf_counter
    if cfg.algorithm == "direct":
        t0 = clock()
        out = conv_direct(inp, flt, params)
        return 0.0, clock() - t0, out
    if cfg.algorithm == "implicit-gemm":
        t0 = clock()
        out = conv_implicit_gemm(inp, flt, params)
        return 0.0, clock() - t0, out
    if cfg.algorithm == "im2col-gemm":
        h_out, w_out = cfg.out_dims
        out = np.empty((cfg.batch, cfg.c_out, h_out, w_out), dtype=np.float32)
        t0 = clock()
        flt_mat = filter_to_matrix(flt, params)
        transform = clock() - t0
        compute = 0.0
        for i in range(cfg.batch):
            t0 = clock()
            lowered = im2col(inp.data[i], params)
            transform += clock() - t0
            t0 = clock()
            out[i] = output_from_matrix(gemm(lowered, flt_mat), h_out, w_out)
            compute += clock() - t0
        return transform, compute, Tensor4(out)
    if cfg.algorithm in ("im2win-basic", "im2win-opt"):
        t0 = clock()
        windows = im2win(inp, params)
        transform = clock() - t0
        t0 = clock()
        if cfg.algorithm == "im2win-basic":
            out = compute_from_windows_basic(windows, flt, params)
        else:
            out = compute_from_windows_opt(windows, flt, params, cfg.plan)
        return transform, clock() - t0, out
    raise ValueError(f"unknown algorithm {cfg.algorithm!r}, expected one of {ALGORITHMS}")


def run_bench(cfg: BenchConfig, variant: str = "-") -> BenchRecord:
    """Warm up once, run `repeats` times, report the fastest run."""
    if cfg.algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {cfg.algorithm!r}, expected one of {ALGORITHMS}")
    if cfg.repeats < 1:
        raise ValueError("repeats must be >= 1")
    _check_memory_budget(cfg)
    inp, flt = make_inputs(cfg)
    _execute(cfg, inp, flt)  # warm-up
    best = None
    totals = []
    for _ in range(cfg.repeats):
        transform, compute, out = _execute(cfg, inp, flt)
        totals.append(transform + compute)
        if best is None or totals[-1] < best[0]:
            best = (totals[-1], transform, compute, out)
    total, transform, compute, out = best
    h_out, w_out = cfg.out_dims
    params = cfg.params
    im2col_count = footprint_elems("im2col", cfg.batch, cfg.c_in, cfg.h_in, cfg.w_in, params)
    im2win_count = footprint_elems("im2win", cfg.batch, cfg.c_in, cfg.h_in, cfg.w_in, params)
    return BenchRecord(
        name=cfg.name,
        algorithm=cfg.algorithm,
        variant=variant,
        batch=cfg.batch,
        repeats=cfg.repeats,
        h_out=h_out,
        w_out=w_out,
        flops=cfg.flops,
        transform_s=transform,
        compute_s=compute,
        total_s=total,
        tflops=cfg.flops / total / 1e12,
        raw_elems=footprint_elems("raw", cfg.batch, cfg.c_in, cfg.h_in, cfg.w_in, params),
        im2col_elems=im2col_count,
        im2win_elems=im2win_count,
        footprint_reduction_pct=100.0 * (1.0 - im2win_count / im2col_count),
        checksum=checksum_tensor(out),
        timing_spread_s=max(totals) - min(totals),
    )


def run_ablation(cfg: BenchConfig) -> list[BenchRecord]:
    """Full tiled kernel, then each optimization removed one at a time."""
    base_plan = cfg.plan if cfg.plan is not None else default_plan(cfg.gemm_dims())
    variants = {
        "full": base_plan,
        "-prefetch-double-buffer": base_plan.with_toggles(prefetch_double_buffer=False),
        "-vectorized-load": base_plan.with_toggles(vectorized_load=False),
        "-micro-kernel": base_plan.with_toggles(micro_kernel=False),
    }
    records = []
    for label, plan in variants.items():
        variant_cfg = replace(cfg, algorithm="im2win-opt", plan=plan)
        records.append(run_bench(variant_cfg, variant=label))
    return records


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _record_sort_key(record: BenchRecord):
    order = list(BENCHMARKS)
    config_rank = order.index(record.name) if record.name in order else len(order)
    return (config_rank, record.name, record.algorithm, record.variant)


def report_csv(records: list[BenchRecord]) -> str:
    """Render records as CSV, ordered by (config, algorithm, variant)."""
    if not records:
        raise ValueError("no records to report")
    lines = [",".join(CSV_COLUMNS)]
    for r in sorted(records, key=_record_sort_key):
        row = (r.name, r.algorithm, r.variant, r.batch, r.repeats, r.h_out, r.w_out,
               r.flops, r.transform_s, r.compute_s, r.total_s, r.tflops,
               r.raw_elems, r.im2col_elems, r.im2win_elems,
               r.footprint_reduction_pct, r.checksum)
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class FootprintRow:
    name: str
    batch: int
    raw_elems: int
    im2col_elems: int
    im2win_elems: int
    reduction_pct: float


def footprint_report(cfgs: list[BenchConfig]) -> list[FootprintRow]:
    """Per-config element counts per layout plus the window-vs-column saving."""
    rows = []
    for cfg in cfgs:
        params = cfg.params
        raw = footprint_elems("raw", cfg.batch, cfg.c_in, cfg.h_in, cfg.w_in, params)
        col = footprint_elems("im2col", cfg.batch, cfg.c_in, cfg.h_in, cfg.w_in, params)
        win = footprint_elems("im2win", cfg.batch, cfg.c_in, cfg.h_in, cfg.w_in, params)
        rows.append(FootprintRow(cfg.name, cfg.batch, raw, col, win,
                                 100.0 * (1.0 - win / col)))
    return rows


DEFAULT_SEARCH_GRID = tuple(
    (m_b, n_b, k_b)
    for m_b in (16, 32, 64, 128)
    for n_b in (16, 32, 64, 128)
    for k_b in (4, 8, 16)
)


def search_plan(cfg: BenchConfig, grid=DEFAULT_SEARCH_GRID,
                repeats: int = 1) -> list[tuple[TilePlan, float]]:
    """One-shot grid search over block extents; returns (plan, seconds) sorted
    fastest-first. Micro-tiles stay at the default 8x8 (clamped)."""
    dims = cfg.gemm_dims()
    m_t = min(8, dims.m)
    n_t = min(8, dims.n)
    results = []
    inp, flt = make_inputs(cfg)
    params = cfg.params
    windows = im2win(inp, params)
    for m_b, n_b, k_b in grid:
        if m_b % m_t or n_b % n_t:
            continue
        plan = TilePlan(m_b=m_b, n_b=n_b, k_b=k_b, m_t=m_t, n_t=n_t)
        compute_from_windows_opt(windows, flt, params, plan)  # warm-up
        best = min(
            _timed(compute_from_windows_opt, windows, flt, params, plan)
            for _ in range(repeats)
        )
        results.append((plan, best))
    results.sort(key=lambda pair: pair[1])
    return results


def _timed(fn, *args) -> float:
    t0 = time.perf_counter()
    fn(*args)
    return time.perf_counter() - t0
