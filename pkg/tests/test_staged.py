import itertools

import numpy as np
import pytest

import winconv as wc
from winconv.kernels.reference import decompose_k, decompose_n
from winconv.kernels.staged import (
    AccessCounters,
    ScratchBuffers,
    compute_from_windows_traced,
    conv_im2win_opt_traced,
    micro_kernel,
    pipeline_step,
    stage_panels,
)

from conftest import make_case, random_geometry


def small_case(seed=60, **overrides):
    rng = np.random.default_rng(seed)
    geo = dict(batch=1, c_in=2, c_out=3, h_f=2, w_f=2, stride=1, h_in=5, w_in=5)
    geo.update(overrides)
    return make_case(rng, **geo)


def logical_window_matrix(windows, params):
    """The K x N matrix the staged panels tile, materialized by loops."""
    dim_k = params.c_in * params.h_f * params.w_f
    dim_n = windows.n * windows.h_out * windows.w_out
    mat = np.zeros((dim_k, dim_n), dtype=np.float32)
    for k in range(dim_k):
        i_c, f_h, f_w = decompose_k(k, params.h_f, params.w_f)
        for n in range(dim_n):
            i_n, o_h, o_w = decompose_n(n, windows.h_out, windows.w_out)
            mat[k, n] = wc.im2win_gather(windows, i_n, i_c, o_h, f_h, f_w, o_w)
    return mat


class TestScratchBuffers:
    def test_shapes_and_zero_init(self):
        plan = wc.TilePlan(m_b=6, n_b=8, k_b=5, m_t=3, n_t=4)
        scratch = ScratchBuffers.for_plan(plan)
        assert scratch.s_i.shape == (2, 5, 8)
        assert scratch.s_f.shape == (2, 6, 5)
        assert scratch.r_i.shape == (2, 4)
        assert scratch.r_f.shape == (2, 3)
        assert scratch.r_o.shape == (3, 4)
        assert (scratch.r_o == 0).all()


class TestStagePanels:
    def test_single_element_panel(self):
        inp, flt, params = small_case()
        windows = wc.im2win(inp, params)
        plan = wc.TilePlan(m_b=1, n_b=1, k_b=1, m_t=1, n_t=1)
        scratch = ScratchBuffers.for_plan(plan)
        stage_panels(windows, flt, (0, 3, 2), plan, scratch)
        i_c, f_h, f_w = decompose_k(2, params.h_f, params.w_f)
        i_n, o_h, o_w = decompose_n(3, windows.h_out, windows.w_out)
        assert scratch.s_i[0, 0, 0] == wc.im2win_gather(windows, i_n, i_c, o_h,
                                                        f_h, f_w, o_w)
        assert scratch.s_f[0, 0, 0] == flt.data.reshape(3, -1)[0, 2]

    def test_full_panel_equals_materialized_matrix(self):
        inp, flt, params = small_case()
        windows = wc.im2win(inp, params)
        dim_k = params.c_in * params.h_f * params.w_f
        dim_n = windows.n * windows.h_out * windows.w_out
        dim_m = params.c_out
        plan = wc.TilePlan(m_b=dim_m, n_b=dim_n, k_b=dim_k, m_t=1, n_t=1)
        scratch = ScratchBuffers.for_plan(plan)
        stage_panels(windows, flt, (0, 0, 0), plan, scratch)
        assert (scratch.s_i[0] == logical_window_matrix(windows, params)).all()
        assert (scratch.s_f[0] == flt.data.reshape(dim_m, dim_k)).all()

    def test_edge_overhang_zero_filled(self):
        inp, flt, params = small_case()
        windows = wc.im2win(inp, params)
        dim_n = windows.n * windows.h_out * windows.w_out
        plan = wc.TilePlan(m_b=4, n_b=dim_n + 3, k_b=4, m_t=1, n_t=1)
        scratch = ScratchBuffers.for_plan(plan)
        scratch.s_i[0] = 1.0  # must be overwritten with zeros
        stage_panels(windows, flt, (0, 0, 0), plan, scratch)
        assert (scratch.s_i[0, :, dim_n:] == 0).all()
        assert (scratch.s_f[0, 3:, :] == 0).all()  # c_out == 3

    def test_counts_stage_reads(self):
        inp, flt, params = small_case()
        windows = wc.im2win(inp, params)
        plan = wc.TilePlan(m_b=2, n_b=4, k_b=3, m_t=1, n_t=1)
        scratch = ScratchBuffers.for_plan(plan)
        counters = AccessCounters()
        stage_panels(windows, flt, (0, 0, 0), plan, scratch, 0, counters)
        assert counters.panel_stages == 1
        assert counters.stage_reads_windows == 3 * 4
        assert counters.stage_reads_filter == 2 * 3
        assert counters.kloop_reads_windows == 0


class TestMicroKernel:
    def test_scalar(self):
        r_o = np.zeros((1, 1), dtype=np.float32)
        micro_kernel(np.ones(1, dtype=np.float32), np.ones(1, dtype=np.float32), r_o)
        assert r_o[0, 0] == 1.0

    def test_rank_one_update(self):
        r_f = np.array([1.0, 2.0], dtype=np.float32)
        r_i = np.array([3.0, 4.0], dtype=np.float32)
        r_o = np.zeros((2, 2), dtype=np.float32)
        micro_kernel(r_f, r_i, r_o)
        assert r_o.tolist() == [[3.0, 4.0], [6.0, 8.0]]

    def test_accumulates(self):
        r_f = np.array([1.0], dtype=np.float32)
        r_i = np.array([2.0], dtype=np.float32)
        r_o = np.full((1, 1), 10.0, dtype=np.float32)
        micro_kernel(r_f, r_i, r_o)
        assert r_o[0, 0] == 12.0

    def test_rank_one_sum_equals_gemm(self):
        rng = np.random.default_rng(61)
        m_t, n_t, k_b = 3, 4, 7
        panel_f = rng.standard_normal((m_t, k_b), dtype=np.float32)
        panel_i = rng.standard_normal((k_b, n_t), dtype=np.float32)
        r_o = np.zeros((m_t, n_t), dtype=np.float32)
        for kp in range(k_b):
            micro_kernel(panel_f[:, kp].copy(), panel_i[kp].copy(), r_o)
        expected = wc.gemm(wc.Mat2(panel_f), wc.Mat2(panel_i))
        assert (r_o == expected.data).all()

    def test_shape_mismatch(self):
        with pytest.raises(wc.ShapeError):
            micro_kernel(np.ones(2, dtype=np.float32), np.ones(3, dtype=np.float32),
                         np.zeros((3, 2), dtype=np.float32))


class TestPipelineStep:
    def _staged_scratch(self, plan, seed=62):
        rng = np.random.default_rng(seed)
        scratch = ScratchBuffers.for_plan(plan)
        scratch.s_i[:] = rng.standard_normal(scratch.s_i.shape).astype(np.float32)
        scratch.s_f[:] = rng.standard_normal(scratch.s_f.shape).astype(np.float32)
        return scratch

    def test_single_tile_matches_manual_dot(self):
        plan = wc.TilePlan(m_b=4, n_b=6, k_b=5, m_t=2, n_t=3)
        scratch = self._staged_scratch(plan)
        pipeline_step(0, plan, scratch, buf=0, tile=(1, 1))
        mb0, nb0 = 2, 3
        for a in range(2):
            for b in range(3):
                acc = np.float32(0.0)
                for kp in range(5):
                    acc = np.float32(acc + scratch.s_f[0, mb0 + a, kp]
                                     * scratch.s_i[0, kp, nb0 + b])
                assert scratch.r_o[a, b] == acc

    def test_prefetch_on_off_bit_identical(self):
        base = wc.TilePlan(m_b=4, n_b=6, k_b=5, m_t=2, n_t=3)
        results = []
        for pf in (True, False):
            plan = base.with_toggles(prefetch_double_buffer=pf)
            scratch = self._staged_scratch(plan)
            pipeline_step(0, plan, scratch, buf=0, tile=(0, 1))
            results.append(scratch.r_o.copy())
        assert (results[0] == results[1]).all()

    def test_register_prefetch_precedes_every_micro_but_last(self):
        plan = wc.TilePlan(m_b=2, n_b=4, k_b=6, m_t=2, n_t=4)
        scratch = self._staged_scratch(plan)
        counters = AccessCounters()
        pipeline_step(0, plan, scratch, buf=0, tile=(0, 0), counters=counters)
        assert counters.register_prefetches == plan.k_b - 1
        fetched = set()
        for event in counters.events:
            if event[0] == "reg_load":
                fetched.add(event[2])
            elif event[0] == "micro":
                kp = event[2]
                if kp < plan.k_b - 1:
                    # operands of the NEXT step were fetched before this multiply
                    assert kp + 1 in fetched

    def test_register_loads_are_contiguous(self):
        plan = wc.TilePlan(m_b=2, n_b=8, k_b=4, m_t=2, n_t=4)
        scratch = self._staged_scratch(plan)
        counters = AccessCounters()
        pipeline_step(0, plan, scratch, buf=0, tile=(0, 1), counters=counters)
        loads = [e for e in counters.events if e[0] == "reg_load"]
        assert loads
        for _, _, _, start, width, step in loads:
            assert step == 1
            assert width == plan.n_t


class TestTracedExecution:
    def test_single_k_block_skips_panel_prefetch(self):
        inp, flt, params = small_case()
        windows = wc.im2win(inp, params)
        dim_k = params.c_in * params.h_f * params.w_f
        plan = wc.TilePlan(m_b=4, n_b=8, k_b=dim_k, m_t=2, n_t=2)
        counters = AccessCounters()
        compute_from_windows_traced(windows, flt, params, plan, counters)
        blocks = -(-params.c_out // plan.m_b) * -(-(windows.n * windows.h_out
                                                    * windows.w_out) // plan.n_b)
        assert counters.panel_stages == blocks  # exactly one staging per block

    def test_matches_fast_kernel_bitwise(self, warm_kernels):
        rng = np.random.default_rng(63)
        for _ in range(6):
            geo = random_geometry(rng, max_out=4)
            inp, flt, params = make_case(rng, **geo)
            plan_base = wc.TilePlan(m_b=2, n_b=4, k_b=3, m_t=2, n_t=2)
            for micro, vec, pf in itertools.product((True, False), repeat=3):
                plan = plan_base.with_toggles(micro_kernel=micro, vectorized_load=vec,
                                              prefetch_double_buffer=pf)
                traced = conv_im2win_opt_traced(inp, flt, params, plan)
                fast = wc.conv_im2win_opt(inp, flt, params, plan)
                assert traced == fast

    def test_matches_direct(self, warm_kernels):
        inp, flt, params = small_case(seed=64, batch=2, h_in=7, w_in=6, stride=2,
                                      h_f=3, w_f=2)
        out = conv_im2win_opt_traced(inp, flt, params,
                                     wc.TilePlan(m_b=2, n_b=8, k_b=5, m_t=1, n_t=4))
        assert wc.max_rel_diff(out, wc.conv_direct(inp, flt, params)) <= 1e-4

    def test_scratch_residency(self):
        inp, flt, params = small_case(seed=65)
        counters = AccessCounters()
        conv_im2win_opt_traced(inp, flt, params,
                               wc.TilePlan(m_b=2, n_b=4, k_b=4, m_t=2, n_t=2),
                               counters)
        assert counters.kloop_reads_windows == 0
        assert counters.kloop_reads_filter == 0
        assert counters.scratch_panel_reads > 0
        assert counters.micro_calls > 0
        assert counters.barriers > 0
