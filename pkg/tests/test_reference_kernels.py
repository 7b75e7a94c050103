import numpy as np
import pytest

import winconv as wc
from winconv.kernels.reference import compose_k, compose_n, decompose_k, decompose_n

from conftest import make_case, random_geometry


def oracle_conv(inp, flt, stride):
    """Independent scalar-loop convolution in float32, the slow ground truth."""
    n_img, c_in, h_in, w_in = inp.shape
    c_out, _, h_f, w_f = flt.shape
    h_out = (h_in - h_f) // stride + 1
    w_out = (w_in - w_f) // stride + 1
    out = np.zeros((n_img, c_out, h_out, w_out), dtype=np.float32)
    for i in range(n_img):
        for j in range(c_out):
            for m in range(h_out):
                for n in range(w_out):
                    acc = np.float32(0.0)
                    for r in range(c_in):
                        for u in range(h_f):
                            for v in range(w_f):
                                acc = np.float32(
                                    acc + inp[i, r, m * stride + u, n * stride + v]
                                    * flt[j, r, u, v]
                                )
                    out[i, j, m, n] = acc
    return out


class TestConvDirect:
    def test_all_ones_2x2(self):
        inp = wc.Tensor4(np.ones((1, 1, 2, 2), dtype=np.float32))
        flt = wc.Tensor4(np.ones((1, 1, 2, 2), dtype=np.float32))
        p = wc.ConvParams(c_in=1, c_out=1, h_f=2, w_f=2, stride=1)
        out = wc.conv_direct(inp, flt, p)
        assert out.dims == (1, 1, 1, 1)
        assert out.data[0, 0, 0, 0] == 4.0

    def test_identity_filter(self):
        inp = wc.Tensor4(np.arange(9, dtype=np.float32).reshape(1, 1, 3, 3))
        flt = wc.Tensor4(np.ones((1, 1, 1, 1), dtype=np.float32))
        p = wc.ConvParams(c_in=1, c_out=1, h_f=1, w_f=1, stride=1)
        out = wc.conv_direct(inp, flt, p)
        assert (out.data == inp.data).all()

    def test_window_sums_against_oracle(self, warm_kernels):
        inp = np.arange(27, dtype=np.float32).reshape(1, 3, 3, 3)
        flt = np.ones((2, 3, 2, 2), dtype=np.float32)
        p = wc.ConvParams(c_in=3, c_out=2, h_f=2, w_f=2, stride=1)
        out = wc.conv_direct(wc.Tensor4(inp), wc.Tensor4(flt), p)
        assert (out.data == oracle_conv(inp, flt, 1)).all()

    def test_random_against_oracle(self, warm_kernels):
        rng = np.random.default_rng(31)
        for _ in range(5):
            geo = random_geometry(rng, max_out=4)
            inp, flt, params = make_case(rng, **geo)
            out = wc.conv_direct(inp, flt, params)
            assert (out.data == oracle_conv(inp.data, flt.data, params.stride)).all()

    def test_shape_errors(self):
        inp = wc.Tensor4(np.zeros((1, 2, 4, 4), dtype=np.float32))
        flt = wc.Tensor4(np.zeros((1, 3, 2, 2), dtype=np.float32))
        p = wc.ConvParams(c_in=3, c_out=1, h_f=2, w_f=2, stride=1)
        with pytest.raises(wc.ShapeError):
            wc.conv_direct(inp, flt, p)


class TestGemm:
    def test_identity_times_random(self):
        rng = np.random.default_rng(32)
        b = wc.Mat2(rng.standard_normal((4, 3), dtype=np.float32))
        eye = wc.Mat2(np.eye(4, dtype=np.float32))
        out = wc.gemm(eye, b)
        assert (out.data == b.data).all()

    def test_two_by_two(self):
        a = wc.Mat2(np.array([[1, 2], [3, 4]], dtype=np.float32))
        b = wc.Mat2(np.array([[5, 6], [7, 8]], dtype=np.float32))
        assert wc.gemm(a, b).data.tolist() == [[19, 22], [43, 50]]

    def test_zeros(self):
        rng = np.random.default_rng(33)
        a = wc.Mat2(np.zeros((3, 5), dtype=np.float32))
        b = wc.Mat2(rng.standard_normal((5, 2), dtype=np.float32))
        assert (wc.gemm(a, b).data == 0).all()

    def test_matches_scalar_triple_loop(self):
        rng = np.random.default_rng(34)
        a = rng.standard_normal((7, 9), dtype=np.float32)
        b = rng.standard_normal((9, 5), dtype=np.float32)
        expected = np.zeros((7, 5), dtype=np.float32)
        for i in range(7):
            for j in range(5):
                acc = np.float32(0.0)
                for k in range(9):
                    acc = np.float32(acc + a[i, k] * b[k, j])
                expected[i, j] = acc
        out = wc.gemm(wc.Mat2(a), wc.Mat2(b))
        assert (out.data == expected).all()

    def test_inner_dim_mismatch(self):
        a = wc.Mat2(np.zeros((2, 3), dtype=np.float32))
        b = wc.Mat2(np.zeros((4, 2), dtype=np.float32))
        with pytest.raises(wc.ShapeError):
            wc.gemm(a, b)


class TestConvIm2colGemm:
    def test_trivial_routes_bit_equal(self, warm_kernels):
        inp = wc.Tensor4(np.arange(16, dtype=np.float32).reshape(1, 1, 4, 4))
        flt = wc.Tensor4(np.ones((2, 1, 2, 2), dtype=np.float32))
        p = wc.ConvParams(c_in=1, c_out=2, h_f=2, w_f=2, stride=1)
        assert wc.conv_im2col_gemm(inp, flt, p) == wc.conv_direct(inp, flt, p)

    def test_random_16x16(self, warm_kernels):
        rng = np.random.default_rng(35)
        inp = wc.Tensor4(rng.standard_normal((2, 3, 16, 16), dtype=np.float32))
        flt = wc.Tensor4(rng.standard_normal((4, 3, 3, 3), dtype=np.float32))
        p = wc.ConvParams(c_in=3, c_out=4, h_f=3, w_f=3, stride=1)
        diff = wc.max_rel_diff(wc.conv_direct(inp, flt, p),
                               wc.conv_im2col_gemm(inp, flt, p))
        assert diff <= 1e-4

    def test_conv5_geometry(self, warm_kernels):
        rng = np.random.default_rng(36)
        inp = wc.Tensor4(rng.standard_normal((1, 96, 24, 24), dtype=np.float32))
        flt = wc.Tensor4(rng.standard_normal((256, 96, 5, 5), dtype=np.float32))
        p = wc.ConvParams(c_in=96, c_out=256, h_f=5, w_f=5, stride=1)
        diff = wc.max_rel_diff(wc.conv_direct(inp, flt, p),
                               wc.conv_im2col_gemm(inp, flt, p))
        assert diff <= 1e-4


class TestConvImplicitGemm:
    def test_identity_filter(self):
        inp = wc.Tensor4(np.arange(18, dtype=np.float32).reshape(1, 1, 3, 6))
        flt = wc.Tensor4(np.ones((1, 1, 1, 1), dtype=np.float32))
        p = wc.ConvParams(c_in=1, c_out=1, h_f=1, w_f=1, stride=1)
        out = wc.conv_implicit_gemm(inp, flt, p)
        assert (out.data == inp.data).all()

    def test_fig1_bit_equal_to_direct(self, warm_kernels):
        rng = np.random.default_rng(37)
        inp, flt, p = make_case(rng, batch=1, c_in=3, c_out=2, h_f=2, w_f=2,
                                stride=1, h_in=3, w_in=3)
        assert wc.conv_implicit_gemm(inp, flt, p) == wc.conv_direct(inp, flt, p)

    def test_conv12_geometry_batch2(self, warm_kernels):
        rng = np.random.default_rng(38)
        inp, flt, p = make_case(rng, batch=2, c_in=512, c_out=512, h_f=3, w_f=3,
                                stride=1, h_in=7, w_in=7)
        diff = wc.max_rel_diff(wc.conv_direct(inp, flt, p),
                               wc.conv_implicit_gemm(inp, flt, p))
        assert diff <= 1e-4

    def test_index_recovery_is_bijection(self):
        h_out, w_out, h_f, w_f = 3, 4, 2, 3
        n_img, c_in, c_out = 2, 3, 2
        seen = set()
        for m in range(c_out):
            for n in range(n_img * h_out * w_out):
                for k in range(c_in * h_f * w_f):
                    i_n, o_h, o_w = decompose_n(n, h_out, w_out)
                    i_c, f_h, f_w = decompose_k(k, h_f, w_f)
                    assert compose_n(i_n, o_h, o_w, h_out, w_out) == n
                    assert compose_k(i_c, f_h, f_w, h_f, w_f) == k
                    seen.add((m, i_n, o_h, o_w, i_c, f_h, f_w))
        assert len(seen) == c_out * n_img * h_out * w_out * c_in * h_f * w_f


class TestConvIm2winBasic:
    def test_pointwise_filter_bit_equal(self, warm_kernels):
        rng = np.random.default_rng(39)
        inp, flt, p = make_case(rng, batch=2, c_in=3, c_out=4, h_f=1, w_f=1,
                                stride=1, h_in=5, w_in=5)
        assert wc.conv_im2win_basic(inp, flt, p) == wc.conv_direct(inp, flt, p)

    def test_fig1_all_ones_filter(self, warm_kernels):
        inp = wc.Tensor4(np.arange(27, dtype=np.float32).reshape(1, 3, 3, 3))
        flt = wc.Tensor4(np.ones((2, 3, 2, 2), dtype=np.float32))
        p = wc.ConvParams(c_in=3, c_out=2, h_f=2, w_f=2, stride=1)
        assert wc.conv_im2win_basic(inp, flt, p) == wc.conv_direct(inp, flt, p)

    def test_strided_benchmark_geometries(self, warm_kernels):
        # full 12-benchmark sweep runs in the acceptance suite
        rng = np.random.default_rng(40)
        for c_in, h, w, c_out, h_f, w_f, s in [
            (3, 227, 227, 96, 11, 11, 4),   # conv1
            (96, 24, 24, 256, 5, 5, 1),     # conv5
            (512, 7, 7, 512, 3, 3, 1),      # conv12
        ]:
            inp, flt, p = make_case(rng, batch=2, c_in=c_in, c_out=c_out,
                                    h_f=h_f, w_f=w_f, stride=s, h_in=h, w_in=w)
            diff = wc.max_rel_diff(wc.conv_direct(inp, flt, p),
                                   wc.conv_im2win_basic(inp, flt, p))
            assert diff <= 1e-4


class TestKernelProperties:
    def test_four_way_agreement_random_geometries(self, warm_kernels):
        rng = np.random.default_rng(41)
        routes = (wc.conv_im2col_gemm, wc.conv_implicit_gemm, wc.conv_im2win_basic,
                  wc.conv_im2win_opt)
        for _ in range(25):
            geo = random_geometry(rng)
            inp, flt, params = make_case(rng, **geo)
            ref = wc.conv_direct(inp, flt, params)
            for fn in routes:
                assert wc.max_rel_diff(ref, fn(inp, flt, params)) <= 1e-4

    def test_scaling_linearity(self, warm_kernels):
        rng = np.random.default_rng(42)
        inp, flt, p = make_case(rng, batch=1, c_in=2, c_out=3, h_f=3, w_f=3,
                                stride=1, h_in=8, w_in=8)
        alpha = np.float32(2.0)
        scaled = wc.Tensor4(inp.data * alpha)
        lhs = wc.conv_direct(scaled, flt, p)
        rhs = wc.Tensor4(wc.conv_direct(inp, flt, p).data * alpha)
        assert wc.max_rel_diff(lhs, rhs) <= 1e-4

    def test_filter_additivity(self, warm_kernels):
        rng = np.random.default_rng(43)
        inp, f1, p = make_case(rng, batch=1, c_in=2, c_out=3, h_f=3, w_f=3,
                               stride=2, h_in=9, w_in=9)
        f2 = wc.Tensor4(rng.standard_normal(f1.dims, dtype=np.float32))
        both = wc.Tensor4(f1.data + f2.data)
        lhs = wc.conv_direct(inp, both, p)
        rhs = wc.Tensor4(wc.conv_direct(inp, f1, p).data
                         + wc.conv_direct(inp, f2, p).data)
        assert wc.max_rel_diff(lhs, rhs) <= 1e-4

    def test_per_element_locality(self, warm_kernels):
        rng = np.random.default_rng(44)
        geo = dict(batch=1, c_in=2, c_out=2, h_f=3, w_f=2, stride=2, h_in=9, w_in=8)
        inp, flt, p = make_case(rng, **geo)
        m, n = 1, 2
        s = p.stride
        full = wc.conv_direct(inp, flt, p)
        masked = np.zeros_like(inp.data)
        masked[:, :, m * s:m * s + p.h_f, n * s:n * s + p.w_f] = \
            inp.data[:, :, m * s:m * s + p.h_f, n * s:n * s + p.w_f]
        local = wc.conv_direct(wc.Tensor4(masked), flt, p)
        assert (local.data[:, :, m, n] == full.data[:, :, m, n]).all()

    def test_worker_count_independence(self, warm_kernels):
        rng = np.random.default_rng(45)
        inp, flt, p = make_case(rng, batch=2, c_in=3, c_out=4, h_f=3, w_f=3,
                                stride=1, h_in=10, w_in=10)
        from winconv import parallel

        for fn in (wc.conv_direct, wc.conv_im2col_gemm, wc.conv_implicit_gemm,
                   wc.conv_im2win_basic, wc.conv_im2win_opt):
            outs = []
            for count in (1, 2, parallel.max_workers()):
                with parallel.worker_count(count):
                    outs.append(fn(inp, flt, p))
            assert outs[0] == outs[1] == outs[2]
