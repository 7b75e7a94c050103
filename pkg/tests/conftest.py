import numpy as np
import pytest

import winconv as wc


def make_case(rng, *, batch, c_in, c_out, h_f, w_f, stride, h_in, w_in):
    """Seeded random operands for one convolution geometry."""
    inp = wc.Tensor4(rng.standard_normal((batch, c_in, h_in, w_in), dtype=np.float32))
    flt = wc.Tensor4(rng.standard_normal((c_out, c_in, h_f, w_f), dtype=np.float32))
    params = wc.ConvParams(c_in=c_in, c_out=c_out, h_f=h_f, w_f=w_f, stride=stride)
    return inp, flt, params


def random_geometry(rng, *, max_filter=7, max_stride=4, max_out=6):
    """Small random geometry with s in 1..max_stride and filters <= 7x7."""
    h_f = int(rng.integers(1, max_filter + 1))
    w_f = int(rng.integers(1, max_filter + 1))
    stride = int(rng.integers(1, max_stride + 1))
    h_in = h_f + stride * int(rng.integers(0, max_out))
    w_in = w_f + stride * int(rng.integers(0, max_out))
    return dict(
        batch=int(rng.integers(1, 3)),
        c_in=int(rng.integers(1, 4)),
        c_out=int(rng.integers(1, 5)),
        h_f=h_f,
        w_f=w_f,
        stride=stride,
        h_in=h_in,
        w_in=w_in,
    )


@pytest.fixture(scope="session")
def warm_kernels():
    """Compile every jitted kernel once so timed tests measure execution only."""
    rng = np.random.default_rng(123)
    inp, flt, params = make_case(rng, batch=1, c_in=2, c_out=3, h_f=2, w_f=2,
                                 stride=1, h_in=5, w_in=5)
    ref = wc.conv_direct(inp, flt, params)
    for fn in (wc.conv_im2col_gemm, wc.conv_implicit_gemm, wc.conv_im2win_basic):
        fn(inp, flt, params)
    for micro in (True, False):
        for vec in (True, False):
            for pf in (True, False):
                plan = wc.TilePlan(m_b=2, n_b=4, k_b=3, m_t=2, n_t=2,
                                   micro_kernel=micro, vectorized_load=vec,
                                   prefetch_double_buffer=pf)
                wc.conv_im2win_opt(inp, flt, params, plan)
    return ref
