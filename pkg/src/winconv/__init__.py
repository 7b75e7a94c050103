"""Window-order convolution: layouts, kernels, and a benchmark harness."""

from . import parallel  # must come first: sizes the worker pool before numba loads
from .errors import (
    FixtureFormatError,
    GeometryError,
    MemoryBudgetError,
    PlanError,
    ShapeError,
    WinconvError,
)
from .tensors import ConvParams, Mat2, Tensor4, max_rel_diff, output_dims
from .fixture_io import read_tensor, write_tensor
from .layouts import (
    Im2winTensor,
    filter_to_matrix,
    footprint_elems,
    im2col,
    im2win,
    im2win_gather,
    output_from_matrix,
)
from .kernels import (
    GemmDims,
    TilePlan,
    conv_direct,
    conv_im2col_gemm,
    conv_im2win_basic,
    conv_im2win_opt,
    conv_implicit_gemm,
    default_plan,
    gemm,
)
from .bench import (
    ALGORITHMS,
    BENCHMARKS,
    BenchConfig,
    BenchRecord,
    footprint_report,
    report_csv,
    run_ablation,
    run_bench,
)

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "BENCHMARKS",
    "BenchConfig",
    "BenchRecord",
    "ConvParams",
    "FixtureFormatError",
    "GemmDims",
    "GeometryError",
    "Im2winTensor",
    "Mat2",
    "MemoryBudgetError",
    "PlanError",
    "ShapeError",
    "Tensor4",
    "TilePlan",
    "WinconvError",
    "conv_direct",
    "conv_im2col_gemm",
    "conv_im2win_basic",
    "conv_im2win_opt",
    "conv_implicit_gemm",
    "default_plan",
    "filter_to_matrix",
    "footprint_elems",
    "footprint_report",
    "gemm",
    "im2col",
    "im2win",
    "im2win_gather",
    "max_rel_diff",
    "output_dims",
    "output_from_matrix",
    "parallel",
    "read_tensor",
    "report_csv",
    "run_ablation",
    "run_bench",
    "write_tensor",
]
