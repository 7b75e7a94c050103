from .reference import (
    GemmDims,
    conv_direct,
    conv_im2col_gemm,
    conv_im2win_basic,
    conv_implicit_gemm,
    gemm,
)
from .plan import TilePlan, default_plan
from .optimized import conv_im2win_opt

__all__ = [
    "GemmDims",
    "TilePlan",
    "conv_direct",
    "conv_im2col_gemm",
    "conv_im2win_basic",
    "conv_im2win_opt",
    "conv_implicit_gemm",
    "default_plan",
    "gemm",
]
