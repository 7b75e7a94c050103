"""Blocking parameters for the tiled window-order kernel."""

from __future__ import annotations

from dataclasses import dataclass, replace

from ..errors import PlanError
from .reference import GemmDims


@dataclass(frozen=True)
class TilePlan:
    """Block extents (m_b, n_b, k_b), per-worker micro-tile (m_t, n_t),
    and the three optimization toggles.

    Disabling the micro-kernel forces a 1x1 micro-tile: each worker then
    owns a single output element, as in the basic kernel.
    """

    m_b: int
    n_b: int
    k_b: int
    m_t: int
    n_t: int
    micro_kernel: bool = True
    vectorized_load: bool = True
    prefetch_double_buffer: bool = True

    def __post_init__(self):
        if not self.micro_kernel:
            object.__setattr__(self, "m_t", 1)
            object.__setattr__(self, "n_t", 1)
        for name in ("m_b", "n_b", "k_b", "m_t", "n_t"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise PlanError(f"{name} must be a positive integer, got {value}")
        if self.m_b % self.m_t:
            raise PlanError(f"m_t={self.m_t} does not divide m_b={self.m_b}")
        if self.n_b % self.n_t:
            raise PlanError(f"n_t={self.n_t} does not divide n_b={self.n_b}")

    @property
    def workers_per_block(self) -> int:
        return (self.m_b // self.m_t) * (self.n_b // self.n_t)

    def with_toggles(self, **kwargs) -> "TilePlan":
        """Copy with toggles changed (used by the ablation harness)."""
        return replace(self, **kwargs)


def _round_up(value: int, multiple: int) -> int:
    return ((value + multiple - 1) // multiple) * multiple


def default_plan(dims: GemmDims) -> TilePlan:
    """Pick blocking for a problem size.

    Staging rows default to 128 elements and micro-tiles to 8 elements per
    vector load; everything clamps to the problem dims when they are
    smaller, and block extents prefer divisors of M to avoid padded tiles.
    """
    if min(dims.m, dims.n, dims.k) < 1:
        raise PlanError(f"dims must be positive, got {dims}")
    m_t = min(8, dims.m)
    n_t = min(8, dims.n)
    if dims.m <= 64:
        m_b = _round_up(dims.m, m_t)
    else:
        m_b = next((c for c in (64, 56, 48, 40, 32) if c % m_t == 0 and dims.m % c == 0), 64)
    n_b = _round_up(dims.n, n_t) if dims.n <= 128 else 128
    k_b = min(128, dims.k)
    return TilePlan(m_b=m_b, n_b=n_b, k_b=k_b, m_t=m_t, n_t=n_t)
