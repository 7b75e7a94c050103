"""Exception types shared across the package."""


class WinconvError(Exception):
    """Base class for all errors raised by this package."""


class GeometryError(WinconvError):
    """Filter/stride geometry is incompatible with the input extents."""


class ShapeError(WinconvError):
    """Operand dimensions disagree with each other or with the contract."""


class FixtureFormatError(WinconvError):
    """A tensor fixture file is malformed (magic, version, dims, payload)."""


class PlanError(WinconvError):
    """A tile plan violates its divisibility or positivity invariants."""


class MemoryBudgetError(WinconvError):
    """A benchmark would materialize more bytes than the machine can hold."""

    def __init__(self, required_bytes: int, available_bytes: int):
        self.required_bytes = required_bytes
        self.available_bytes = available_bytes
        super().__init__(
            f"refusing to run: requires {required_bytes} bytes of tensor data "
            f"but only {available_bytes} are available"
        )
