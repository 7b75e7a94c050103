"""Tensor fixture files.

Layout (little-endian): magic "WCT4", u32 version = 1, four u64 extents,
then d0*d1*d2*d3 IEEE-754 binary32 values in row-major order. Round-trips
are bit-exact, including NaN payloads and signed zeros.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FixtureFormatError
from .tensors import Tensor4

MAGIC = b"WCT4"
VERSION = 1

# refuse absurd headers before attempting an allocation
_MAX_ELEMS = 1 << 40


def write_tensor(tensor: Tensor4, path: str | Path) -> None:
    d0, d1, d2, d3 = tensor.dims
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<4Q", d0, d1, d2, d3))
        fh.write(tensor.data.tobytes(order="C"))


def read_tensor(path: str | Path) -> Tensor4:
    with open(path, "rb") as fh:
        blob = fh.read()

    header = 4 + 4 + 32
    if len(blob) < header:
        raise FixtureFormatError(f"{path}: file shorter than the {header}-byte header")
    if blob[:4] != MAGIC:
        raise FixtureFormatError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise FixtureFormatError(f"{path}: unsupported version {version}")
    dims = struct.unpack_from("<4Q", blob, 8)
    if min(dims) < 1:
        raise FixtureFormatError(f"{path}: zero extent in dims {dims}")
    count = 1
    for d in dims:
        count *= d
        if count > _MAX_ELEMS:
            raise FixtureFormatError(f"{path}: dims {dims} overflow the element budget")

    payload = blob[header:]
    expected = count * 4
    if len(payload) < expected:
        raise FixtureFormatError(
            f"{path}: truncated payload, expected {expected} bytes, found {len(payload)}"
        )
    if len(payload) > expected:
        raise FixtureFormatError(
            f"{path}: {len(payload) - expected} trailing bytes after the payload"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(dims)
    return Tensor4(data.copy())
