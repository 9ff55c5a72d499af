"""Bit-exact CLF1 volume container.

Byte layout (normative, little-endian throughout):

    offset  size  field
    0       4     magic b"CLF1"
    4       1     version, must be 1
    5       1     dtype: 1 = float32, 2 = float64, 3 = int32 labels
    6       1     d: 2 or 3
    7       1     components: 1 (scalar / labels) or d (vector)
    8       4*d   dims, u32 per axis
    8+4d    ...   payload, component-major, C order

Each u32 dim must stay below 2**24, so its most significant byte is a
reserved zero byte; a header written big-endian puts payload bits there and
is rejected before any size arithmetic. Round trips are bitwise exact.
"""
from __future__ import annotations

import struct

import numpy as np

from .fields import Grid, ScalarField, VectorField
from .metrics import LabelVolume

__all__ = [
    "VolumeFormatError",
    "BadMagicError",
    "TruncatedPayloadError",
    "DtypeMismatchError",
    "read_volume",
    "write_volume",
]

MAGIC = b"CLF1"
VERSION = 1
_DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("<f8"), 3: np.dtype("<i4")}
_CODE_FOR = {np.dtype(np.float32): 1, np.dtype(np.float64): 2, np.dtype(np.int32): 3}
_MAX_DIM = 1 << 24


class VolumeFormatError(ValueError):
    """Malformed CLF1 container."""


class BadMagicError(VolumeFormatError):
    pass


class TruncatedPayloadError(VolumeFormatError):
    pass


class DtypeMismatchError(VolumeFormatError):
    pass


def write_volume(obj, path) -> None:
    """Serialize a ScalarField, VectorField, or LabelVolume."""
    if isinstance(obj, ScalarField):
        arrays = [obj.values]
        code = _CODE_FOR[np.dtype(obj.grid.dtype)]
    elif isinstance(obj, VectorField):
        arrays = [obj.data[i] for i in range(obj.grid.d)]
        code = _CODE_FOR[np.dtype(obj.grid.dtype)]
    elif isinstance(obj, LabelVolume):
        arrays = [obj.labels]
        code = 3
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    grid = obj.grid
    dtype = _DTYPE_CODES[code]
    header = MAGIC + struct.pack("<BBBB", VERSION, code, grid.d, len(arrays))
    header += struct.pack(f"<{grid.d}I", *grid.n)
    with open(path, "wb") as fh:
        fh.write(header)
        for arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype=dtype).tobytes(order="C"))


def read_volume(path, n_t: int = 4, dtype=None):
    """Read a CLF1 volume; returns ScalarField, VectorField, or LabelVolume.

    ``n_t`` seeds the grid's time-step count (the file stores geometry
    only). ``dtype`` optionally converts float payloads after reading.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 8 or raw[:4] != MAGIC:
        raise BadMagicError(f"{path}: not a CLF1 volume")
    version, code, d, components = struct.unpack("<BBBB", raw[4:8])
    if version != VERSION:
        raise VolumeFormatError(f"{path}: unsupported version {version}")
    if code not in _DTYPE_CODES:
        raise DtypeMismatchError(f"{path}: unknown dtype code {code}")
    if d not in (2, 3):
        raise VolumeFormatError(f"{path}: bad dimensionality {d}")
    if len(raw) < 8 + 4 * d:
        raise TruncatedPayloadError(f"{path}: header cut short")
    dim_bytes = raw[8 : 8 + 4 * d]
    # reserved (most significant) byte of each dim must be zero
    for i in range(d):
        if dim_bytes[4 * i + 3] != 0:
            raise VolumeFormatError(
                f"{path}: reserved dim byte set (byte-order mismatch or corrupt header)"
            )
    dims = struct.unpack(f"<{d}I", dim_bytes)
    if any(v >= _MAX_DIM for v in dims):
        raise VolumeFormatError(f"{path}: implausible dims {dims}")
    if components not in (1, d):
        raise VolumeFormatError(f"{path}: bad component count {components}")
    file_dtype = _DTYPE_CODES[code]
    count = components * int(np.prod(dims))
    payload = raw[8 + 4 * d :]
    if len(payload) != count * file_dtype.itemsize:
        raise TruncatedPayloadError(
            f"{path}: payload holds {len(payload)} bytes, expected {count * file_dtype.itemsize}"
        )
    data = np.frombuffer(payload, dtype=file_dtype).reshape(components, *dims)

    if code == 3:
        if components != 1:
            raise VolumeFormatError(f"{path}: label volumes must be scalar")
        grid = Grid(dims, n_t=n_t)
        return LabelVolume(grid, data[0].copy())
    grid_dtype = np.dtype(dtype) if dtype is not None else file_dtype.newbyteorder("=")
    grid = Grid(dims, n_t=n_t, dtype=np.dtype(grid_dtype))
    if components == 1:
        return ScalarField(grid, data[0].astype(grid.dtype))
    return VectorField(grid, data.astype(grid.dtype))
