"""Single-tensor binary files.

Layout (all integers little-endian u32):

    bytes 0..3    magic "PXT1"
    bytes 4..7    format version, currently 1
    bytes 8..11   dtype code: 1 = f32, 2 = u16
    bytes 12..15  rank (1..3)
    then          one u32 extent per axis, row-major order
    then          raw payload, row-major, little-endian

A file holds exactly one tensor; trailing bytes are rejected.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import TensorFormatError

MAGIC = b"PXT1"
VERSION = 1

_DTYPE_BY_CODE = {1: np.dtype("<f4"), 2: np.dtype("<u2")}
_CODE_BY_KIND = {"f": 1, "u": 2}

_OFF_MAGIC = 0
_OFF_VERSION = 4
_OFF_DTYPE = 8
_OFF_RANK = 12
_OFF_EXTENTS = 16


def _storage_dtype(arr: np.ndarray) -> np.dtype:
    if arr.dtype.kind == "f":
        return np.dtype("<f4")
    if arr.dtype.kind == "u":
        if arr.dtype.itemsize > 2 and arr.size and arr.max() > np.iinfo(np.uint16).max:
            raise TensorFormatError("unsigned values exceed u16 range", _OFF_DTYPE)
        return np.dtype("<u2")
    raise TensorFormatError(f"unsupported dtype {arr.dtype}", _OFF_DTYPE)


def save_tensor(arr: np.ndarray, path: str | Path) -> None:
    """Write `arr` to `path`. Floats are stored as f32, unsigned ints as u16."""
    arr = np.asarray(arr)
    if not 1 <= arr.ndim <= 3:
        raise TensorFormatError(f"rank must be 1..3, got {arr.ndim}", _OFF_RANK)
    if any(e < 1 for e in arr.shape):
        raise TensorFormatError(f"all extents must be >= 1, got {arr.shape}", _OFF_EXTENTS)
    dtype = _storage_dtype(arr)
    payload = np.ascontiguousarray(arr, dtype=dtype)
    header = MAGIC + struct.pack(
        "<III", VERSION, _CODE_BY_KIND[dtype.kind], arr.ndim
    )
    extents = struct.pack(f"<{arr.ndim}I", *arr.shape)
    with open(path, "wb") as f:
        f.write(header)
        f.write(extents)
        f.write(payload.tobytes())


def load_tensor(path: str | Path) -> np.ndarray:
    """Read a tensor written by save_tensor. Inverse of it, bit-exact."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _OFF_EXTENTS:
        raise TensorFormatError(
            f"file too short for header: {len(raw)} bytes", len(raw)
        )
    if raw[:4] != MAGIC:
        raise TensorFormatError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}", _OFF_MAGIC)
    version, code, rank = struct.unpack_from("<III", raw, _OFF_VERSION)
    if version != VERSION:
        raise TensorFormatError(f"unknown version {version}", _OFF_VERSION)
    if code not in _DTYPE_BY_CODE:
        raise TensorFormatError(f"unknown dtype code {code}", _OFF_DTYPE)
    if not 1 <= rank <= 3:
        raise TensorFormatError(f"rank must be 1..3, got {rank}", _OFF_RANK)
    payload_off = _OFF_EXTENTS + 4 * rank
    if len(raw) < payload_off:
        raise TensorFormatError("truncated extent list", len(raw))
    shape = struct.unpack_from(f"<{rank}I", raw, _OFF_EXTENTS)
    if any(e < 1 for e in shape):
        raise TensorFormatError(f"all extents must be >= 1, got {shape}", _OFF_EXTENTS)
    dtype = _DTYPE_BY_CODE[code]
    expected = int(np.prod(shape)) * dtype.itemsize
    actual = len(raw) - payload_off
    if actual != expected:
        raise TensorFormatError(
            f"payload length mismatch: expected {expected} bytes, got {actual}",
            payload_off,
        )
    data = np.frombuffer(raw, dtype=dtype, count=int(np.prod(shape)), offset=payload_off)
    return data.reshape(shape).copy()
