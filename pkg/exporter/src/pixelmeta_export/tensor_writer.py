"""Writer for the interchange tensor format.

Layout: magic "PXT1", then little-endian u32 version (1), dtype code
(1 = f32, 2 = u16), rank (1..3), one u32 extent per axis, then the
row-major little-endian payload. Files are written to a temporary name and
renamed so consumers never observe a partial tensor.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .errors import SchemaError

MAGIC = b"PXT1"
VERSION = 1
_CODES = {"f": 1, "u": 2}
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<u2")}


def write_tensor(arr: np.ndarray, path: str | Path) -> None:
    arr = np.asarray(arr)
    if arr.dtype.kind not in _CODES:
        raise SchemaError(f"unsupported dtype {arr.dtype}, want float or unsigned")
    if not 1 <= arr.ndim <= 3:
        raise SchemaError(f"rank must be 1..3, got {arr.ndim}")
    if any(e < 1 for e in arr.shape):
        raise SchemaError(f"all extents must be >= 1, got {arr.shape}")
    dtype = np.dtype("<f4") if arr.dtype.kind == "f" else np.dtype("<u2")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<III", VERSION, _CODES[arr.dtype.kind], arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        f.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())
    os.replace(tmp, path)


def read_tensor(path: str | Path) -> np.ndarray:
    """Reader used for self-checks; the primary artifact is the authority."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise SchemaError(f"bad magic in {path}")
    version, code, rank = struct.unpack_from("<III", raw, 4)
    if version != VERSION or code not in _DTYPES or not 1 <= rank <= 3:
        raise SchemaError(f"bad header in {path}")
    shape = struct.unpack_from(f"<{rank}I", raw, 16)
    dtype = _DTYPES[code]
    count = int(np.prod(shape))
    offset = 16 + 4 * rank
    if len(raw) - offset != count * dtype.itemsize:
        raise SchemaError(f"payload length mismatch in {path}")
    return np.frombuffer(raw, dtype, count=count, offset=offset).reshape(shape).copy()
