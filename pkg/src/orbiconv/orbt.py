"""ORBT tensor file format.

Layout: magic "ORBT", u8 dtype code, u8 rank, rank x u32 little-endian
extents, then the row-major payload in little-endian byte order.
"""

from __future__ import annotations

import struct

import numpy as np

_MAGIC = b"ORBT"
_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i8")}
_CODE_FOR = {np.dtype("float32"): 0, np.dtype("float64"): 1,
             np.dtype("int64"): 2}


class OrbtFormatError(ValueError):
    pass


def save_tensor(path: str, arr: np.ndarray) -> None:
    a = np.ascontiguousarray(arr)
    if a.dtype not in _CODE_FOR:
        raise OrbtFormatError(f"unsupported dtype {a.dtype}")
    code = _CODE_FOR[a.dtype]
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<BB", code, a.ndim))
        f.write(struct.pack(f"<{a.ndim}I", *a.shape))
        f.write(a.astype(a.dtype.newbyteorder("<")).tobytes())


def load_tensor(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _MAGIC:
            raise OrbtFormatError(f"{path}: bad magic {magic!r}")
        code, rank = struct.unpack("<BB", f.read(2))
        if code not in _DTYPE_CODES:
            raise OrbtFormatError(f"{path}: unknown dtype code {code}")
        dims = struct.unpack(f"<{rank}I", f.read(4 * rank))
        dtype = _DTYPE_CODES[code]
        n = int(np.prod(dims)) if rank else 1
        payload = f.read()
    if len(payload) != n * dtype.itemsize:
        raise OrbtFormatError(f"{path}: truncated payload")
    return np.frombuffer(payload, dtype=dtype).reshape(dims).copy()
