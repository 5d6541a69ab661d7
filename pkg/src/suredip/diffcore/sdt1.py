"""SDT1 binary tensor container.

Layout: ``b"SDT1"``, u32 rank, ``rank`` x u64 extents, little-endian float64
payload in row-major order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"SDT1"


def dumps(arr) -> bytes:
    a = np.array(arr, dtype="<f8", order="C")
    head = MAGIC + struct.pack("<I", a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape)
    return head + a.tobytes(order="C")


def loads(buf: bytes) -> np.ndarray:
    if buf[:4] != MAGIC:
        raise ValueError("not an SDT1 file (bad magic)")
    (rank,) = struct.unpack_from("<I", buf, 4)
    shape = struct.unpack_from(f"<{rank}Q", buf, 8)
    offset = 8 + 8 * rank
    count = int(np.prod(shape, dtype=np.int64))
    if len(buf) - offset != 8 * count:
        raise ValueError(f"SDT1 payload has {len(buf) - offset} bytes, expected {8 * count}")
    return np.frombuffer(buf, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64)


def save(path, arr) -> None:
    Path(path).write_bytes(dumps(arr))


def load(path) -> np.ndarray:
    return loads(Path(path).read_bytes())
