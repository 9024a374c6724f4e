"""AMAP: tiny binary container for one attribution map.

Layout: magic b"AMAP", u32 little-endian height, u32 little-endian width,
then H·W IEEE-754 float32 little-endian values, row-major.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import ShapeError

MAGIC = b"AMAP"


def write_amap(path: str | Path, values: np.ndarray) -> None:
    arr = np.asarray(values, dtype="<f4")
    if arr.ndim != 2:
        raise ShapeError(f"AMAP stores H×W maps, got shape {arr.shape}")
    h, w = arr.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", h, w))
        f.write(np.ascontiguousarray(arr).tobytes())


def read_amap(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not an AMAP file")
    h, w = struct.unpack("<II", raw[4:12])
    expected = 12 + 4 * h * w
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    return np.frombuffer(raw[12:], dtype="<f4").reshape(h, w).copy()
