"""Standalone writer for the .lft local-feature tensor format.

Layout (all integers little-endian u32):

    "LFT1" | version | D | N | M | W | H | id_len | id bytes | D*N*M float32

W and H are the source image's original pixel dimensions, not the resized
input the network saw.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"LFT1"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4s7I")


def write_lft(
    path: str | Path,
    image_id: str,
    data: np.ndarray,
    original_width: int,
    original_height: int,
) -> None:
    data = np.ascontiguousarray(data, dtype=np.float32)
    if data.ndim != 3 or min(data.shape) < 1:
        raise ValueError(f"activation must be (D, N, M) with positive dims, got {data.shape}")
    if original_width < 1 or original_height < 1:
        raise ValueError("original pixel dimensions must be positive")
    if not np.isfinite(data).all():
        raise ValueError("activation contains non-finite values")
    depth, rows, cols = data.shape
    ident = image_id.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                MAGIC, FORMAT_VERSION, depth, rows, cols,
                original_width, original_height, len(ident),
            )
        )
        fh.write(ident)
        fh.write(data.astype("<f4", copy=False).tobytes())
