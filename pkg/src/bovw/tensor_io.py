"""Binary .lft format for dense local-feature tensors.

A tensor file decouples the search engine from whatever produced the
features. Layout (all integers little-endian u32):

    "LFT1" | version | D | N | M | W | H | id_len | id bytes | D*N*M float32
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .errors import FormatError, TruncationError, ValidationError

MAGIC = b"LFT1"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4s7I")


@dataclass(eq=False)
class FeatureTensor:
    """A D x N x M grid of local features for one image of W x H pixels."""

    image_id: str
    data: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 3:
            raise ValidationError(
                f"feature data must be 3-D (D, N, M), got shape {self.data.shape}"
            )
        if min(self.data.shape) < 1:
            raise ValidationError(f"all tensor dims must be >= 1, got {self.data.shape}")
        if self.width < 1 or self.height < 1:
            raise ValidationError(
                f"pixel dims must be >= 1, got W={self.width} H={self.height}"
            )
        if not np.isfinite(self.data).all():
            raise ValidationError("tensor payload contains non-finite values")

    @property
    def depth(self) -> int:
        return self.data.shape[0]

    @property
    def rows(self) -> int:
        return self.data.shape[1]

    @property
    def cols(self) -> int:
        return self.data.shape[2]


def write_tensor(tensor: FeatureTensor, sink: str | Path | BinaryIO) -> None:
    """Write `tensor` to a path or binary file object, bit-exactly."""
    if hasattr(sink, "write"):
        _write(tensor, sink)
    else:
        with open(sink, "wb") as fh:
            _write(tensor, fh)


def _write(tensor: FeatureTensor, fh: BinaryIO) -> None:
    ident = tensor.image_id.encode("utf-8")
    fh.write(
        _HEADER.pack(
            MAGIC,
            FORMAT_VERSION,
            tensor.depth,
            tensor.rows,
            tensor.cols,
            tensor.width,
            tensor.height,
            len(ident),
        )
    )
    fh.write(ident)
    fh.write(tensor.data.astype("<f4", copy=False).tobytes())


def read_tensor(source: str | Path | BinaryIO) -> FeatureTensor:
    """Read and validate a tensor; rejects anything malformed."""
    if hasattr(source, "read"):
        return _read(source)
    with open(source, "rb") as fh:
        return _read(fh)


def _read(fh: BinaryIO) -> FeatureTensor:
    header = fh.read(_HEADER.size)
    if len(header) < _HEADER.size:
        raise TruncationError("file too short for tensor header")
    magic, version, depth, rows, cols, width, height, id_len = _HEADER.unpack(header)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported tensor format version {version}")
    ident = fh.read(id_len)
    if len(ident) < id_len:
        raise TruncationError("file too short for declared id length")
    try:
        image_id = ident.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError("image id is not valid UTF-8") from exc
    if min(depth, rows, cols) < 1:
        raise FormatError(f"non-positive tensor dims D={depth} N={rows} M={cols}")
    count = depth * rows * cols
    payload = fh.read(4 * count)
    if len(payload) < 4 * count:
        raise TruncationError(
            f"payload holds {len(payload) // 4} floats, header declares {count}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(depth, rows, cols).copy()
    return FeatureTensor(image_id=image_id, data=data, width=width, height=height)
