"""Flat binary weight files.

Layout (all integers little-endian uint64):
  magic  8 bytes  b"MELBWGT1"
  version        1
  tensor count
then per tensor, in sorted-name order:
  name length, name bytes (utf-8), rank, dims..., raw float64 data.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import CorruptHeader
from .tensor import Tensor

MAGIC = b"MELBWGT1"
VERSION = 1


def save_weights(path: str | Path, weights: dict[str, Tensor]) -> None:
    parts = [MAGIC, struct.pack("<QQ", VERSION, len(weights))]
    for name in sorted(weights):
        arr = np.ascontiguousarray(weights[name].data, dtype="<f8")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<Q", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<Q", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_weights(path: str | Path, requires_grad: bool = True) -> dict[str, Tensor]:
    raw = Path(path).read_bytes()
    if len(raw) < 24 or raw[:8] != MAGIC:
        raise CorruptHeader(f"{path}: not a weight file")
    version, count = struct.unpack_from("<QQ", raw, 8)
    if version != VERSION:
        raise CorruptHeader(f"{path}: unsupported weight file version {version}")
    pos = 24
    out: dict[str, Tensor] = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<Q", raw, pos)
            pos += 8
            name = raw[pos : pos + name_len].decode("utf-8")
            pos += name_len
            (rank,) = struct.unpack_from("<Q", raw, pos)
            pos += 8
            dims = struct.unpack_from(f"<{rank}Q", raw, pos)
            pos += 8 * rank
            n = int(np.prod(dims)) if rank else 1
            arr = np.frombuffer(raw, dtype="<f8", count=n, offset=pos).reshape(dims)
            pos += 8 * n
            out[name] = Tensor(arr.copy(), requires_grad=requires_grad)
    except (struct.error, ValueError) as exc:
        raise CorruptHeader(f"{path}: truncated weight file") from exc
    return out
