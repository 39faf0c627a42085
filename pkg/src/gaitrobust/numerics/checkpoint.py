"""Binary parameter checkpoints (``SKW1``).

Layout, all little-endian: magic ``b"SKW1"``, u32 parameter count, then per
parameter a u16 name length, the UTF-8 name, a u8 rank, ``rank`` u32 dims and
the float64 values in row-major order.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"SKW1"


class CheckpointError(ValueError):
    pass


def dumps_params(params: Mapping[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", len(params)))
    for name, value in params.items():
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(value, dtype="<f8")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())
    return buf.getvalue()


def loads_params(data: bytes) -> dict[str, np.ndarray]:
    view = memoryview(data)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError(f"truncated checkpoint at byte {pos} (needed {n} more)")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != MAGIC:
        raise CheckpointError("bad magic, expected SKW1")
    (count,) = struct.unpack("<I", take(4))
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (n,) = struct.unpack("<H", take(2))
        name = bytes(take(n)).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        size = int(np.prod(dims, dtype=np.int64))
        out[name] = np.frombuffer(take(8 * size), dtype="<f8").astype(np.float64).reshape(dims)
    if pos != len(view):
        raise CheckpointError(f"{len(view) - pos} trailing bytes after last parameter")
    return out


def params_digest(params: Mapping[str, np.ndarray]) -> str:
    return hashlib.sha256(dumps_params(params)).hexdigest()


def save_checkpoint(path: str | Path, params: Mapping[str, np.ndarray],
                    meta: dict | None = None) -> None:
    """Write ``path`` (SKW1) and, when ``meta`` is given, ``path`` + ``.json``."""
    path = Path(path)
    path.write_bytes(dumps_params(params))
    if meta is not None:
        Path(str(path) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict | None]:
    path = Path(path)
    params = loads_params(path.read_bytes())
    side = Path(str(path) + ".json")
    meta = json.loads(side.read_text()) if side.exists() else None
    return params, meta
