"""Binary checkpoint format (magic ``DTCK``), little-endian throughout.

Layout: magic | version u8 | config digest (32 bytes) | count u32, then per
parameter: name (u16 length + UTF-8), shape (u8 rank + u32 dims), f64 values.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .tensor import Parameter

MAGIC = b"DTCK"
VERSION = 1


class CheckpointError(Exception):
    pass


def save_checkpoint(path, params: list[Parameter], config_digest: bytes) -> None:
    if len(config_digest) != 32:
        raise ValueError("config digest must be 32 bytes")
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<B", VERSION)
    buf += config_digest
    buf += struct.pack("<I", len(params))
    for p in params:
        name = p.name.encode("utf-8")
        buf += struct.pack("<H", len(name)) + name
        buf += struct.pack("<B", p.data.ndim)
        for d in p.data.shape:
            buf += struct.pack("<I", d)
        buf += np.ascontiguousarray(p.data, dtype="<f8").tobytes()
    Path(path).write_bytes(bytes(buf))


def load_checkpoint(path, expected_digest: bytes | None = None) -> tuple[bytes, dict[str, np.ndarray]]:
    """Return (config digest, name -> float64 array); verifies digest when given."""
    raw = Path(path).read_bytes()
    off = 0

    def take(n, what):
        nonlocal off
        if off + n > len(raw):
            raise CheckpointError(f"truncated checkpoint: needed {n} bytes for {what} at offset {off}")
        piece = raw[off:off + n]
        off += n
        return piece

    if take(4, "magic") != MAGIC:
        raise CheckpointError("bad magic: not a DTCK checkpoint")
    version = take(1, "version")[0]
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    digest = bytes(take(32, "config digest"))
    if expected_digest is not None and digest != expected_digest:
        raise CheckpointError("checkpoint config digest does not match the supplied model config")
    (count,) = struct.unpack("<I", take(4, "parameter count"))
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2, "name length"))
        name = take(nlen, "name").decode("utf-8")
        rank = take(1, "rank")[0]
        shape = struct.unpack(f"<{rank}I", take(4 * rank, "shape")) if rank else ()
        n = int(np.prod(shape)) if shape else 1
        values = np.frombuffer(take(8 * n, f"values of {name}"), dtype="<f8").reshape(shape)
        out[name] = values.astype(np.float64)
    return digest, out
