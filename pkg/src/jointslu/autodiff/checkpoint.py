"""Checkpoint files.

Layout: the magic ``SLUF1\\n``, a UTF-8 JSON header mapping each array name
to ``{"shape", "byte_offset"}`` terminated by a NUL byte, then the raw
little-endian float64 payload.  Offsets count from the first payload byte.
Free-form metadata (model kind, config) rides in the header under
``__meta__``.
"""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

MAGIC = b"SLUF1\n"
META_KEY = "__meta__"


class CheckpointError(ValueError):
    pass


def encode(arrays: dict[str, np.ndarray], meta: dict | None = None) -> bytes:
    header: dict = {}
    chunks = []
    offset = 0
    for name in sorted(arrays):
        if name == META_KEY:
            raise CheckpointError(f"array name {META_KEY!r} is reserved")
        a = np.asarray(arrays[name], dtype="<f8")
        header[name] = {"shape": list(a.shape), "byte_offset": offset}
        chunks.append(a.tobytes())
        offset += a.nbytes
    if meta is not None:
        header[META_KEY] = meta
    text = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    if b"\x00" in text:
        raise CheckpointError("header may not contain NUL")
    return MAGIC + text + b"\x00" + b"".join(chunks)


def decode(blob: bytes) -> tuple[dict[str, np.ndarray], dict | None]:
    if not blob.startswith(MAGIC):
        raise CheckpointError("not a checkpoint: bad magic")
    end = blob.find(b"\x00", len(MAGIC))
    if end < 0:
        raise CheckpointError("unterminated header")
    header = json.loads(blob[len(MAGIC):end].decode("utf-8"))
    payload = memoryview(blob)[end + 1:]
    meta = header.pop(META_KEY, None)
    arrays = {}
    for name, entry in header.items():
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["byte_offset"]
        if start + 8 * count > len(payload):
            raise CheckpointError(f"{name}: payload truncated")
        arrays[name] = np.frombuffer(payload, dtype="<f8", count=count, offset=start).astype(np.float64).reshape(shape)
    return arrays, meta


def save(path: str | os.PathLike, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    Path(path).write_bytes(encode(arrays, meta))


def load(path: str | os.PathLike) -> tuple[dict[str, np.ndarray], dict | None]:
    return decode(Path(path).read_bytes())
